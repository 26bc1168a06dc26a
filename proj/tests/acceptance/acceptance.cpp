#include <torusmap/torusmap.hpp>

#include "oracles.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <sys/wait.h>

using namespace torusmap;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool ok = true;
    std::string detail;
};

void check(Outcome& o, bool cond, const std::string& what) {
    if (!cond) {
        o.ok = false;
        o.detail += (o.detail.empty() ? "" : "; ") + what;
    }
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

OptimizerConfig config(Method m, int iters) {
    OptimizerConfig c;
    c.method = m;
    c.max_iters = iters;
    c.record_time = false;
    return c;
}

// ---------------------------------------------------------------------------

Outcome nonnegativity() {
    Outcome o;
    const TorusShape shape;
    auto [s, id] = make_torus_grid(2.0, 1.0, 16, 16);
    const double area = s.total_area();
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> amp(0.005, 0.4);
    double worst = INFINITY;
    for (int k = 0; k < 1000; ++k) {
        const Points f = jitter_on_torus(id, shape, amp(rng) * shape.r(), 1000 + static_cast<std::uint64_t>(k));
        worst = std::min(worst, objective(s, f).objective);
    }
    check(o, worst >= -1e-10 * area, "min E " + fmt(worst));
    double zero = 0.0;
    for (double c : {1.0, 0.25, 3.0, 17.5}) zero = std::max(zero, std::abs(objective(s, c * id).objective));
    check(o, zero < 1e-10 * area, "identity |E| " + fmt(zero));
    o.detail = o.ok ? "min E over 1000 maps " + fmt(worst) + ", max |E| at scaled identity " + fmt(zero) : o.detail;
    return o;
}

Outcome gradient_fidelity() {
    Outcome o;
    const TorusShape shape;
    auto [s, id] = make_torus_grid(2.0, 1.0, 16, 16);
    const FaceDomain d(s);
    const auto bench = registration_benchmark();
    const Points g_at_q = gather_targets(bench.g, bench.landmarks);
    double worst[4] = {0, 0, 0, 0};
    for (std::uint64_t k = 0; k < 3; ++k) {
        const Points f = jitter_on_torus(id, shape, 0.1, 77 + k);
        worst[0] = std::max(worst[0], oracle::rel_error(grad_objective(d, f),
                                                        oracle::fd_gradient([&](const Points& x) { return objective(d, x).objective; }, f)));
        worst[1] = std::max(worst[1], oracle::rel_error(grad_area(d, f),
                                                        oracle::fd_gradient([&](const Points& x) { return image_area(d, x); }, f)));
        worst[2] = std::max(worst[2],
                            oracle::rel_error(registration_gradient(d, f, g_at_q, bench.landmarks),
                                              oracle::fd_gradient(
                                                  [&](const Points& x) {
                                                      return registration_objective(d, x, g_at_q, bench.landmarks);
                                                  },
                                                  f)));
        // psi(alpha) = E(R_f(alpha xi)) along a tangent descent direction
        const Points xi = -project_tangents(grad_objective(d, f), f, shape);
        const double alpha = 0.05 + 0.1 * static_cast<double>(k);
        auto psi = [&](double a) { return objective(d, retract_rows(f, a * xi, shape)).objective; };
        const Points fa = retract_rows(f, alpha * xi, shape);
        const double analytic = (grad_objective(d, fa).array() *
                                 retraction_derivative_rows(f, xi, alpha, shape).array()).sum();
        const double h = 1e-6;
        const double fd = (psi(alpha + h) - psi(alpha - h)) / (2.0 * h);
        worst[3] = std::max(worst[3], std::abs(analytic - fd) / std::abs(fd));
    }
    const char* names[4] = {"grad E", "grad A", "grad E_R", "psi'"};
    for (int i = 0; i < 4; ++i) check(o, worst[i] < 1e-6, std::string(names[i]) + " rel err " + fmt(worst[i]));
    if (o.ok) {
        o.detail = "rel errors: grad E " + fmt(worst[0]) + ", grad A " + fmt(worst[1]) + ", grad E_R " +
                   fmt(worst[2]) + ", psi' " + fmt(worst[3]);
    }
    return o;
}

Outcome torus_oracle() {
    Outcome o;
    const TorusShape shape;
    const oracle::NearestPoint nearest(2.0, 1.0);
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> box(-3.5, 3.5), zbox(-1.8, 1.8), ang(0.0, 2.0 * std::numbers::pi),
        comp(-1.0, 1.0);
    double proj = 0.0;
    for (int k = 0; k < 100;) {
        const Vec3 q(box(rng), box(rng), zbox(rng));
        const double rho = std::hypot(q.x(), q.y());
        if (rho < 0.2 || std::hypot(rho - 2.0, q.z()) < 0.2) continue;
        proj = std::max(proj, (project_point(q, shape) - nearest(q)).norm());
        ++k;
    }
    check(o, proj < 1e-6, "projection error " + fmt(proj));
    double inner = 0.0, normal = 0.0;
    for (int k = 0; k < 1000; ++k) {
        const double tx = ang(rng), px = ang(rng), ty = ang(rng), py = ang(rng);
        const Vec3 x = nearest.point(tx, px), y = nearest.point(ty, py);
        // tangent basis at x from torus coordinates
        const Vec3 et(-std::sin(tx), std::cos(tx), 0.0);
        const Vec3 ep = oracle::torus_normal(tx, px).cross(et);
        const Vec3 a = comp(rng) * et + comp(rng) * ep;
        const Vec3 b = comp(rng) * et + comp(rng) * ep;
        const Vec3 ta = transport(a, x, y, shape), tb = transport(b, x, y, shape);
        inner = std::max(inner, std::abs(ta.dot(tb) - a.dot(b)));
        const Vec3 n = oracle::torus_normal(ty, py);
        normal = std::max({normal, std::abs(ta.dot(n)), std::abs(tb.dot(n))});
    }
    check(o, inner < 1e-12, "inner product drift " + fmt(inner));
    check(o, normal < 1e-11, "normal component " + fmt(normal));
    if (o.ok) o.detail = "projection " + fmt(proj) + ", inner drift " + fmt(inner) + ", normal " + fmt(normal);
    return o;
}

Outcome optimizer_monotone(std::vector<double>& finals) {
    Outcome o;
    const auto b = jittered_torus_benchmark();
    const FaceDomain d(*b.surface);
    const double e0 = objective(d, b.f0).objective;
    std::vector<SolveResult> runs;
    for (Method m : {Method::PGM, Method::PCG, Method::RGD, Method::RCG}) {
        SolveResult r = solve(d, b.f0, b.shape, config(m, 100));
        bool monotone = true;
        for (std::size_t k = 1; k < r.trace.rows.size(); ++k) monotone &= r.trace.rows[k].E <= r.trace.rows[k - 1].E;
        check(o, monotone, std::string(to_string(m)) + " trace increases");
        check(o, r.trace.final_energy() <= e0 / 10.0, std::string(to_string(m)) + " final E " + fmt(r.trace.final_energy()));
        finals.push_back(r.trace.final_energy());
        runs.push_back(std::move(r));
    }
    for (auto [cg, gd] : {std::pair{Method::PCG, 0}, std::pair{Method::RCG, 2}}) {
        OptimizerConfig c = config(cg, 100);
        c.force_beta_zero = true;
        const SolveResult z = solve(d, b.f0, b.shape, c);
        check(o, z.f == runs[static_cast<std::size_t>(gd)].f && z.trace.csv() == runs[static_cast<std::size_t>(gd)].trace.csv(),
              std::string(to_string(cg)) + " with beta = 0 differs from its gradient method");
    }
    if (o.ok) {
        o.detail = "E0 " + fmt(e0) + " -> pgm " + fmt(finals[0]) + ", pcg " + fmt(finals[1]) + ", rgd " +
                   fmt(finals[2]) + ", rcg " + fmt(finals[3]);
    }
    return o;
}

Outcome cg_advantage(const std::vector<double>& finals) {
    Outcome o;
    if (finals.size() != 4) {
        check(o, false, "optimizer runs unavailable");
        return o;
    }
    check(o, finals[1] <= 1.05 * finals[0], "pcg " + fmt(finals[1]) + " > pgm " + fmt(finals[0]));
    check(o, finals[3] <= 1.05 * finals[2], "rcg " + fmt(finals[3]) + " > rgd " + fmt(finals[2]));
    if (o.ok) o.detail = "pcg/pgm " + fmt(finals[1] / finals[0]) + ", rcg/rgd " + fmt(finals[3] / finals[2]);
    return o;
}

// Cotangent Poisson residual of omega recomputed from the vertex positions.
double poisson_residual(const SimplicialSurface& s, const OneForm& omega) {
    std::map<std::pair<int, int>, double> w;
    for (int t = 0; t < s.face_count(); ++t) {
        const Face& f = s.face(t);
        Vec3 c[3];
        for (int k = 0; k < 3; ++k) {
            c[k] = s.vertices().row(f[k]);
            if (const auto& lat = s.lattice()) {
                const auto& sh = lat->shifts[static_cast<std::size_t>(t)][static_cast<std::size_t>(k)];
                c[k] += sh[0] * lat->t1 + sh[1] * lat->t2;
            }
        }
        for (int k = 0; k < 3; ++k) {
            const Vec3 a = c[(k + 1) % 3] - c[k];
            const Vec3 b = c[(k + 2) % 3] - c[k];
            const double cot = a.dot(b) / a.cross(b).norm();
            const int i = std::min(f[(k + 1) % 3], f[(k + 2) % 3]), j = std::max(f[(k + 1) % 3], f[(k + 2) % 3]);
            w[{i, j}] += 0.5 * cot;
        }
    }
    std::vector<double> div(static_cast<std::size_t>(s.vertex_count()), 0.0);
    double wmax = 0.0;
    for (const auto& [e, we] : w) {
        const double v = omega.along(s, e.first, e.second);
        div[static_cast<std::size_t>(e.first)] += we * v;
        div[static_cast<std::size_t>(e.second)] -= we * v;
        wmax = std::max(wmax, std::abs(we));
    }
    double worst = 0.0;
    for (double x : div) worst = std::max(worst, std::abs(x));
    return worst / wmax;
}

Outcome fundamental_domain() {
    Outcome o;
    const SimplicialSurface s = make_flat_torus_grid(16, 16);
    LoopBasis loops;
    for (int i = 0; i < 16; ++i) loops.gamma1.push_back(i);
    for (int j = 0; j < 16; ++j) loops.gamma2.push_back(16 * j);
    const DomainComputation dc = compute_fundamental_domain(s, normalize_loops(s, loops));
    const double res = std::max(poisson_residual(s, dc.harmonic1.omega), poisson_residual(s, dc.harmonic2.omega));
    check(o, res < 1e-10, "Poisson residual " + fmt(res));
    // periods of zeta1 along both loops as vectors of the plane
    const auto p1 = period(s, dc.zeta1, dc.loops.gamma1), p2 = period(s, dc.zeta1, dc.loops.gamma2);
    const double det = std::abs(p1.real() * p2.imag() - p1.imag() * p2.real());
    check(o, det > 1e-6, "period matrix determinant " + fmt(det));
    // Euler characteristic of the cut mesh counted directly
    const auto& faces = dc.domain.faces;
    std::set<std::pair<int, int>> edges;
    for (const Face& f : faces)
        for (int k = 0; k < 3; ++k) edges.insert(std::minmax(f[k], f[(k + 1) % 3]));
    const long chi = static_cast<long>(dc.domain.coords.rows()) - static_cast<long>(edges.size()) +
                     static_cast<long>(faces.size());
    check(o, chi == 1, "cut mesh chi " + std::to_string(chi));
    const Vec2 w1 = dc.domain.w1, w2 = dc.domain.w2;
    const double h = w2.y();
    check(o, (w1 - Vec2(1.0, 0.0)).norm() < 1e-12, "w1 = (" + fmt(w1.x()) + ", " + fmt(w1.y()) + ")");
    check(o, h > 0.0 && (w2 - Vec2(0.0, h)).norm() < 1e-6, "w2 off axis by " + fmt(std::abs(w2.x())));
    if (o.ok) o.detail = "residual " + fmt(res) + ", |det| " + fmt(det) + ", chi 1, h " + fmt(h);
    return o;
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(TORUSMAP_CLI) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Outcome end_to_end() {
    Outcome o;
#ifndef TORUSMAP_CLI
    check(o, false, "command-line tool not built");
    return o;
#else
    const fs::path root = fs::temp_directory_path() / "torusmap_acceptance";
    fs::remove_all(root);
    const fs::path a = root / "a", b = root / "b";
    int code = run_cli("parameterize --generate-torus 16 16 --method pcg --out '" + a.string() + "'");
    check(o, code == 0, "first run exit " + std::to_string(code));
    if (!o.ok) return o;
    code = run_cli("parameterize --from-manifest '" + (a / "manifest.json").string() + "' --out '" + b.string() + "'");
    check(o, code == 0, "rerun exit " + std::to_string(code));
    if (!o.ok) return o;
    const auto manifest = nlohmann::json::parse(slurp(a / "manifest.json"));
    const auto& report = manifest["results"][0]["report"];
    const int folds = report["folds"].get<int>();
    const double sd = report["sd_over_mean"].get<double>();
    check(o, folds == 0, std::to_string(folds) + " folds");
    check(o, sd < 0.05, "sd_over_mean " + fmt(sd));
    bool same = slurp(a / "manifest.json") == slurp(b / "manifest.json");
    for (const auto& f : manifest["outputs"]) same &= slurp(a / f.get<std::string>()) == slurp(b / f.get<std::string>());
    check(o, same, "rerun output differs");
    if (o.ok) o.detail = "folds 0, sd_over_mean " + fmt(sd) + ", rerun byte-identical";
    return o;
#endif
}

Outcome registration() {
    Outcome o;
    const auto b = registration_benchmark(16, 5, 0.2);
    const SolveResult r = register_maps(*b.surface, b.f0, b.g, b.landmarks, b.shape, config(Method::PCG, 100));
    // residual recomputed from the maps
    auto residual = [&](const Points& f) {
        double sum = 0.0;
        for (const auto& [p, q] : b.landmarks.pairs) sum += (f.row(p) - b.g.row(q)).squaredNorm();
        return std::sqrt(sum);
    };
    const double before = residual(b.f0), after = residual(r.f);
    check(o, after * 10.0 <= before, "residual " + fmt(before) + " -> " + fmt(after));
    const Points phi = compose_inverse(r.f, *b.surface, b.g, b.shape);
    const auto snaps = morph(b.surface->vertices(), phi, default_morph_times());
    check(o, snaps.front().t == 0.0 && snaps.front().H == b.surface->vertices(), "H(v, 0) != v");
    check(o, snaps.back().t == 1.0 && snaps.back().H == phi, "H(v, 1) != Phi(v)");
    if (o.ok) o.detail = "residual " + fmt(before) + " -> " + fmt(after) + " (x" + fmt(before / after) + "), morph endpoints exact";
    return o;
}

}  // namespace

int main() {
    struct Criterion {
        int id;
        const char* name;
        double budget_s;
        std::function<Outcome()> run;
    };
    std::vector<double> finals;
    const std::vector<Criterion> criteria{
        {1, "energy nonnegativity", 30, nonnegativity},
        {2, "gradient fidelity", 60, gradient_fidelity},
        {3, "torus geometry oracle", 60, torus_oracle},
        {4, "optimizer monotonicity", 120, [&] { return optimizer_monotone(finals); }},
        {5, "conjugate gradient advantage", 120, [&] { return cg_advantage(finals); }},
        {6, "fundamental domain", 30, fundamental_domain},
        {7, "end-to-end pipeline", 120, end_to_end},
        {8, "registration", 120, registration},
    };
    int failures = 0;
    for (const auto& c : criteria) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o.ok = false;
            o.detail = std::string("exception: ") + e.what();
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (secs > c.budget_s) check(o, false, "took " + fmt(secs) + " s");
        failures += o.ok ? 0 : 1;
        std::printf("%s %d %s: %s [%.1f s]\n", o.ok ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(), secs);
        std::fflush(stdout);
    }
    return failures == 0 ? 0 : 1;
}
