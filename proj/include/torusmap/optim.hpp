#pragma once

#include "torusmap/energy.hpp"
#include "torusmap/torus.hpp"
#include "torusmap/types.hpp"

#include <algorithm>
#include <chrono>
#include <concepts>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

namespace torusmap {

enum class Method { PGM, PCG, RGD, RCG };

inline const char* to_string(Method m) {
    switch (m) {
        case Method::PGM: return "pgm";
        case Method::PCG: return "pcg";
        case Method::RGD: return "rgd";
        case Method::RCG: return "rcg";
    }
    return "?";
}

inline Method parse_method(const std::string& s) {
    if (s == "pgm") return Method::PGM;
    if (s == "pcg") return Method::PCG;
    if (s == "rgd") return Method::RGD;
    if (s == "rcg") return Method::RCG;
    throw ConfigError("unknown method '" + s + "'");
}

inline bool is_riemannian(Method m) { return m == Method::RGD || m == Method::RCG; }
inline bool is_conjugate(Method m) { return m == Method::PCG || m == Method::RCG; }

struct OptimizerConfig {
    Method method = Method::PCG;
    int max_iters = 100;
    double grad_tol = 1e-10;
    double c1 = 1e-4;
    double alpha_max = 1.0;
    int ls_max_evals = 30;
    double rel_tol = 1e-12;
    std::uint64_t seed = 0;
    int restart_every = 0;  ///< 0 means every n iterations (n = vertex count)
    bool force_beta_zero = false;
    bool record_time = true;

    void validate() const {
        if (!(c1 > 0.0 && c1 < 1.0)) throw ConfigError("c1 must lie in (0, 1)");
        if (!(alpha_max > 0.0) || !std::isfinite(alpha_max)) throw ConfigError("alpha_max must be positive");
        if (max_iters < 1) throw ConfigError("max_iters must be at least 1");
        if (ls_max_evals < 1) throw ConfigError("ls_max_evals must be at least 1");
        if (!(grad_tol >= 0.0)) throw ConfigError("grad_tol must be non-negative");
        if (restart_every < 0) throw ConfigError("restart_every must be non-negative");
    }
};

// ---------------------------------------------------------------------------
// line search

struct LineSearchResult {
    double alpha = 0.0;
    double value = 0.0;
    int evals = 0;
    bool converged = false;  ///< sufficient decrease reached
};

/// Backtracking on phi(alpha) from alpha_max: the first reduction uses the
/// minimizer of the quadratic through phi(0), phi'(0), phi(alpha), later ones
/// the cubic through the last two trials, each safeguarded to
/// [0.1 alpha, 0.5 alpha]. Trials that throw or return non-finite values are
/// halved. Without sufficient decrease after max_evals, the best trial seen
/// is returned with converged = false.
template <class Phi>
LineSearchResult line_search(Phi&& phi, double phi0, double dphi0, double alpha_max, double c1, int max_evals) {
    if (!(dphi0 < 0.0)) throw NotDescent("search direction is not a descent direction (phi'(0) = " + std::to_string(dphi0) + ")");
    LineSearchResult best{0.0, phi0, 0, false};
    double alpha = alpha_max;
    double prev_alpha = 0.0;
    double prev_value = 0.0;
    bool have_prev = false;
    for (int k = 0; k < max_evals; ++k) {
        double value = std::numeric_limits<double>::quiet_NaN();
        try {
            value = phi(alpha);
        } catch (const Error&) {
        }
        best.evals = k + 1;
        if (!std::isfinite(value)) {
            alpha *= 0.5;
            have_prev = false;
            continue;
        }
        if (value < best.value) {
            best.alpha = alpha;
            best.value = value;
        }
        if (value <= phi0 + c1 * alpha * dphi0) return {alpha, value, k + 1, true};
        double next;
        if (!have_prev) {
            next = -dphi0 * alpha * alpha / (2.0 * (value - phi0 - dphi0 * alpha));
        } else {
            const double r1 = value - phi0 - dphi0 * alpha;
            const double r2 = prev_value - phi0 - dphi0 * prev_alpha;
            const double den = alpha - prev_alpha;
            const double a = (r1 / (alpha * alpha) - r2 / (prev_alpha * prev_alpha)) / den;
            const double b = (-prev_alpha * r1 / (alpha * alpha) + alpha * r2 / (prev_alpha * prev_alpha)) / den;
            if (a == 0.0) {
                next = -dphi0 / (2.0 * b);
            } else {
                const double disc = b * b - 3.0 * a * dphi0;
                next = disc < 0.0 ? 0.5 * alpha : (-b + std::sqrt(disc)) / (3.0 * a);
            }
        }
        if (!std::isfinite(next)) next = 0.5 * alpha;
        prev_alpha = alpha;
        prev_value = value;
        have_prev = true;
        alpha = std::clamp(next, 0.1 * alpha, 0.5 * alpha);
    }
    return best;
}

// ---------------------------------------------------------------------------
// retraction derivative

/// d/dalpha of Pi(x + alpha d) for one row.
inline Vec3 retraction_derivative(const Vec3& x, const Vec3& d, double alpha, const TorusShape& shape) {
    const Vec3 y = x + alpha * d;
    const double A = d.x() * y.x() + d.y() * y.y();
    const double B = std::hypot(y.x(), y.y());
    if (B * B < kSingularityTol) throw AxisSingularity("retraction derivative undefined on the z-axis");
    const double C = B - shape.R();
    const double D = y.z();
    const double G = std::hypot(C, D);
    if (G * G < kSingularityTol) throw CoreSingularity("retraction derivative undefined on the core circle");
    const double H = (A * C / B + d.z() * D) / (G * G * G);

    const double cos_t = y.x() / B;
    const double sin_t = y.y() / B;
    const double cos_p = C / G;
    const double d_cos_t = d.x() / B - y.x() * A / (B * B * B);
    const double d_sin_t = d.y() / B - y.y() * A / (B * B * B);
    const double d_cos_p = A / (B * G) - C * H;
    const double d_sin_p = d.z() / G - D * H;
    const double rho = shape.R() + shape.r() * cos_p;
    return {rho * d_cos_t + shape.r() * cos_t * d_cos_p, rho * d_sin_t + shape.r() * sin_t * d_cos_p,
            shape.r() * d_sin_p};
}

inline Points retraction_derivative_rows(const Points& x, const Points& d, double alpha, const TorusShape& shape) {
    Points out(x.rows(), 3);
    for (Eigen::Index i = 0; i < x.rows(); ++i) out.row(i) = retraction_derivative(x.row(i), d.row(i), alpha, shape);
    return out;
}

enum class SlopeMode { Embedded, Retracted };

/// phi'(0) of the line search: trace(grad^T D) for the straight path, or
/// trace(grad^T psi'(0)) when the path is retracted row by row.
inline double phi_prime_zero(const Points& gradient, const Points& f, const Points& direction, const TorusShape& shape,
                             SlopeMode mode) {
    if (mode == SlopeMode::Embedded) return (gradient.array() * direction.array()).sum();
    return (gradient.array() * retraction_derivative_rows(f, direction, 0.0, shape).array()).sum();
}

/// Fletcher-Reeves ratio ||g_new||^2 / ||g_old||^2 from Frobenius norms.
inline double fletcher_reeves(double new_norm, double old_norm) { return (new_norm * new_norm) / (old_norm * old_norm); }

inline double fletcher_reeves(const Points& g_new, const Points& g_old) {
    return g_new.squaredNorm() / g_old.squaredNorm();
}

// ---------------------------------------------------------------------------
// trace

struct IterationRecord {
    int iter = 0;
    double E = 0.0;
    double grad_norm = 0.0;
    double alpha = 0.0;
    double beta = 0.0;
    double time_ms = 0.0;
    double extra = 0.0;
};

struct IterationTrace {
    std::vector<IterationRecord> rows;
    std::string status;
    std::string extra_name;  ///< empty when there is no extra column

    std::string csv() const {
        std::ostringstream out;
        out << "iter,E,grad_norm,alpha,beta,time_ms";
        if (!extra_name.empty()) out << ',' << extra_name;
        out << '\n';
        char buf[64];
        auto num = [&](double v) {
            std::snprintf(buf, sizeof buf, "%.17g", v);
            out << ',' << buf;
        };
        for (const auto& r : rows) {
            out << r.iter;
            num(r.E);
            num(r.grad_norm);
            num(r.alpha);
            num(r.beta);
            num(r.time_ms);
            if (!extra_name.empty()) num(r.extra);
            out << '\n';
        }
        return out.str();
    }

    void write_csv(const std::string& path) const {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw IoError("cannot write '" + path + "'");
        out << csv();
    }

    double final_energy() const { return rows.empty() ? std::nan("") : rows.back().E; }
};

struct SolveResult {
    Points f;
    IterationTrace trace;
};

/// Optional per-iteration scalar recorded as an extra trace column.
struct TraceMonitor {
    std::string name;
    std::function<double(const Points&)> fn;
};

// ---------------------------------------------------------------------------
// solvers

/// Minimizes obj over maps into the torus with the configured method.
/// Objective must provide value(f) and evaluate(f) -> Evaluation.
///
/// PGM/PCG search along Pi(f + alpha d) with d built from the Euclidean
/// gradient; RGD/RCG use the tangent-projected gradient and measure the slope
/// through the retraction. CG directions use Fletcher-Reeves and fall back to
/// steepest descent when not descent or every restart_every iterations.
template <class T>
concept SmoothObjective = requires(const T& o, const Points& f) {
    { o.value(f) } -> std::convertible_to<double>;
    { o.evaluate(f) } -> std::convertible_to<Evaluation>;
};

template <SmoothObjective Objective>
SolveResult solve(const Objective& obj, const Points& f0, const TorusShape& shape, const OptimizerConfig& cfg,
                  const TraceMonitor& monitor = {}) {
    cfg.validate();
    if (max_manifold_residual(f0, shape) > 1e-9) throw NotOnManifold("initial map is not on the torus");
    using clock = std::chrono::steady_clock;
    const auto start = clock::now();
    auto elapsed = [&] {
        return cfg.record_time ? std::chrono::duration<double, std::milli>(clock::now() - start).count() : 0.0;
    };
    const bool riem = is_riemannian(cfg.method);
    const bool conj = is_conjugate(cfg.method);
    const int restart_every = cfg.restart_every > 0 ? cfg.restart_every : static_cast<int>(f0.rows());
    const SlopeMode mode = riem ? SlopeMode::Retracted : SlopeMode::Embedded;

    SolveResult res;
    res.f = f0;
    res.trace.extra_name = monitor.fn ? monitor.name : std::string();
    auto extra = [&](const Points& f) { return monitor.fn ? monitor.fn(f) : 0.0; };

    Evaluation ev = obj.evaluate(res.f);
    Points g = riem ? project_tangents(ev.gradient, res.f, shape) : ev.gradient;
    Points d = -g;
    res.trace.rows.push_back({0, ev.value, g.norm(), 0.0, 0.0, elapsed(), extra(res.f)});
    res.trace.status = "max_iters";

    int since_restart = 0;
    for (int k = 1; k <= cfg.max_iters; ++k) {
        if (g.norm() < cfg.grad_tol) {
            res.trace.status = "grad_tol";
            break;
        }
        double slope = phi_prime_zero(ev.gradient, res.f, d, shape, mode);
        if (!(slope < 0.0) && conj) {
            d = -g;
            slope = phi_prime_zero(ev.gradient, res.f, d, shape, mode);
        }
        if (!(slope < 0.0)) {
            res.trace.status = "no_descent";
            break;
        }
        const Points& fk = res.f;
        auto phi = [&](double a) { return obj.value(project_points(fk + a * d, shape)); };
        LineSearchResult ls = line_search(phi, ev.value, slope, cfg.alpha_max, cfg.c1, cfg.ls_max_evals);
        if (!ls.converged && conj && since_restart > 0) {
            d = -g;
            slope = phi_prime_zero(ev.gradient, res.f, d, shape, mode);
            ls = line_search(phi, ev.value, slope, cfg.alpha_max, cfg.c1, cfg.ls_max_evals);
            since_restart = 0;
        }
        if (!(ls.value < ev.value)) {
            res.trace.status = "line_search_failed";
            break;
        }
        Points f_new = project_points(res.f + ls.alpha * d, shape);
        Evaluation ev_new = obj.evaluate(f_new);
        Points g_new = riem ? project_tangents(ev_new.gradient, f_new, shape) : ev_new.gradient;

        double beta = 0.0;
        Points d_new;
        ++since_restart;
        if (conj && !cfg.force_beta_zero && since_restart < restart_every) {
            beta = fletcher_reeves(g_new, g);
            const Points carried = riem ? transport_rows(d, res.f, f_new, shape) : d;
            d_new = -g_new + beta * carried;
            const double s = riem ? (g_new.array() * d_new.array()).sum()
                                  : (ev_new.gradient.array() * d_new.array()).sum();
            if (!(s < 0.0)) {
                beta = 0.0;
                d_new = -g_new;
                since_restart = 0;
            }
        } else {
            d_new = -g_new;
            since_restart = 0;
        }

        const double rel = (ev.value - ev_new.value) / std::max(std::abs(ev.value), 1e-300);
        res.f = std::move(f_new);
        ev = std::move(ev_new);
        g = std::move(g_new);
        d = std::move(d_new);
        res.trace.rows.push_back({k, ev.value, g.norm(), ls.alpha, beta, elapsed(), extra(res.f)});
        if (rel < cfg.rel_tol) {
            res.trace.status = "stagnation";
            break;
        }
    }
    return res;
}

/// The area-preserving parameterization problem on a surface.
inline SolveResult solve(const FaceDomain& domain, const Points& f0, const TorusShape& shape,
                         const OptimizerConfig& cfg) {
    return solve(AreaObjective(domain), f0, shape, cfg);
}

}  // namespace torusmap
