#include <torusmap/torusmap.hpp>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#ifndef TORUSMAP_VERSION
#define TORUSMAP_VERSION "dev"
#endif

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace torusmap;

namespace {

constexpr int kExitInput = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitInternal = 1;

int exit_code_for(const Error& e) {
    static const std::set<std::string> input{
        "IoError",   "ParseError",     "TopologyError",     "GenusError",    "DegenerateFaceError",
        "LoopError", "NotSimpleError", "IndependenceError", "LandmarkError", "ConfigError",
        "InvalidShape", "NotOnManifold"};
    return input.contains(e.kind()) ? kExitInput : kExitNumerical;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out << text;
    if (!out) throw IoError("failed while writing '" + path.string() + "'");
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

json read_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "'");
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw ParseError("'" + path + "': " + e.what());
    }
}

std::string absolute_path(const std::string& p) { return p.empty() ? p : fs::absolute(p).lexically_normal().string(); }

double elapsed_ms(std::chrono::steady_clock::time_point since) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - since).count();
}

/// Collects emitted files (relative to the output directory) and timings.
class Run {
public:
    Run(fs::path out, bool timings) : out_(std::move(out)), timings_(timings) {}

    fs::path path(const std::string& name) {
        files_.push_back(name);
        return out_ / name;
    }

    void time(const std::string& stage, std::chrono::steady_clock::time_point since) {
        if (timings_) stages_[stage] = elapsed_ms(since);
    }

    void warn(const std::vector<std::string>& w) { warnings_.insert(warnings_.end(), w.begin(), w.end()); }

    /// Writes manifest.json after checking that every listed file exists.
    void finish(const std::string& command, const json& config, json results) {
        for (const auto& f : files_) {
            if (!fs::exists(out_ / f)) throw IoError("expected output '" + f + "' was not written");
        }
        json m;
        m["schema_version"] = 1;
        m["tool"] = {{"name", "torusmap"}, {"version", TORUSMAP_VERSION}};
        m["command"] = command;
        m["config"] = config;
        m["formats"] = {{"trace_csv", "iter,E,grad_norm,alpha,beta,time_ms[,extra]/1"},
                        {"report_json", "sd_over_mean,folds,E,E_S,area/1"}};
        m["outputs"] = files_;
        m["results"] = std::move(results);
        m["warnings"] = warnings_;
        m["timings_ms"] = timings_ ? json(stages_) : json(nullptr);
        write_json(out_ / "manifest.json", m);
    }

private:
    fs::path out_;
    bool timings_;
    std::vector<std::string> files_;
    std::vector<std::string> warnings_;
    json stages_ = json::object();
};

TorusShape shape_from(const json& c) { return {c.at("R").get<double>(), c.at("r").get<double>()}; }

OptimizerConfig optimizer_from(const json& c) {
    OptimizerConfig oc;
    oc.max_iters = c.at("max_iters").get<int>();
    oc.alpha_max = c.at("alpha_max").get<double>();
    oc.c1 = c.at("c1").get<double>();
    oc.grad_tol = c.at("grad_tol").get<double>();
    oc.seed = c.at("seed").get<std::uint64_t>();
    oc.record_time = c.at("timings").get<bool>();
    oc.validate();
    return oc;
}

std::optional<LoopBasis> loops_from(const json& c, const char* key, const SimplicialSurface& s) {
    if (!c.contains(key) || c[key].is_null()) return std::nullopt;
    return load_loops(c[key].get<std::string>(), s);
}

Points read_map(const std::string& path, const SimplicialSurface& s, const TorusShape& shape) {
    const ObjData data = read_obj(path);
    if (data.vertices.rows() != s.vertex_count()) {
        throw TopologyError("map has " + std::to_string(data.vertices.rows()) + " vertices, mesh has " +
                            std::to_string(s.vertex_count()));
    }
    const double res = max_manifold_residual(data.vertices, shape);
    if (res > 1e-9) throw NotOnManifold("map is off the torus by " + std::to_string(res) + " (relative to r)");
    return data.vertices;
}

// ---------------------------------------------------------------------------
// commands

int cmd_parameterize(const json& cfg, const fs::path& out) {
    const auto t0 = std::chrono::steady_clock::now();
    const TorusShape shape = shape_from(cfg);
    PipelineConfig pc;
    pc.shape = shape;
    pc.optim = optimizer_from(cfg);
    pc.correct_bijectivity = cfg.at("correct_bijectivity").get<bool>();
    const std::string method = cfg.at("method").get<std::string>();
    std::vector<Method> methods;
    if (method == "all") {
        methods = {Method::PGM, Method::PCG, Method::RGD, Method::RCG};
    } else {
        methods = {parse_method(method)};
    }

    Run run(out, pc.optim.record_time);
    std::optional<SimplicialSurface> surface;
    if (!cfg.at("generate_torus").is_null()) {
        const auto n = cfg["generate_torus"].get<std::array<int, 2>>();
        auto [s, id] = make_torus_grid(shape.R(), shape.r(), n[0], n[1]);
        write_obj(run.path("mesh.obj").string(), s.vertices(), s.faces());
        surface.emplace(std::move(s));
    } else if (!cfg.at("mesh").is_null()) {
        surface.emplace(load_obj(cfg["mesh"].get<std::string>()));
    } else {
        throw ConfigError("parameterize needs --mesh or --generate-torus");
    }
    const SimplicialSurface& s = *surface;
    const std::optional<LoopBasis> loops = loops_from(cfg, "loops", s);
    if (!loops) run.warn({"no loops given; using tree-cotree loops, whose homotopy class shapes the fundamental domain"});
    run.time("load", t0);

    const auto t1 = std::chrono::steady_clock::now();
    const InitialMapping init = initial_mapping(s, loops, shape, pc.init);
    run.warn(init.warnings);
    write_obj(run.path("initial_map.obj").string(), init.f0, s.faces());
    run.time("initial_map", t1);

    json results = json::array();
    for (Method m : methods) {
        const auto tm = std::chrono::steady_clock::now();
        const Parameterization p = run_parameterization(s, init.f0, pc, m);
        const std::string tag = to_string(m);
        write_obj(run.path("map_" + tag + ".obj").string(), p.result.f, s.faces());
        p.result.trace.write_csv(run.path("trace_" + tag + ".csv").string());
        write_json(run.path("report_" + tag + ".json"), p.quality.to_json());
        json r;
        r["method"] = tag;
        r["status"] = p.result.trace.status;
        r["iterations"] = p.result.trace.rows.empty() ? 0 : p.result.trace.rows.back().iter;
        r["initial_E"] = p.result.trace.rows.front().E;
        r["map"] = "map_" + tag + ".obj";
        r["trace"] = "trace_" + tag + ".csv";
        r["report"] = p.quality.to_json();
        if (p.correction) {
            r["correction"] = {{"folds_before", p.correction->folds_before},
                               {"folds_after", p.correction->folds_after},
                               {"rounds", p.correction->rounds}};
        }
        if (p.result.trace.status == "line_search_failed") run.warn({tag + ": line search failed before convergence"});
        results.push_back(std::move(r));
        run.time(tag, tm);
    }
    run.time("total", t0);
    run.finish("parameterize", cfg, std::move(results));
    return 0;
}

int cmd_register(const json& cfg, const fs::path& out) {
    const auto t0 = std::chrono::steady_clock::now();
    const TorusShape shape = shape_from(cfg);
    PipelineConfig pc;
    pc.shape = shape;
    pc.optim = optimizer_from(cfg);
    const Method method = parse_method(cfg.at("method").get<std::string>());
    Run run(out, pc.optim.record_time);

    const SimplicialSurface source = load_obj(cfg.at("mesh").get<std::string>());
    const SimplicialSurface target = load_obj(cfg.at("target").get<std::string>());
    const LandmarkSet landmarks = load_landmarks(cfg.at("landmarks").get<std::string>());
    landmarks.validate(source.vertex_count(), target.vertex_count());
    const auto src_loops = loops_from(cfg, "loops", source);
    const auto tgt_loops = loops_from(cfg, "target_loops", target);
    run.time("load", t0);

    const auto t1 = std::chrono::steady_clock::now();
    const InitialMapping init_m = initial_mapping(source, src_loops, shape, pc.init);
    const InitialMapping init_n = initial_mapping(target, tgt_loops, shape, pc.init);
    run.warn(init_m.warnings);
    run.warn(init_n.warnings);
    const Parameterization pm = run_parameterization(source, init_m.f0, pc, method);
    const Parameterization pn = run_parameterization(target, init_n.f0, pc, method);
    write_obj(run.path("map_source.obj").string(), pm.result.f, source.faces());
    write_obj(run.path("map_target.obj").string(), pn.result.f, target.faces());
    run.time("parameterize", t1);

    const auto t2 = std::chrono::steady_clock::now();
    const UnifiedTori u = unify_tori(pm.result.f, shape, pn.result.f, shape);
    OptimizerConfig oc = pc.optim;
    oc.method = method;
    const SolveResult reg = register_maps(source, u.f, u.g, landmarks, u.shape, oc);
    write_obj(run.path("registered_map.obj").string(), reg.f, source.faces());
    reg.trace.write_csv(run.path("trace_register.csv").string());
    const Points phi = compose_inverse(reg.f, target, u.g, u.shape);
    write_obj(run.path("phi.obj").string(), phi, source.faces());
    const auto snaps = morph(source.vertices(), phi, default_morph_times());
    for (std::size_t k = 0; k < snaps.size(); ++k) {
        write_obj(run.path("morph_" + std::to_string(k) + ".obj").string(), snaps[k].H, source.faces());
    }
    run.time("register", t2);

    const double first = reg.trace.rows.front().extra;
    const double last = reg.trace.rows.back().extra;
    json r;
    r["status"] = reg.trace.status;
    r["lambda"] = landmarks.lambda;
    r["landmarks"] = landmarks.size();
    r["initial_residual"] = first;
    r["final_residual"] = last;
    r["reduction"] = last > 0.0 ? json(first / last) : json(nullptr);
    r["final_E"] = reg.trace.final_energy();
    r["morph_times"] = default_morph_times();
    write_json(run.path("registration.json"), r);
    run.time("total", t0);
    run.finish("register", cfg, std::move(r));
    return 0;
}

int cmd_metrics(const json& cfg, const fs::path& out) {
    const TorusShape shape = shape_from(cfg);
    Run run(out, false);
    const SimplicialSurface s = load_obj(cfg.at("mesh").get<std::string>());
    const Points f = read_map(cfg.at("map").get<std::string>(), s, shape);
    const json report = quality_report(s, f, shape).to_json();
    write_json(run.path("metrics.json"), report);
    std::cout << report.dump() << '\n';
    run.finish("metrics", cfg, report);
    return 0;
}

int cmd_texture(const json& cfg, const fs::path& out) {
    const TorusShape shape = shape_from(cfg);
    Run run(out, false);
    const SimplicialSurface s = load_obj(cfg.at("mesh").get<std::string>());
    const double scale = cfg.at("scale").get<double>();
    const auto tr = cfg.at("translate").get<std::array<double, 2>>();
    const Vec2 translate(tr[0], tr[1]);
    TextureUV tex;
    if (!cfg.at("map").is_null()) {
        const Points f = read_map(cfg["map"].get<std::string>(), s, shape);
        tex = texture_uv(s, torus_coordinates(f, shape), scale, translate);
    } else {
        const auto loops = loops_from(cfg, "loops", s);
        const LoopBasis basis = loops ? *loops : fallback_loops(s);
        run.warn(basis.warnings);
        tex = texture_uv(compute_fundamental_domain(s, basis).domain, scale, translate);
    }
    std::vector<Vec2> uvs(static_cast<std::size_t>(tex.uvs.rows()));
    for (std::size_t i = 0; i < uvs.size(); ++i) uvs[i] = tex.uvs.row(static_cast<Eigen::Index>(i));
    write_obj(run.path("textured.obj").string(), s.vertices(), s.faces(), uvs, tex.face_uvs);
    run.finish("texture", cfg, {{"uv_count", uvs.size()}});
    return 0;
}

int cmd_generate(const json& cfg, const fs::path& out) {
    const TorusShape shape = shape_from(cfg);
    Run run(out, false);
    if (cfg.at("generate_torus").is_null()) throw ConfigError("generate needs --generate-torus NT NP");
    const auto n = cfg["generate_torus"].get<std::array<int, 2>>();
    auto [s, id] = make_torus_grid(shape.R(), shape.r(), n[0], n[1]);
    write_obj(run.path("torus.obj").string(), s.vertices(), s.faces());
    LoopBasis loops;
    for (int i = 0; i < n[0]; ++i) loops.gamma1.push_back(i);
    for (int j = 0; j < n[1]; ++j) loops.gamma2.push_back(j * n[0]);
    save_loops(run.path("loops.json").string(), normalize_loops(s, loops));
    run.finish("generate", cfg, {{"vertices", s.vertex_count()}, {"faces", s.face_count()}});
    return 0;
}

// ---------------------------------------------------------------------------
// argument handling

struct Args {
    std::string mesh, target, loops, target_loops, landmarks, map, method = "pcg", out = "torusmap_out";
    std::string from_manifest;
    std::vector<int> generate;
    double R = 2.0, r = 1.0, alpha_max = 1.0, c1 = 1e-4, grad_tol = 1e-10, scale = 1.0;
    std::vector<double> translate{0.0, 0.0};
    int max_iters = 100;
    std::uint64_t seed = 0;
    bool correct = false, timings = false;
};

json nullable_path(const std::string& p) { return p.empty() ? json(nullptr) : json(absolute_path(p)); }

json config_for(const std::string& command, const Args& a) {
    json c;
    c["command"] = command;
    c["R"] = a.R;
    c["r"] = a.r;
    if (command == "parameterize" || command == "register") {
        c["mesh"] = nullable_path(a.mesh);
        if (command == "register") {
            c["target"] = nullable_path(a.target);
            c["landmarks"] = nullable_path(a.landmarks);
            c["target_loops"] = nullable_path(a.target_loops);
        } else {
            c["generate_torus"] = a.generate.empty() ? json(nullptr) : json(a.generate);
            c["correct_bijectivity"] = a.correct;
        }
        c["loops"] = nullable_path(a.loops);
        c["method"] = a.method;
        c["max_iters"] = a.max_iters;
        c["alpha_max"] = a.alpha_max;
        c["c1"] = a.c1;
        c["grad_tol"] = a.grad_tol;
        c["seed"] = a.seed;
        c["timings"] = a.timings;
    } else if (command == "metrics") {
        c["mesh"] = nullable_path(a.mesh);
        c["map"] = nullable_path(a.map);
    } else if (command == "texture") {
        c["mesh"] = nullable_path(a.mesh);
        c["map"] = nullable_path(a.map);
        c["loops"] = nullable_path(a.loops);
        c["scale"] = a.scale;
        c["translate"] = a.translate;
    } else if (command == "generate") {
        c["generate_torus"] = a.generate.empty() ? json(nullptr) : json(a.generate);
    }
    return c;
}

void require(const json& c, std::initializer_list<const char*> keys, const std::string& command) {
    for (const char* k : keys) {
        if (!c.contains(k) || c[k].is_null()) throw ConfigError(command + " needs --" + std::string(k));
    }
}

int dispatch(const json& cfg, const fs::path& out) {
    const std::string command = cfg.at("command").get<std::string>();
    if (command == "parameterize") return cmd_parameterize(cfg, out);
    if (command == "register") {
        require(cfg, {"mesh", "target", "landmarks"}, command);
        if (cfg.at("method") == "all") throw ConfigError("register takes a single method");
        return cmd_register(cfg, out);
    }
    if (command == "metrics") {
        require(cfg, {"mesh", "map"}, command);
        return cmd_metrics(cfg, out);
    }
    if (command == "texture") {
        require(cfg, {"mesh"}, command);
        return cmd_texture(cfg, out);
    }
    if (command == "generate") return cmd_generate(cfg, out);
    throw ConfigError("unknown command '" + command + "'");
}

int report_error(const std::string& kind, const std::string& message, int code, const fs::path& out) {
    const json err{{"error", kind}, {"message", message}, {"exit_code", code}};
    std::cerr << err.dump() << '\n';
    try {
        fs::create_directories(out);
        write_json(out / "error.json", err);
    } catch (...) {
    }
    return code;
}

void add_common(CLI::App* sub, Args& a) {
    sub->add_option("--out", a.out, "Output directory");
    sub->add_option("--R", a.R, "Major radius of the target torus");
    sub->add_option("--r", a.r, "Minor radius of the target torus");
    sub->add_option("--from-manifest", a.from_manifest, "Rerun with the config recorded in a manifest");
}

void add_optimizer(CLI::App* sub, Args& a) {
    sub->add_option("--loops", a.loops, "Homology loops JSON for the mesh");
    sub->add_option("--method", a.method, "Optimizer")->check(CLI::IsMember({"pgm", "pcg", "rgd", "rcg", "all"}));
    sub->add_option("--max-iters", a.max_iters, "Iteration budget");
    sub->add_option("--alpha-max", a.alpha_max, "Initial line-search step");
    sub->add_option("--c1", a.c1, "Armijo constant");
    sub->add_option("--grad-tol", a.grad_tol, "Gradient norm tolerance");
    sub->add_option("--seed", a.seed, "Seed recorded with the run");
    sub->add_flag("--timings", a.timings, "Record wall-clock timings (makes outputs run-dependent)");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Area-preserving maps from genus-one meshes onto a torus"};
    app.set_version_flag("--version", TORUSMAP_VERSION);
    app.require_subcommand(1);
    Args a;

    auto* par = app.add_subcommand("parameterize", "Map a mesh onto the torus");
    add_common(par, a);
    add_optimizer(par, a);
    par->add_option("--mesh", a.mesh, "Input OBJ");
    par->add_option("--generate-torus", a.generate, "Use a synthetic NT x NP torus grid")->expected(2);
    par->add_flag("--correct-bijectivity", a.correct, "Unfold folded faces after optimizing");

    auto* reg = app.add_subcommand("register", "Register two meshes through landmarks");
    add_common(reg, a);
    add_optimizer(reg, a);
    reg->add_option("--mesh", a.mesh, "Source OBJ");
    reg->add_option("--target", a.target, "Target OBJ");
    reg->add_option("--target-loops", a.target_loops, "Homology loops JSON for the target");
    reg->add_option("--landmarks", a.landmarks, "Landmark pairs JSON");

    auto* met = app.add_subcommand("metrics", "Quality report of a torus map");
    add_common(met, a);
    met->add_option("--mesh", a.mesh, "Input OBJ");
    met->add_option("--map", a.map, "Map OBJ (image positions on the torus)");

    auto* tex = app.add_subcommand("texture", "Export texture coordinates");
    add_common(tex, a);
    tex->add_option("--mesh", a.mesh, "Input OBJ");
    tex->add_option("--map", a.map, "Map OBJ; without it the fundamental domain is used");
    tex->add_option("--loops", a.loops, "Homology loops JSON");
    tex->add_option("--scale", a.scale, "UV scale");
    tex->add_option("--translate", a.translate, "UV translation")->expected(2);

    auto* gen = app.add_subcommand("generate", "Write a synthetic torus grid and its loops");
    add_common(gen, a);
    gen->add_option("--generate-torus", a.generate, "Grid size NT NP")->expected(2)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return report_error("UsageError", e.what(), kExitInput, a.out);
    }

    const fs::path out = a.out;
    try {
        const std::string command = app.get_subcommands().front()->get_name();
        json cfg;
        if (!a.from_manifest.empty()) {
            cfg = read_json(a.from_manifest).at("config");
            if (cfg.at("command") != command) throw ConfigError("manifest was written by '" +
                                                                cfg["command"].get<std::string>() + "'");
        } else {
            cfg = config_for(command, a);
        }
        fs::create_directories(out);
        return dispatch(cfg, out);
    } catch (const Error& e) {
        return report_error(e.kind(), e.what(), exit_code_for(e), out);
    } catch (const json::exception& e) {
        return report_error("ConfigError", e.what(), kExitInput, out);
    } catch (const std::exception& e) {
        return report_error("InternalError", e.what(), kExitInternal, out);
    }
}
