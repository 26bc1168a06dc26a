#include <torusmap/homology.hpp>
#include <torusmap/mesh.hpp>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("torusmap_cli_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

int run(const std::string& args) {
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

json load(const fs::path& p) { return json::parse(slurp(p)); }

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

}  // namespace

TEST(Cli, Generate) {
    const fs::path out = scratch("generate");
    ASSERT_EQ(run("generate --generate-torus 8 6 --out " + q(out)), 0);
    const torusmap::SimplicialSurface s = torusmap::load_obj((out / "torus.obj").string());
    EXPECT_EQ(s.vertex_count(), 48);
    const torusmap::LoopBasis loops = torusmap::load_loops((out / "loops.json").string(), s);
    EXPECT_EQ(loops.gamma1.size(), 8u);
    const json m = load(out / "manifest.json");
    EXPECT_EQ(m["outputs"], json({"torus.obj", "loops.json"}));
}

TEST(Cli, ParameterizeSyntheticTorus) {
    const fs::path out = scratch("param");
    ASSERT_EQ(run("parameterize --generate-torus 16 16 --method pcg --out " + q(out)), 0);
    const json m = load(out / "manifest.json");
    ASSERT_EQ(m["results"].size(), 1u);
    const json& r = m["results"][0];
    EXPECT_EQ(r["method"], "pcg");
    EXPECT_EQ(r["report"]["folds"], 0);
    EXPECT_LT(r["report"]["sd_over_mean"].get<double>(), 0.05);
    EXPECT_LT(r["report"]["E"].get<double>(), r["initial_E"].get<double>());
    for (const auto& f : m["outputs"]) EXPECT_TRUE(fs::exists(out / f.get<std::string>())) << f;
    EXPECT_EQ(load(out / "report_pcg.json"), r["report"]);
    EXPECT_TRUE(m["timings_ms"].is_null());
    EXPECT_FALSE(m["warnings"].empty());
}

TEST(Cli, RerunFromManifestIsByteIdentical) {
    const fs::path a = scratch("rerun_a"), b = scratch("rerun_b");
    ASSERT_EQ(run("parameterize --generate-torus 12 12 --method rcg --max-iters 40 --out " + q(a)), 0);
    ASSERT_EQ(run("parameterize --from-manifest " + q(a / "manifest.json") + " --out " + q(b)), 0);
    const json m = load(a / "manifest.json");
    for (const auto& f : m["outputs"]) EXPECT_EQ(slurp(a / f.get<std::string>()), slurp(b / f.get<std::string>())) << f;
    EXPECT_EQ(slurp(a / "manifest.json"), slurp(b / "manifest.json"));
}

TEST(Cli, MethodAllWritesFourTraces) {
    const fs::path out = scratch("all");
    ASSERT_EQ(run("parameterize --generate-torus 10 10 --method all --max-iters 20 --out " + q(out)), 0);
    const json m = load(out / "manifest.json");
    ASSERT_EQ(m["results"].size(), 4u);
    for (const char* tag : {"pgm", "pcg", "rgd", "rcg"}) {
        EXPECT_TRUE(fs::exists(out / (std::string("trace_") + tag + ".csv"))) << tag;
    }
}

TEST(Cli, MetricsMatchesManifestReport) {
    const fs::path out = scratch("metrics_rt"), met = scratch("metrics_rt_m");
    ASSERT_EQ(run("parameterize --generate-torus 12 12 --max-iters 30 --out " + q(out)), 0);
    ASSERT_EQ(run("metrics --mesh " + q(out / "mesh.obj") + " --map " + q(out / "map_pcg.obj") + " --out " + q(met)), 0);
    EXPECT_EQ(load(met / "metrics.json"), load(out / "manifest.json")["results"][0]["report"]);
}

TEST(Cli, MetricsOfIdentity) {
    const fs::path gen = scratch("metrics_id_g"), met = scratch("metrics_id");
    ASSERT_EQ(run("generate --generate-torus 16 16 --out " + q(gen)), 0);
    const fs::path mesh = gen / "torus.obj";
    ASSERT_EQ(run("metrics --mesh " + q(mesh) + " --map " + q(mesh) + " --out " + q(met)), 0);
    const json r = load(met / "metrics.json");
    EXPECT_LT(r["sd_over_mean"].get<double>(), 1e-12);
    EXPECT_EQ(r["folds"], 0);
    EXPECT_LT(std::abs(r["E"].get<double>()), 1e-10);
}

TEST(Cli, MetricsRejectsOffManifoldMap) {
    const fs::path gen = scratch("metrics_off_g"), met = scratch("metrics_off");
    ASSERT_EQ(run("generate --generate-torus 8 8 --R 3 --r 1 --out " + q(gen)), 0);
    EXPECT_EQ(run("metrics --mesh " + q(gen / "torus.obj") + " --map " + q(gen / "torus.obj") + " --out " + q(met)), 2);
    EXPECT_EQ(load(met / "error.json")["error"], "NotOnManifold");
}

TEST(Cli, MissingInputIsExitTwo) {
    const fs::path out = scratch("missing");
    EXPECT_EQ(run("parameterize --mesh " + q(out / "nope.obj") + " --out " + q(out)), 2);
    const json e = load(out / "error.json");
    EXPECT_EQ(e["error"], "IoError");
    EXPECT_EQ(e["exit_code"], 2);
}

TEST(Cli, UsageErrors) {
    const fs::path out = scratch("usage");
    EXPECT_EQ(run("parameterize --generate-torus 8 8 --method newton --out " + q(out)), 2);
    EXPECT_EQ(run("parameterize --out " + q(out)), 2);
    EXPECT_EQ(run("--help"), 0);
}

TEST(Cli, RegisterIdenticalMeshes) {
    const fs::path gen = scratch("reg_g"), out = scratch("reg");
    ASSERT_EQ(run("generate --generate-torus 12 12 --out " + q(gen)), 0);
    std::ofstream(gen / "lm.json") << R"({"pairs":[[0,0],[30,30],[77,77],[100,100],[143,143]],"lambda":0.2})";
    const fs::path mesh = gen / "torus.obj";
    ASSERT_EQ(run("register --mesh " + q(mesh) + " --target " + q(mesh) + " --landmarks " + q(gen / "lm.json") +
                  " --max-iters 1000 --out " + q(out)),
              0);
    const json r = load(out / "registration.json");
    EXPECT_LT(r["final_residual"].get<double>(), 1e-8);
    const json m = load(out / "manifest.json");
    for (const auto& f : m["outputs"]) EXPECT_TRUE(fs::exists(out / f.get<std::string>())) << f;
    const auto m0 = torusmap::read_obj((out / "morph_0.obj").string());
    const auto m3 = torusmap::read_obj((out / "morph_3.obj").string());
    const auto phi = torusmap::read_obj((out / "phi.obj").string());
    EXPECT_EQ(m0.vertices, torusmap::read_obj(mesh.string()).vertices);
    EXPECT_EQ(m3.vertices, phi.vertices);
}

TEST(Cli, RegisterRejectsBadLandmark) {
    const fs::path gen = scratch("reg_bad_g"), out = scratch("reg_bad");
    ASSERT_EQ(run("generate --generate-torus 8 8 --out " + q(gen)), 0);
    std::ofstream(gen / "lm.json") << R"({"pairs":[[0,999]]})";
    const fs::path mesh = gen / "torus.obj";
    EXPECT_EQ(run("register --mesh " + q(mesh) + " --target " + q(mesh) + " --landmarks " + q(gen / "lm.json") +
                  " --out " + q(out)),
              2);
    EXPECT_EQ(load(out / "error.json")["error"], "LandmarkError");
}

TEST(Cli, TextureHasNoWrappingFaces) {
    const fs::path gen = scratch("tex_g"), out = scratch("tex");
    ASSERT_EQ(run("generate --generate-torus 16 12 --out " + q(gen)), 0);
    const fs::path mesh = gen / "torus.obj";
    ASSERT_EQ(run("texture --mesh " + q(mesh) + " --map " + q(mesh) + " --out " + q(out)), 0);
    const auto obj = torusmap::read_obj((out / "textured.obj").string());
    ASSERT_FALSE(obj.uvs.empty());
    ASSERT_EQ(obj.face_uvs.size(), obj.faces.size());
    for (const auto& f : obj.face_uvs) {
        for (int c = 0; c < 2; ++c) {
            const double a = obj.uvs[f[0]][c], b = obj.uvs[f[1]][c], d = obj.uvs[f[2]][c];
            EXPECT_LT(std::max({a, b, d}) - std::min({a, b, d}), 0.5);
        }
    }
    ASSERT_EQ(run("texture --mesh " + q(mesh) + " --loops " + q(gen / "loops.json") + " --out " + q(out)), 0);
}
