#include <torusmap/energy.hpp>
#include <torusmap/synthetic.hpp>
#include <torusmap/torus.hpp>

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace torusmap;

namespace {

// Six equilateral triangles of side 1 around the origin.
struct Hexagon {
    Points v{7, 3};
    std::vector<Face> faces;
    std::vector<double> areas;

    Hexagon() {
        v.row(0).setZero();
        for (int k = 0; k < 6; ++k) {
            const double a = k * std::numbers::pi / 3.0;
            v.row(k + 1) << std::cos(a), std::sin(a), 0.0;
        }
        for (int k = 0; k < 6; ++k) faces.push_back({0, 1 + k, 1 + (k + 1) % 6});
        areas.assign(6, std::sqrt(3.0) / 4.0);
    }
    FaceDomain domain() const { return FaceDomain(faces, areas, 7); }
};

Points perturbed(const Points& f, double amp, unsigned seed) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> u(-amp, amp);
    Points out = f;
    for (Eigen::Index i = 0; i < out.rows(); ++i)
        for (int c = 0; c < 3; ++c) out(i, c) += u(rng);
    return out;
}

// (|M| / A) sum |f(tau)|^2 / |tau| - A with Heron areas.
double objective_oracle(const SimplicialSurface& s, const Points& f) {
    double area = 0.0, stretch = 0.0;
    for (int t = 0; t < s.face_count(); ++t) {
        const Face& face = s.face(t);
        const double a = oracle::heron_area(f.row(face[0]), f.row(face[1]), f.row(face[2]));
        area += a;
        stretch += a * a / s.face_area(t);
    }
    return s.total_area() / area * stretch - area;
}

}  // namespace

TEST(Laplacian, EquilateralWeights) {
    const Hexagon h;
    const SparseMatrix L = assemble_laplacian(h.domain(), h.v);
    for (int k = 1; k <= 6; ++k) EXPECT_NEAR(L.coeff(0, k), -1.0 / std::sqrt(3.0), 1e-15);
    EXPECT_NEAR(L.coeff(0, 0), 6.0 / std::sqrt(3.0), 1e-14);
}

TEST(Laplacian, SymmetricZeroRowSumsAdjacencyPattern) {
    auto [s, id] = make_torus_grid(2.0, 1.0, 16, 16);
    const Points f = perturbed(id, 0.1, 7);
    const SparseMatrix L = assemble_laplacian(s, f);
    const Eigen::MatrixXd D(L);
    EXPECT_EQ((D - D.transpose()).cwiseAbs().maxCoeff(), 0.0);
    for (int i = 0; i < s.vertex_count(); ++i) {
        EXPECT_LT(std::abs(D.row(i).sum()), 1e-10 * D.row(i).cwiseAbs().maxCoeff());
        int nonzeros = 0;
        for (int j = 0; j < s.vertex_count(); ++j) {
            if (i != j && L.coeff(i, j) != 0.0) {
                ++nonzeros;
                EXPECT_GE(s.edge_index(i, j), 0);
            }
        }
        EXPECT_EQ(nonzeros, static_cast<int>(s.ring(i).size()));
    }
}

TEST(Laplacian, QuadraticInScale) {
    auto [s, id] = make_torus_grid(2.0, 1.0, 16, 16);
    const Eigen::MatrixXd L1(assemble_laplacian(s, id));
    const Eigen::MatrixXd L2(assemble_laplacian(s, 2.0 * id));
    for (Eigen::Index i = 0; i < L1.rows(); ++i)
        for (Eigen::Index j = 0; j < L1.cols(); ++j)
            if (L1(i, j) != 0.0) EXPECT_NEAR(L2(i, j) / L1(i, j), 4.0, 4e-12);
}

TEST(Laplacian, DegenerateImageFace) {
    auto [s, id] = make_torus_grid(2.0, 1.0, 6, 6);
    Points f = id;
    const Face face = s.face(0);
    f.row(face[2]) = f.row(face[1]);
    EXPECT_THROW(assemble_laplacian(s, f), DegenerateImageFace);
}

TEST(StretchEnergy, SingleTriangle) {
    const std::vector<Face> faces{{0, 1, 2}};
    const std::vector<double> areas{1.0};
    Points f(3, 3);
    f << 0, 0, 0, 2, 0, 0, 0, 2, 0;
    EXPECT_NEAR(stretch_energy(FaceDomain(faces, areas, 3), f), 4.0, 1e-14);
}

TEST(StretchEnergy, IdentityGivesTotalArea) {
    auto [s, id] = make_torus_grid(2.0, 1.0, 16, 16);
    EXPECT_NEAR(stretch_energy(s, id), s.total_area(), 1e-10 * s.total_area());
}

TEST(StretchEnergy, QuadraticFormMatchesPerFaceSum) {
    auto [s, id] = make_torus_grid(2.0, 1.0, 16, 16);
    for (unsigned seed : {1u, 2u, 3u}) {
        const Points f = perturbed(id, 0.2, seed);
        double direct = 0.0;
        for (int t = 0; t < s.face_count(); ++t) {
            const Face& face = s.face(t);
            const double a = oracle::heron_area(f.row(face[0]), f.row(face[1]), f.row(face[2]));
            direct += a * a / s.face_area(t);
        }
        EXPECT_NEAR(stretch_energy(s, f), direct, 1e-9 * direct);
        EXPECT_NEAR(objective(s, f).stretch, direct, 1e-9 * direct);
    }
}

TEST(ImageArea, Examples) {
    auto [s, id] = make_torus_grid(2.0, 1.0, 16, 16);
    EXPECT_NEAR(image_area(s, id), s.total_area(), 1e-12 * s.total_area());
    EXPECT_NEAR(image_area(s, 2.0 * id), 4.0 * s.total_area(), 1e-12 * s.total_area());
    const Points f = perturbed(id, 0.3, 11);
    double sum = 0.0;
    for (const Face& face : s.faces()) sum += oracle::heron_area(f.row(face[0]), f.row(face[1]), f.row(face[2]));
    EXPECT_NEAR(image_area(s, f), sum, 1e-12 * sum);
}

TEST(Objective, ZeroAtIdentityAndUniformScale) {
    auto [s, id] = make_torus_grid(2.0, 1.0, 16, 16);
    const double M = s.total_area();
    EXPECT_LT(std::abs(objective(s, id).objective), 1e-10 * M);
    for (double k : {0.5, 2.0, 10.0}) EXPECT_LT(std::abs(objective(s, k * id).objective), 1e-10 * M);
}

TEST(Objective, ReportIsConsistent) {
    auto [s, id] = make_torus_grid(2.0, 1.0, 16, 16);
    const Points f = perturbed(id, 0.2, 5);
    const EnergyReport r = objective(s, f);
    EXPECT_NEAR(r.objective, s.total_area() / r.area * r.stretch - r.area, 1e-9 * r.area);
    EXPECT_NEAR(r.authalic, r.stretch - r.area, 1e-12 * r.stretch);
    EXPECT_NEAR(r.objective, objective_oracle(s, f), 1e-9 * (1.0 + r.objective));
}

TEST(Objective, MovedVertexIsPositive) {
    auto [s, id] = make_torus_grid(2.0, 1.0, 16, 16);
    Points f = id;
    f(0, 0) += 0.1;
    const double E = objective(s, f).objective;
    EXPECT_GT(E, 0.0);
    EXPECT_NEAR(E, objective_oracle(s, f), 1e-9);
    EXPECT_NEAR(E, 0.0068235518817048582, 1e-12);
}

TEST(Objective, NonNegativeAndQuadraticUnderScaling) {
    auto [s, id] = make_torus_grid(2.0, 1.0, 16, 16);
    const TorusShape shape;
    for (unsigned seed = 0; seed < 50; ++seed) {
        const Points f = jitter_on_torus(id, shape, 0.1, seed);
        const double E = objective(s, f).objective;
        EXPECT_GE(E, -1e-10 * s.total_area());
        for (double k : {0.5, 2.0, 10.0}) EXPECT_NEAR(objective(s, k * f).objective, k * k * E, 1e-9 * k * k * (1.0 + E));
    }
}

TEST(Objective, ZeroImageArea) {
    auto [s, id] = make_torus_grid(2.0, 1.0, 6, 6);
    const Points f = Points::Zero(id.rows(), 3);
    EXPECT_THROW(objective(s, f), ZeroImageArea);
}

TEST(Objective, RowCountMismatch) {
    auto [s, id] = make_torus_grid(2.0, 1.0, 6, 6);
    EXPECT_THROW(objective(s, id.topRows(10)), std::invalid_argument);
}

TEST(GradArea, MatchesFiniteDifferences) {
    auto [s, id] = make_torus_grid(2.0, 1.0, 16, 16);
    for (unsigned seed : {21u, 22u, 23u}) {
        const Points f = perturbed(id, 0.15, seed);
        const Points fd = oracle::fd_gradient([&](const Points& x) { return image_area(s, x); }, f);
        EXPECT_LT(oracle::rel_error(grad_area(s, f), fd), 1e-6);
    }
}

TEST(GradArea, TranslationInvariant) {
    auto [s, id] = make_torus_grid(2.0, 1.0, 16, 16);
    const Points g = grad_area(s, perturbed(id, 0.15, 4));
    EXPECT_LT(g.colwise().sum().cwiseAbs().maxCoeff(), 1e-10);
}

TEST(GradArea, SingleTriangleEdgeLength) {
    const std::vector<Face> faces{{0, 1, 2}};
    const std::vector<double> areas{0.5};
    Points f(3, 3);
    f << 0, 0, 0, 1, 0, 0, 0, 1, 0;
    const Points g = grad_area(FaceDomain(faces, areas, 3), f);
    for (int k = 0; k < 3; ++k) {
        const double opposite = (f.row((k + 1) % 3) - f.row((k + 2) % 3)).norm();
        EXPECT_NEAR(g.row(k).norm(), 0.5 * opposite, 1e-15);
    }
}

TEST(GradObjective, MatchesFiniteDifferences) {
    auto [s, id] = make_torus_grid(2.0, 1.0, 16, 16);
    for (unsigned seed : {31u, 32u, 33u}) {
        const Points f = perturbed(id, 0.15, seed);
        const Points fd = oracle::fd_gradient([&](const Points& x) { return objective(s, x).objective; }, f);
        EXPECT_LT(oracle::rel_error(grad_objective(s, f), fd), 1e-6);
    }
}

TEST(GradObjective, VanishesAtIdentity) {
    auto [s, id] = make_torus_grid(2.0, 1.0, 16, 16);
    const TorusShape shape;
    const Points g = grad_objective(s, id);
    EXPECT_LT(g.cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LT(project_tangents(g, id, shape).norm(), 1e-10);
}

TEST(GradObjective, TangentSlopeMatchesRetractedDifferences) {
    auto [s, id] = make_torus_grid(2.0, 1.0, 16, 16);
    const TorusShape shape;
    const Points f = jitter_on_torus(id, shape, 0.05, 9);
    const Points rg = project_tangents(grad_objective(s, f), f, shape);
    const double h = 1e-6;
    auto E = [&](double a) { return objective(s, retract_rows(f, -a * rg, shape)).objective; };
    const double fd = (E(h) - E(-h)) / (2.0 * h);
    EXPECT_NEAR(fd, -rg.squaredNorm(), 1e-6 * rg.squaredNorm());
}

TEST(GradObjective, LaplacianTermColumnsSumToZero) {
    auto [s, id] = make_torus_grid(2.0, 1.0, 16, 16);
    const Points f = perturbed(id, 0.15, 3);
    const auto ev = evaluate_energy(s, f);
    EXPECT_LT(ev.laplacian_times_f.colwise().sum().cwiseAbs().maxCoeff(), 1e-10);
    const SparseMatrix L = assemble_laplacian(s, f);
    EXPECT_LT((Points(L * f) - ev.laplacian_times_f).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Registration, ObjectiveExamples) {
    auto [s, id] = make_torus_grid(2.0, 1.0, 16, 16);
    const Points f = perturbed(id, 0.1, 8);
    const double E = objective(s, f).objective;
    LandmarkSet lm{{{3, 3}, {40, 40}}, 0.2};
    EXPECT_DOUBLE_EQ(registration_objective(s, f, gather_targets(f, lm), lm), E);
    lm.lambda = 0.0;
    EXPECT_DOUBLE_EQ(registration_objective(s, f, gather_targets(id, lm), lm), E);
    LandmarkSet one{{{5, 0}}, 0.2};
    Points g = Points::Zero(1, 3);
    g.row(0) = f.row(5) - Eigen::RowVector3d(1, 0, 0);
    EXPECT_NEAR(registration_objective(s, f, g, one), E + 0.2, 1e-14);
}

TEST(Registration, GradientExamples) {
    auto [s, id] = make_torus_grid(2.0, 1.0, 16, 16);
    const Points f = perturbed(id, 0.1, 12);
    const Points gE = grad_objective(s, f);
    LandmarkSet lm{{{3, 9}, {40, 2}, {100, 77}}, 0.0};
    EXPECT_EQ(registration_gradient(s, f, gather_targets(id, lm), lm), gE);

    LandmarkSet one{{{5, 0}}, 0.2};
    Points g(1, 3);
    g.row(0) = f.row(5) - Eigen::RowVector3d(1, 0, 0);
    const Points gR = registration_gradient(s, f, g, one);
    EXPECT_NEAR(gR(5, 0) - gE(5, 0), 0.4, 1e-15);
    EXPECT_EQ(gR(5, 1), gE(5, 1));
    Points rest = gR - gE;
    rest.row(5).setZero();
    EXPECT_EQ(rest.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Registration, GradientMatchesFiniteDifferences) {
    auto [s, id] = make_torus_grid(2.0, 1.0, 16, 16);
    LandmarkSet lm{{{3, 9}, {40, 2}, {100, 77}, {200, 180}, {255, 0}}, 0.2};
    const Points target = gather_targets(perturbed(id, 0.3, 99), lm);
    for (unsigned seed : {41u, 42u, 43u}) {
        const Points f = perturbed(id, 0.15, seed);
        const Points fd =
            oracle::fd_gradient([&](const Points& x) { return registration_objective(s, x, target, lm); }, f);
        EXPECT_LT(oracle::rel_error(registration_gradient(s, f, target, lm), fd), 1e-6);
        const RegistrationObjective obj(s, target, lm);
        const Evaluation ev = obj.evaluate(f);
        EXPECT_NEAR(ev.value, registration_objective(s, f, target, lm), 1e-12 * (1.0 + ev.value));
        EXPECT_LT((ev.gradient - registration_gradient(s, f, target, lm)).cwiseAbs().maxCoeff(), 1e-12);
    }
}

TEST(Landmarks, Validation) {
    EXPECT_THROW((LandmarkSet{{{0, 0}, {0, 1}}, 0.2}.validate(10, 10)), LandmarkError);
    EXPECT_THROW((LandmarkSet{{{0, 10}}, 0.2}.validate(10, 10)), LandmarkError);
    EXPECT_THROW((LandmarkSet{{{0, 1}}, -1.0}.validate(10, 10)), LandmarkError);
    EXPECT_NO_THROW((LandmarkSet{{{0, 1}, {1, 1}}, 0.2}.validate(10, 10)));
}
