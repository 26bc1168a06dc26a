#pragma once

#include "torusmap/mesh.hpp"
#include "torusmap/types.hpp"

#include <Eigen/SparseCore>

#include <cmath>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace torusmap {

using SparseMatrix = Eigen::SparseMatrix<double>;

/// Connectivity plus source face areas; enough to evaluate every energy.
/// Views a SimplicialSurface, or raw arrays for open patches in tests.
struct FaceDomain {
    std::span<const Face> faces;
    std::span<const double> source_areas;
    double total_area = 0.0;
    int vertex_count = 0;

    FaceDomain(std::span<const Face> f, std::span<const double> areas, int n)
        : faces(f), source_areas(areas), vertex_count(n) {
        for (double a : areas) total_area += a;
    }

    FaceDomain(const SimplicialSurface& s)  // NOLINT(google-explicit-constructor)
        : faces(s.faces()), source_areas(s.face_areas()), total_area(s.total_area()),
          vertex_count(s.vertex_count()) {}
};

struct EnergyReport {
    double stretch = 0.0;    ///< E_S(f)
    double area = 0.0;       ///< image area A(f)
    double objective = 0.0;  ///< E(f) = (|M| / A) E_S - A
    double authalic = 0.0;   ///< E_A(f) = E_S - A
};

namespace detail {

inline void check_rows(const FaceDomain& d, const Points& f) {
    if (f.rows() != d.vertex_count) {
        throw std::invalid_argument("map has " + std::to_string(f.rows()) + " rows, surface has " +
                                    std::to_string(d.vertex_count) + " vertices");
    }
}

/// Modified cotangent weights of one face, indexed by the corner opposite the
/// edge: w[k] belongs to edge (k+1, k+2). cot(theta) * |image| simplifies to
/// half the dot product of the two edge vectors meeting at the opposite corner.
inline std::array<double, 3> face_weights(const Vec3 (&p)[3], double source_area, double image_area2) {
    if (!(image_area2 > 0.0)) throw DegenerateImageFace("image triangle has zero area; cotangent undefined");
    std::array<double, 3> w{};
    for (int k = 0; k < 3; ++k) {
        const Vec3 a = p[(k + 1) % 3] - p[k];
        const Vec3 b = p[(k + 2) % 3] - p[k];
        w[static_cast<std::size_t>(k)] = a.dot(b) / (4.0 * source_area);
    }
    return w;
}

}  // namespace detail

/// L_S(f): off-diagonal (i, j) is minus the sum of the modified cotangent
/// weights of the faces sharing edge (i, j); diagonals make rows sum to zero.
inline SparseMatrix assemble_laplacian(const FaceDomain& d, const Points& f) {
    detail::check_rows(d, f);
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(d.faces.size() * 12);
    for (std::size_t t = 0; t < d.faces.size(); ++t) {
        const Face& face = d.faces[t];
        const Vec3 p[3] = {f.row(face[0]), f.row(face[1]), f.row(face[2])};
        const double cross = (p[1] - p[0]).cross(p[2] - p[0]).norm();
        const auto w = detail::face_weights(p, d.source_areas[t], cross);
        for (int k = 0; k < 3; ++k) {
            const int i = face[(k + 1) % 3];
            const int j = face[(k + 2) % 3];
            const double wk = w[static_cast<std::size_t>(k)];
            trip.emplace_back(i, j, -wk);
            trip.emplace_back(j, i, -wk);
            trip.emplace_back(i, i, wk);
            trip.emplace_back(j, j, wk);
        }
    }
    SparseMatrix L(d.vertex_count, d.vertex_count);
    L.setFromTriplets(trip.begin(), trip.end());
    return L;
}

/// E_S(f) as the quadratic form 1/2 sum_c (f^c)^T L_S(f) f^c.
inline double stretch_energy(const FaceDomain& d, const Points& f) {
    const SparseMatrix L = assemble_laplacian(d, f);
    double sum = 0.0;
    for (int c = 0; c < 3; ++c) sum += f.col(c).dot(L * f.col(c));
    return 0.5 * sum;
}

inline double image_area(const FaceDomain& d, const Points& f) {
    detail::check_rows(d, f);
    double sum = 0.0;
    for (const Face& face : d.faces) sum += triangle_area(f.row(face[0]), f.row(face[1]), f.row(face[2]));
    return sum;
}

/// Everything an optimizer needs from one pass over the faces.
struct EnergyEvaluation {
    EnergyReport report;
    Points laplacian_times_f;  ///< L_S(f) f
    Points grad_area;          ///< gradient of A(f)
    Points gradient;           ///< gradient of E(f)
};

/// One pass over the faces. The objective is accumulated as
/// (|M| / A) sum_tau |tau| (rho_tau - A/|M|)^2 with rho_tau = |f(tau)| / |tau|,
/// which equals (|M| / A) E_S - A exactly but has no cancellation.
inline EnergyEvaluation evaluate_energy(const FaceDomain& d, const Points& f, bool with_gradient = true) {
    detail::check_rows(d, f);
    const std::size_t m = d.faces.size();
    std::vector<double> image(m);
    EnergyEvaluation ev;
    if (with_gradient) {
        ev.laplacian_times_f = Points::Zero(f.rows(), 3);
        ev.grad_area = Points::Zero(f.rows(), 3);
    }
    double area = 0.0;
    double stretch = 0.0;
    for (std::size_t t = 0; t < m; ++t) {
        const Face& face = d.faces[t];
        const Vec3 p[3] = {f.row(face[0]), f.row(face[1]), f.row(face[2])};
        const double cross = (p[1] - p[0]).cross(p[2] - p[0]).norm();
        const double a = 0.5 * cross;
        const double s = d.source_areas[t];
        image[t] = a;
        area += a;
        stretch += a * a / s;
        if (!with_gradient) continue;
        const auto w = detail::face_weights(p, s, cross);
        Vec3 lf[3] = {Vec3::Zero(), Vec3::Zero(), Vec3::Zero()};
        for (int k = 0; k < 3; ++k) {
            const int i = (k + 1) % 3;
            const int j = (k + 2) % 3;
            const Vec3 e = w[static_cast<std::size_t>(k)] * (p[i] - p[j]);
            lf[i] += e;
            lf[j] -= e;
        }
        const double scale = s / a;
        for (int k = 0; k < 3; ++k) {
            ev.laplacian_times_f.row(face[k]) += lf[k];
            ev.grad_area.row(face[k]) += scale * lf[k];
        }
    }
    if (!(area >= 1e-12 * d.total_area)) {
        throw ZeroImageArea("image area " + std::to_string(area) + " is below 1e-12 |M|");
    }
    const double mean_ratio = area / d.total_area;
    double spread = 0.0;
    for (std::size_t t = 0; t < m; ++t) {
        const double dev = image[t] / d.source_areas[t] - mean_ratio;
        spread += d.source_areas[t] * dev * dev;
    }
    ev.report.stretch = stretch;
    ev.report.area = area;
    ev.report.objective = d.total_area / area * spread;
    ev.report.authalic = stretch - area;
    if (with_gradient) {
        const double M = d.total_area;
        ev.gradient = (2.0 * M / area) * ev.laplacian_times_f -
                      (1.0 + M * stretch / (area * area)) * ev.grad_area;
    }
    return ev;
}

inline EnergyReport objective(const FaceDomain& d, const Points& f) {
    return evaluate_energy(d, f, false).report;
}

inline Points grad_area(const FaceDomain& d, const Points& f) { return evaluate_energy(d, f).grad_area; }

inline Points grad_objective(const FaceDomain& d, const Points& f) { return evaluate_energy(d, f).gradient; }

/// Corresponding landmark pairs (p_l on the source, q_l on the target) and
/// the penalty weight lambda.
struct LandmarkSet {
    std::vector<std::pair<int, int>> pairs;
    double lambda = 0.2;

    int size() const { return static_cast<int>(pairs.size()); }

    void validate(int source_vertices, int target_vertices) const {
        if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw LandmarkError("landmark lambda must be >= 0");
        std::vector<char> used(static_cast<std::size_t>(source_vertices), 0);
        for (const auto& [p, q] : pairs) {
            if (p < 0 || p >= source_vertices) {
                throw LandmarkError("landmark source index " + std::to_string(p) + " out of range");
            }
            if (q < 0 || q >= target_vertices) {
                throw LandmarkError("landmark target index " + std::to_string(q) + " out of range");
            }
            if (used[static_cast<std::size_t>(p)]) {
                throw LandmarkError("duplicate landmark source index " + std::to_string(p));
            }
            used[static_cast<std::size_t>(p)] = 1;
        }
    }
};

/// Rows g(q_l) of the target map, in landmark order.
inline Points gather_targets(const Points& g, const LandmarkSet& landmarks) {
    Points out(landmarks.size(), 3);
    for (int l = 0; l < landmarks.size(); ++l) out.row(l) = g.row(landmarks.pairs[static_cast<std::size_t>(l)].second);
    return out;
}

/// f_P - g_Q.
inline Points landmark_residual(const Points& f, const Points& g_at_q, const LandmarkSet& landmarks) {
    Points res(landmarks.size(), 3);
    for (int l = 0; l < landmarks.size(); ++l) {
        res.row(l) = f.row(landmarks.pairs[static_cast<std::size_t>(l)].first) - g_at_q.row(l);
    }
    return res;
}

/// E_R(f) = E(f) + lambda ||f_P - g_Q||_F^2.
inline double registration_objective(const FaceDomain& d, const Points& f, const Points& g_at_q,
                                     const LandmarkSet& landmarks) {
    return objective(d, f).objective + landmarks.lambda * landmark_residual(f, g_at_q, landmarks).squaredNorm();
}

/// grad E_R = grad E + 2 lambda P^T (f_P - g_Q).
inline Points registration_gradient(const FaceDomain& d, const Points& f, const Points& g_at_q,
                                    const LandmarkSet& landmarks) {
    Points g = grad_objective(d, f);
    if (landmarks.lambda == 0.0) return g;
    const Points res = landmark_residual(f, g_at_q, landmarks);
    for (int l = 0; l < landmarks.size(); ++l) {
        g.row(landmarks.pairs[static_cast<std::size_t>(l)].first) += 2.0 * landmarks.lambda * res.row(l);
    }
    return g;
}

/// Value and Euclidean gradient of a smooth function on n x 3 matrices.
struct Evaluation {
    double value = 0.0;
    Points gradient;
};

/// The prefactored area-preserving objective E.
class AreaObjective {
public:
    explicit AreaObjective(FaceDomain domain) : domain_(domain) {}

    double value(const Points& f) const { return objective(domain_, f).objective; }

    Evaluation evaluate(const Points& f) const {
        auto ev = evaluate_energy(domain_, f);
        return {ev.report.objective, std::move(ev.gradient)};
    }

    const FaceDomain& domain() const { return domain_; }

private:
    FaceDomain domain_;
};

/// E_R with the target landmark positions frozen.
class RegistrationObjective {
public:
    RegistrationObjective(FaceDomain domain, Points g_at_q, LandmarkSet landmarks)
        : domain_(domain), targets_(std::move(g_at_q)), landmarks_(std::move(landmarks)) {}

    double value(const Points& f) const { return registration_objective(domain_, f, targets_, landmarks_); }

    Evaluation evaluate(const Points& f) const {
        auto ev = evaluate_energy(domain_, f);
        Evaluation out{ev.report.objective, std::move(ev.gradient)};
        if (landmarks_.lambda != 0.0 && landmarks_.size() > 0) {
            const Points res = landmark_residual(f, targets_, landmarks_);
            out.value += landmarks_.lambda * res.squaredNorm();
            for (int l = 0; l < landmarks_.size(); ++l) {
                out.gradient.row(landmarks_.pairs[static_cast<std::size_t>(l)].first) +=
                    2.0 * landmarks_.lambda * res.row(l);
            }
        }
        return out;
    }

    /// ||f_P - g_Q||_F.
    double residual_norm(const Points& f) const { return landmark_residual(f, targets_, landmarks_).norm(); }

private:
    FaceDomain domain_;
    Points targets_;
    LandmarkSet landmarks_;
};

}  // namespace torusmap
