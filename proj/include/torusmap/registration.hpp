#pragma once

#include "torusmap/energy.hpp"
#include "torusmap/homology.hpp"
#include "torusmap/mesh.hpp"
#include "torusmap/optim.hpp"
#include "torusmap/torus.hpp"
#include "torusmap/types.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <string>
#include <vector>

namespace torusmap {

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

inline double wrap_angle(double a) {
    double w = std::fmod(a, kTwoPi);
    if (w < 0.0) w += kTwoPi;
    if (w >= kTwoPi) w = 0.0;
    return w;
}

/// (theta, phi) in [0, 2 pi)^2 of a point on or near the torus.
inline Vec2 torus_angles(const Vec3& p, const TorusShape& shape) {
    const double rho = std::hypot(p.x(), p.y());
    if (rho * rho < kSingularityTol) throw AxisSingularity("point lies on the z-axis; azimuth undefined");
    const double c = rho - shape.R();
    if (c * c + p.z() * p.z() < kSingularityTol) throw CoreSingularity("point lies on the core circle; elevation undefined");
    return {wrap_angle(std::atan2(p.y(), p.x())), wrap_angle(std::atan2(p.z(), c))};
}

/// Per-row torus coordinates; n x 2 with columns (theta, phi).
inline Eigen::MatrixX2d torus_coordinates(const Points& f, const TorusShape& shape) {
    Eigen::MatrixX2d out(f.rows(), 2);
    for (Eigen::Index i = 0; i < f.rows(); ++i) {
        try {
            out.row(i) = torus_angles(f.row(i), shape);
        } catch (const Error& e) {
            throw RowSingularity(std::string(e.what()) + " (vertex " + std::to_string(i) + ")", static_cast<int>(i));
        }
    }
    return out;
}

inline Points embed_coordinates(const Eigen::MatrixX2d& angles, const TorusShape& shape) {
    Points out(angles.rows(), 3);
    for (Eigen::Index i = 0; i < angles.rows(); ++i) out.row(i) = shape.embed(angles(i, 0), angles(i, 1));
    return out;
}

struct UnifiedTori {
    Points f;
    Points g;
    TorusShape shape;
};

/// Moves both maps onto the torus with the mean radii, keeping (theta, phi).
inline UnifiedTori unify_tori(const Points& f, const TorusShape& shape_f, const Points& g, const TorusShape& shape_g) {
    const TorusShape shape(0.5 * (shape_f.R() + shape_g.R()), 0.5 * (shape_f.r() + shape_g.r()));
    return {embed_coordinates(torus_coordinates(f, shape_f), shape),
            embed_coordinates(torus_coordinates(g, shape_g), shape), shape};
}

/// Reads {"pairs": [[p, q], ...], "lambda": 0.2}.
inline LandmarkSet load_landmarks(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("landmark file '" + path + "': " + e.what());
    }
    LandmarkSet set;
    if (j.contains("lambda")) {
        if (!j["lambda"].is_number()) throw LandmarkError("lambda must be a number");
        set.lambda = j["lambda"].get<double>();
    }
    if (!j.contains("pairs") || !j["pairs"].is_array()) throw LandmarkError("missing 'pairs' array");
    for (const auto& pr : j["pairs"]) {
        if (!pr.is_array() || pr.size() != 2 || !pr[0].is_number_integer() || !pr[1].is_number_integer()) {
            throw LandmarkError("each landmark pair must be [source, target] integers");
        }
        set.pairs.emplace_back(pr[0].get<int>(), pr[1].get<int>());
    }
    return set;
}

/// Minimizes E_R over maps of M with the target positions g(q_l) frozen and
/// records ||f_P - g_Q||_F as an extra trace column.
inline SolveResult register_maps(const SimplicialSurface& source, const Points& f0, const Points& g,
                                 const LandmarkSet& landmarks, const TorusShape& shape, const OptimizerConfig& cfg) {
    landmarks.validate(source.vertex_count(), static_cast<int>(g.rows()));
    const RegistrationObjective obj(source, gather_targets(g, landmarks), landmarks);
    TraceMonitor monitor{"landmark_residual", [&obj](const Points& f) { return obj.residual_norm(f); }};
    return solve(obj, f0, shape, cfg, monitor);
}

struct MorphSnapshot {
    double t = 0.0;
    Points H;
};

/// H(v, t) = (1 - t) v + t Phi(v) at each requested t.
inline std::vector<MorphSnapshot> morph(const Points& source, const Points& phi, const std::vector<double>& ts) {
    if (source.rows() != phi.rows()) throw std::invalid_argument("morph endpoints differ in vertex count");
    std::vector<MorphSnapshot> out;
    out.reserve(ts.size());
    for (double t : ts) out.push_back({t, (1.0 - t) * source + t * phi});
    return out;
}

inline std::vector<double> default_morph_times() { return {0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0}; }

// ---------------------------------------------------------------------------
// point location in the (theta, phi) square

/// Locates points of the torus in the image of a map g of a mesh N and
/// returns the barycentric interpolation of N's vertex positions.
class TorusLocator {
public:
    TorusLocator(const SimplicialSurface& target, const Points& g, const TorusShape& shape, int buckets = 64)
        : target_(target), buckets_(buckets), angles_(torus_coordinates(g, shape)) {
        grid_.resize(static_cast<std::size_t>(buckets * buckets));
        unwrapped_.resize(static_cast<std::size_t>(target.face_count()));
        for (int t = 0; t < target.face_count(); ++t) {
            const Face& f = target.face(t);
            auto& u = unwrapped_[static_cast<std::size_t>(t)];
            u[0] = angles_.row(f[0]);
            for (std::size_t k = 1; k < 3; ++k) {
                Vec2 d = angles_.row(f[k]).transpose() - u[0];
                for (int c = 0; c < 2; ++c) d(c) -= kTwoPi * std::round(d(c) / kTwoPi);
                u[k] = u[0] + d;
            }
            Vec2 lo = u[0].cwiseMin(u[1]).cwiseMin(u[2]);
            Vec2 hi = u[0].cwiseMax(u[1]).cwiseMax(u[2]);
            const int i0 = bucket_floor(lo.x()), i1 = bucket_floor(hi.x());
            const int j0 = bucket_floor(lo.y()), j1 = bucket_floor(hi.y());
            for (int i = i0; i <= i1; ++i) {
                for (int j = j0; j <= j1; ++j) grid_[index(i, j)].push_back(t);
            }
        }
    }

    /// Position on N of the point with torus coordinates (theta, phi).
    Vec3 locate(const Vec2& angle) const {
        const int i = bucket_floor(angle.x());
        const int j = bucket_floor(angle.y());
        int best_face = -1;
        Vec3 best_bary;
        double best_violation = std::numeric_limits<double>::infinity();
        for (int di = -1; di <= 1; ++di) {
            for (int dj = -1; dj <= 1; ++dj) {
                for (int t : grid_[index(i + di, j + dj)]) {
                    Vec3 bary;
                    const double v = violation(t, angle, bary);
                    if (v < best_violation) {
                        best_violation = v;
                        best_face = t;
                        best_bary = bary;
                    }
                }
            }
        }
        if (best_face < 0) throw SolverError("point location failed");
        const Face& f = target_.face(best_face);
        const Points& V = target_.vertices();
        return best_bary(0) * V.row(f[0]).transpose() + best_bary(1) * V.row(f[1]).transpose() +
               best_bary(2) * V.row(f[2]).transpose();
    }

private:
    int bucket_floor(double a) const { return static_cast<int>(std::floor(a / kTwoPi * buckets_)); }

    std::size_t index(int i, int j) const {
        const int ii = ((i % buckets_) + buckets_) % buckets_;
        const int jj = ((j % buckets_) + buckets_) % buckets_;
        return static_cast<std::size_t>(ii * buckets_ + jj);
    }

    // How far outside face t the point lies (0 when inside), in barycentric units.
    double violation(int t, const Vec2& angle, Vec3& bary) const {
        const auto& u = unwrapped_[static_cast<std::size_t>(t)];
        Vec2 p = angle - u[0];
        for (int c = 0; c < 2; ++c) p(c) -= kTwoPi * std::round(p(c) / kTwoPi);
        const Vec2 e1 = u[1] - u[0];
        const Vec2 e2 = u[2] - u[0];
        const double det = e1.x() * e2.y() - e1.y() * e2.x();
        if (det == 0.0) return std::numeric_limits<double>::infinity();
        const double b1 = (p.x() * e2.y() - p.y() * e2.x()) / det;
        const double b2 = (e1.x() * p.y() - e1.y() * p.x()) / det;
        bary = Vec3(1.0 - b1 - b2, b1, b2);
        return std::max(0.0, -bary.minCoeff());
    }

    const SimplicialSurface& target_;
    int buckets_;
    Eigen::MatrixX2d angles_;
    std::vector<std::array<Vec2, 3>> unwrapped_;
    std::vector<std::vector<int>> grid_;
};

/// Phi = g^{-1} o f: each vertex of M is sent to the point of N whose image
/// under g has the same torus coordinates as f(v).
inline Points compose_inverse(const Points& f, const SimplicialSurface& target, const Points& g,
                              const TorusShape& shape) {
    const TorusLocator locator(target, g, shape);
    const Eigen::MatrixX2d a = torus_coordinates(f, shape);
    Points out(f.rows(), 3);
    for (Eigen::Index i = 0; i < f.rows(); ++i) out.row(i) = locator.locate(a.row(i));
    return out;
}

// ---------------------------------------------------------------------------
// texture coordinates

/// UV layout with its own vertex list: face t uses uvs rows face_uvs[t].
struct TextureUV {
    Eigen::MatrixX2d uvs;
    std::vector<Face> face_uvs;
};

namespace detail {

inline TextureUV unwrap_faces(const SimplicialSurface& s, const Eigen::MatrixX2d& base) {
    TextureUV out;
    std::map<std::array<long long, 3>, int> index;
    std::vector<Vec2> rows;
    out.face_uvs.resize(static_cast<std::size_t>(s.face_count()));
    for (int t = 0; t < s.face_count(); ++t) {
        const Face& f = s.face(t);
        const Vec2 p0 = base.row(f[0]);
        for (std::size_t k = 0; k < 3; ++k) {
            const Vec2 p = base.row(f[k]);
            const Vec2 shift = (p0 - p).array().round().matrix();
            const std::array<long long, 3> key{f[k], static_cast<long long>(shift.x()),
                                               static_cast<long long>(shift.y())};
            auto [it, inserted] = index.emplace(key, static_cast<int>(rows.size()));
            if (inserted) rows.push_back(p + shift);
            out.face_uvs[static_cast<std::size_t>(t)][k] = it->second;
        }
    }
    out.uvs.resize(static_cast<Eigen::Index>(rows.size()), 2);
    for (std::size_t i = 0; i < rows.size(); ++i) out.uvs.row(static_cast<Eigen::Index>(i)) = rows[i];
    return out;
}

inline void apply_transform(TextureUV& tex, double scale, const Vec2& translate) {
    tex.uvs = (scale * tex.uvs).rowwise() + translate.transpose();
}

}  // namespace detail

/// UVs from torus coordinates: (theta, phi) / 2 pi, seams duplicated so no
/// face wraps around, then scaled and translated.
inline TextureUV texture_uv(const SimplicialSurface& s, const Eigen::MatrixX2d& angles, double scale = 1.0,
                            const Vec2& translate = Vec2::Zero()) {
    TextureUV tex = detail::unwrap_faces(s, angles / kTwoPi);
    detail::apply_transform(tex, scale, translate);
    return tex;
}

/// UVs from a fundamental domain in lattice coordinates; the cut already
/// duplicates the seam vertices.
inline TextureUV texture_uv(const FundamentalDomain& dom, double scale = 1.0, const Vec2& translate = Vec2::Zero()) {
    Eigen::Matrix2d B;
    B.col(0) = dom.w1;
    B.col(1) = dom.w2;
    if (!(std::abs(B.determinant()) > 1e-14)) throw SingularLattice("lattice vectors are linearly dependent");
    TextureUV tex;
    tex.uvs = (B.inverse() * dom.coords.transpose()).transpose();
    tex.face_uvs = dom.faces;
    const Vec2 lo = tex.uvs.colwise().minCoeff();
    tex.uvs = tex.uvs.rowwise() - lo.array().floor().matrix().transpose();
    detail::apply_transform(tex, scale, translate);
    return tex;
}

}  // namespace torusmap
