#pragma once

#include "torusmap/energy.hpp"
#include "torusmap/homology.hpp"
#include "torusmap/mesh.hpp"
#include "torusmap/torus.hpp"
#include "torusmap/types.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

namespace torusmap {

using Shift = Eigen::Vector2d;

/// Planar map of a genus-one surface into the unit square with periodic
/// identification. uv holds one point per original vertex in [0,1)^2; the
/// corner of face t at slot k sits at uv(face[k]) + shifts[t][k].
struct PeriodicPlanarMap {
    Eigen::MatrixX2d uv;
    std::vector<std::array<Shift, 3>> shifts;
    std::vector<std::string> warnings;

    /// Unwrapped corner positions of face t.
    std::array<Vec2, 3> corners(const SimplicialSurface& s, int t) const {
        const Face& f = s.face(t);
        std::array<Vec2, 3> out;
        for (std::size_t k = 0; k < 3; ++k) out[k] = uv.row(f[k]).transpose() + shifts[static_cast<std::size_t>(t)][k];
        return out;
    }
};

inline double signed_area(const std::array<Vec2, 3>& p) {
    return 0.5 * ((p[1] - p[0]).x() * (p[2] - p[0]).y() - (p[1] - p[0]).y() * (p[2] - p[0]).x());
}

/// Re-expresses the domain in the basis (w1, w2), reduces every original
/// vertex modulo the lattice, and records per-corner integer shifts.
inline PeriodicPlanarMap normalize_domain(const FundamentalDomain& dom) {
    Eigen::Matrix2d B;
    B.col(0) = dom.w1;
    B.col(1) = dom.w2;
    const double det = B.determinant();
    if (!(std::abs(det) > 1e-14) || !std::isfinite(det)) throw SingularLattice("lattice vectors are linearly dependent");
    const Eigen::Matrix2d Binv = B.inverse();

    int n = 0;
    for (int v : dom.correspondence) n = std::max(n, v + 1);
    const Eigen::MatrixX2d lattice = (Binv * dom.coords.transpose()).transpose();

    PeriodicPlanarMap map;
    map.uv = Eigen::MatrixX2d::Constant(n, 2, std::nan(""));
    for (Eigen::Index c = 0; c < lattice.rows(); ++c) {
        const int v = dom.correspondence[static_cast<std::size_t>(c)];
        if (!std::isnan(map.uv(v, 0))) continue;
        for (int k = 0; k < 2; ++k) {
            double x = lattice(c, k) - std::floor(lattice(c, k));
            if (x >= 1.0) x = 0.0;
            map.uv(v, k) = x;
        }
    }
    map.shifts.resize(dom.faces.size());
    for (std::size_t t = 0; t < dom.faces.size(); ++t) {
        for (std::size_t k = 0; k < 3; ++k) {
            const int c = dom.faces[t][k];
            const int v = dom.correspondence[static_cast<std::size_t>(c)];
            const Vec2 d = lattice.row(c).transpose() - map.uv.row(v).transpose();
            map.shifts[t][k] = d.array().round().matrix();
        }
    }
    return map;
}

/// Planar stretch energy sum_tau |x(tau)|^2 / |tau| of the unwrapped map.
inline double planar_stretch_energy(const SimplicialSurface& s, const PeriodicPlanarMap& map) {
    double e = 0.0;
    for (int t = 0; t < s.face_count(); ++t) {
        const double a = signed_area(map.corners(s, t));
        e += a * a / s.face_area(t);
    }
    return e;
}

/// |x(tau)| / |tau| per face, signed so that flipped faces are negative.
inline std::vector<double> planar_area_ratios(const SimplicialSurface& s, const PeriodicPlanarMap& map) {
    std::vector<double> out(static_cast<std::size_t>(s.face_count()));
    for (int t = 0; t < s.face_count(); ++t) out[static_cast<std::size_t>(t)] = signed_area(map.corners(s, t)) / s.face_area(t);
    return out;
}

inline int planar_flip_count(const SimplicialSurface& s, const PeriodicPlanarMap& map) {
    int flips = 0;
    for (int t = 0; t < s.face_count(); ++t) flips += signed_area(map.corners(s, t)) <= 0.0 ? 1 : 0;
    return flips;
}

/// Translates the map by `offset` in lattice coordinates, keeping uv in
/// [0,1)^2 and moving whole periods into the corner shifts.
inline PeriodicPlanarMap translate_planar(const SimplicialSurface& s, PeriodicPlanarMap map, const Vec2& offset) {
    for (int v = 0; v < map.uv.rows(); ++v) {
        const Vec2 x = map.uv.row(v).transpose() + offset;
        Vec2 fl(std::floor(x.x()), std::floor(x.y()));
        Vec2 r = x - fl;
        for (int k = 0; k < 2; ++k) {
            if (r(k) >= 1.0) {
                r(k) = 0.0;
                fl(k) += 1.0;
            }
        }
        map.uv.row(v) = r;
        for (int t : s.vertex_faces(v)) {
            const Face& f = s.face(t);
            for (std::size_t k = 0; k < 3; ++k) {
                if (f[k] == v) map.shifts[static_cast<std::size_t>(t)][k] += fl;
            }
        }
    }
    return map;
}

struct FixedPointOptions {
    int max_iters = 50;
    double tol = 1e-6;
    double min_step = 1.0 / 64.0;  ///< smallest damping factor tried per step
};

/// Stretch-energy fixed-point iteration on the periodic plane: with weights
/// frozen at the current iterate, solve L_S(x_k) x_{k+1} = 0 where every edge
/// difference includes its lattice shift. Steps that raise the energy or flip
/// a face are damped by halving; when no damping helps the iteration ends.
inline PeriodicPlanarMap sem_fixed_point(const SimplicialSurface& s, PeriodicPlanarMap map,
                                         const FixedPointOptions& opts = {}) {
    const int n = s.vertex_count();
    double energy = planar_stretch_energy(s, map);
    for (int it = 0; it < opts.max_iters; ++it) {
        std::vector<Eigen::Triplet<double>> trip;
        trip.reserve(static_cast<std::size_t>(12 * s.face_count()));
        Eigen::MatrixX2d b = Eigen::MatrixX2d::Zero(n, 2);
        bool degenerate = false;
        for (int t = 0; t < s.face_count(); ++t) {
            const auto p = map.corners(s, t);
            if (signed_area(p) <= 0.0) {
                degenerate = true;
                break;
            }
            const Face& f = s.face(t);
            const auto& sh = map.shifts[static_cast<std::size_t>(t)];
            for (int k = 0; k < 3; ++k) {
                const int i1 = (k + 1) % 3;
                const int j1 = (k + 2) % 3;
                const Vec2 a = p[static_cast<std::size_t>(i1)] - p[static_cast<std::size_t>(k)];
                const Vec2 c = p[static_cast<std::size_t>(j1)] - p[static_cast<std::size_t>(k)];
                const double w = a.dot(c) / (4.0 * s.face_area(t));
                const int i = f[static_cast<std::size_t>(i1)];
                const int j = f[static_cast<std::size_t>(j1)];
                trip.emplace_back(i, i, w);
                trip.emplace_back(j, j, w);
                trip.emplace_back(i, j, -w);
                trip.emplace_back(j, i, -w);
                const Vec2 ds = sh[static_cast<std::size_t>(i1)] - sh[static_cast<std::size_t>(j1)];
                b.row(i) -= w * ds.transpose();
                b.row(j) += w * ds.transpose();
            }
        }
        if (degenerate) {
            map.warnings.emplace_back("fixed-point iteration stopped: input has flipped or degenerate faces");
            break;
        }
        Eigen::SparseMatrix<double> L(n, n);
        L.setFromTriplets(trip.begin(), trip.end());

        Eigen::MatrixX2d target(n, 2);
        for (int c = 0; c < 2; ++c) target.col(c) = solve_grounded(L, b.col(c)).array() + map.uv(0, c);

        // damped step: halve towards the current iterate until the energy
        // drops and no face flips
        PeriodicPlanarMap next = map;
        double next_energy = energy;
        bool accepted = false;
        for (double step = 1.0; step >= opts.min_step; step *= 0.5) {
            next.uv = map.uv + step * (target - map.uv);
            if (planar_flip_count(s, next) > 0) continue;
            next_energy = planar_stretch_energy(s, next);
            if (next_energy < energy) {
                accepted = true;
                break;
            }
        }
        if (!accepted) break;
        const double change = (energy - next_energy) / energy;
        map = std::move(next);
        energy = next_energy;
        if (change < opts.tol) break;
    }
    return translate_planar(s, std::move(map), Vec2::Zero());
}

/// (theta, phi) = 2 pi (u, v) placed on the torus.
inline Points wrap_to_torus(const PeriodicPlanarMap& map, const TorusShape& shape) {
    Points f(map.uv.rows(), 3);
    for (Eigen::Index v = 0; v < map.uv.rows(); ++v) {
        f.row(v) = shape.embed(2.0 * std::numbers::pi * map.uv(v, 0), 2.0 * std::numbers::pi * map.uv(v, 1));
    }
    return f;
}

/// The phi = 2 pi v direction of the torus is not homogeneous, so where the
/// planar map is placed in v changes the wrapped energy. Returns the v offset
/// minimizing E(wrap_to_torus(map + (0, c))): a coarse scan followed by
/// golden-section refinement around the best sample.
inline double best_phase_offset(const SimplicialSurface& s, const PeriodicPlanarMap& map, const TorusShape& shape,
                                int samples = 64) {
    auto energy = [&](double c) {
        const Points f = wrap_to_torus(translate_planar(s, map, Vec2(0.0, c)), shape);
        try {
            return objective(s, f).objective;
        } catch (const Error&) {
            return std::numeric_limits<double>::infinity();
        }
    };
    int best = 0;
    double best_e = std::numeric_limits<double>::infinity();
    for (int k = 0; k < samples; ++k) {
        const double e = energy(static_cast<double>(k) / samples);
        if (e < best_e) {
            best_e = e;
            best = k;
        }
    }
    const double h = 1.0 / samples;
    double lo = (best - 1) * h;
    double hi = (best + 1) * h;
    const double g = 0.5 * (std::sqrt(5.0) - 1.0);
    double x1 = hi - g * (hi - lo);
    double x2 = lo + g * (hi - lo);
    double e1 = energy(x1);
    double e2 = energy(x2);
    for (int it = 0; it < 40; ++it) {
        if (e1 < e2) {
            hi = x2;
            x2 = x1;
            e2 = e1;
            x1 = hi - g * (hi - lo);
            e1 = energy(x1);
        } else {
            lo = x1;
            x1 = x2;
            e1 = e2;
            x2 = lo + g * (hi - lo);
            e2 = energy(x2);
        }
    }
    const double c = 0.5 * (lo + hi);
    const double refined = energy(c);
    const double offset = refined <= best_e ? c : best * h;
    return offset - std::floor(offset);
}

}  // namespace torusmap
