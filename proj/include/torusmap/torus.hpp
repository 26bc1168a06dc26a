#pragma once

#include "torusmap/types.hpp"

#include <Eigen/Geometry>

#include <cmath>
#include <string>

namespace torusmap {

/// Ring torus T^2(R, r): the tube of radius r swept around the z-axis at
/// distance R. Requires R > r > 0.
class TorusShape {
public:
    TorusShape() = default;
    TorusShape(double major, double minor) : R_(major), r_(minor) {
        if (!(major > minor && minor > 0.0) || !std::isfinite(major)) {
            throw InvalidShape("ring torus requires R > r > 0 (got R=" + std::to_string(major) +
                               ", r=" + std::to_string(minor) + ")");
        }
    }

    double R() const { return R_; }
    double r() const { return r_; }

    /// Point with torus coordinates (theta, phi).
    Vec3 embed(double theta, double phi) const {
        const double rho = R_ + r_ * std::cos(phi);
        return {rho * std::cos(theta), rho * std::sin(theta), r_ * std::sin(phi)};
    }

    /// Signed residual sqrt((sqrt(x^2+y^2) - R)^2 + z^2) - r.
    double residual(const Vec3& x) const {
        const double c = std::hypot(x.x(), x.y()) - R_;
        return std::hypot(c, x.z()) - r_;
    }

    bool contains(const Vec3& x, double rel_tol = 1e-9) const { return std::abs(residual(x)) <= rel_tol * r_; }

private:
    double R_ = 2.0;
    double r_ = 1.0;
};

/// Cosine and sine pair of an angle.
struct CosSin {
    double cos = 1.0;
    double sin = 0.0;
};

inline constexpr double kSingularityTol = 1e-28;

/// Azimuth of q computed straight from its coordinates.
inline CosSin angles_theta(const Vec3& q) {
    const double rr = q.x() * q.x() + q.y() * q.y();
    if (rr < kSingularityTol) throw AxisSingularity("point lies on the z-axis; azimuth undefined");
    const double den = std::sqrt(rr);
    return {q.x() / den, q.y() / den};
}

/// Elevation of q about the core circle of radius R.
inline CosSin angles_phi(const Vec3& q, const TorusShape& shape) {
    const double c = std::sqrt(q.x() * q.x() + q.y() * q.y()) - shape.R();
    const double rr = c * c + q.z() * q.z();
    if (rr < kSingularityTol) throw CoreSingularity("point lies on the core circle; elevation undefined");
    const double den = std::sqrt(rr);
    return {c / den, q.z() / den};
}

/// Nearest point of the torus to q.
inline Vec3 project_point(const Vec3& q, const TorusShape& shape) {
    const CosSin th = angles_theta(q);
    const CosSin ph = angles_phi(q, shape);
    const double rho = shape.R() + shape.r() * ph.cos;
    return {rho * th.cos, rho * th.sin, shape.r() * ph.sin};
}

/// Centre of the tube cross-section through x: (R cos theta_x, R sin theta_x, 0).
inline Vec3 tube_center(const Vec3& x, const TorusShape& shape) {
    const CosSin th = angles_theta(x);
    return {shape.R() * th.cos, shape.R() * th.sin, 0.0};
}

/// Outward unit normal at x (x need not be exactly on the torus).
inline Vec3 unit_normal(const Vec3& x, const TorusShape& shape) {
    const Vec3 fhat = x - tube_center(x, shape);
    const double len = fhat.norm();
    if (len * len < kSingularityTol) throw CoreSingularity("point lies on the core circle; normal undefined");
    return fhat / len;
}

inline void require_on_manifold(const Vec3& x, const TorusShape& shape) {
    if (!shape.contains(x)) {
        throw NotOnManifold("point is off the torus by " + std::to_string(shape.residual(x)));
    }
}

/// Orthogonal projection of a vector v onto T_x T^2.
inline Vec3 project_tangent(const Vec3& v, const Vec3& x, const TorusShape& shape) {
    require_on_manifold(x, shape);
    const Vec3 n = unit_normal(x, shape);
    return v - n.dot(v) * n;
}

/// Point form of the tangent-plane projection: the foot of q on the affine
/// tangent plane through x, computed via the tube-centred frame.
inline Vec3 affine_tangent_point(const Vec3& q, const Vec3& x, const TorusShape& shape) {
    require_on_manifold(x, shape);
    const Vec3 c = tube_center(x, shape);
    const Vec3 fhat = x - c;
    const Vec3 qhat = q - c;
    const Vec3 on_circle = qhat - (fhat.dot(qhat) / fhat.dot(fhat)) * fhat + fhat;
    return on_circle + c;
}

/// Step from x along xi in R^3, then project back onto the torus.
inline Vec3 retract(const Vec3& x, const Vec3& xi, const TorusShape& shape) {
    return project_point(x + xi, shape);
}

/// Parallel transport of a tangent vector xi from T_x to T_y: rotation about
/// the z-axis by theta_y - theta_x followed by a rotation of the tube
/// cross-section carrying the elevation phi_x to phi_y.
inline Vec3 transport(const Vec3& xi, const Vec3& x, const Vec3& y, const TorusShape& shape) {
    const CosSin tx = angles_theta(x);
    const CosSin ty = angles_theta(y);
    const double cos_dt = ty.cos * tx.cos + ty.sin * tx.sin;
    const double sin_dt = ty.sin * tx.cos - ty.cos * tx.sin;
    const Vec3 xi1(cos_dt * xi.x() - sin_dt * xi.y(), sin_dt * xi.x() + cos_dt * xi.y(), xi.z());

    const CosSin px = angles_phi(x, shape);
    const CosSin py = angles_phi(y, shape);
    const double cos_dp = py.cos * px.cos + py.sin * px.sin;
    const double sin_dp = py.sin * px.cos - py.cos * px.sin;

    // Rodrigues rotation about k = (-sin theta_y, cos theta_y, 0). A positive
    // angle about k turns the elevation downward, so the angle used is
    // phi_x - phi_y. The translations by the tube centre cancel for vectors.
    const Vec3 k(-ty.sin, ty.cos, 0.0);
    const Vec3 kx = k.cross(xi1);
    return xi1 - sin_dp * kx - (1.0 - cos_dp) * kx.cross(k);
}

// Power-manifold versions, applied row by row to n x 3 matrices.

inline Points project_points(const Points& q, const TorusShape& shape) {
    Points out(q.rows(), 3);
    for (Eigen::Index i = 0; i < q.rows(); ++i) {
        try {
            out.row(i) = project_point(q.row(i), shape);
        } catch (const Error& e) {
            throw RowSingularity(std::string(e.what()) + " (vertex " + std::to_string(i) + ")",
                                 static_cast<int>(i));
        }
    }
    return out;
}

inline Points project_tangents(const Points& v, const Points& x, const TorusShape& shape) {
    Points out(v.rows(), 3);
    for (Eigen::Index i = 0; i < v.rows(); ++i) out.row(i) = project_tangent(v.row(i), x.row(i), shape);
    return out;
}

inline Points retract_rows(const Points& x, const Points& xi, const TorusShape& shape) {
    return project_points(x + xi, shape);
}

inline Points transport_rows(const Points& xi, const Points& x, const Points& y, const TorusShape& shape) {
    Points out(xi.rows(), 3);
    for (Eigen::Index i = 0; i < xi.rows(); ++i) out.row(i) = transport(xi.row(i), x.row(i), y.row(i), shape);
    return out;
}

/// Largest |residual| / r over the rows.
inline double max_manifold_residual(const Points& x, const TorusShape& shape) {
    double worst = 0.0;
    for (Eigen::Index i = 0; i < x.rows(); ++i) worst = std::max(worst, std::abs(shape.residual(x.row(i))));
    return worst / shape.r();
}

}  // namespace torusmap
