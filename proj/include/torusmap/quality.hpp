#pragma once

#include "torusmap/energy.hpp"
#include "torusmap/mesh.hpp"
#include "torusmap/torus.hpp"
#include "torusmap/types.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <span>
#include <vector>

namespace torusmap {

/// |f(tau)| / |tau| for every face.
inline std::vector<double> area_ratios(const FaceDomain& d, const Points& f) {
    std::vector<double> out(d.faces.size());
    for (std::size_t t = 0; t < d.faces.size(); ++t) {
        const Face& face = d.faces[t];
        out[t] = triangle_area(f.row(face[0]), f.row(face[1]), f.row(face[2])) / d.source_areas[t];
    }
    return out;
}

/// Population standard deviation divided by the mean.
inline double sd_over_mean(std::span<const double> values) {
    if (values.empty()) return 0.0;
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    double var = 0.0;
    for (double v : values) var += (v - mean) * (v - mean);
    var /= static_cast<double>(values.size());
    return std::sqrt(var) / mean;
}

struct FoldReport {
    int count = 0;
    std::vector<int> faces;
};

/// A face is folded when its image normal points against the sum of the
/// outward torus normals at its three image vertices.
inline FoldReport count_folds(const FaceDomain& d, const Points& f, const TorusShape& shape) {
    FoldReport out;
    for (std::size_t t = 0; t < d.faces.size(); ++t) {
        const Face& face = d.faces[t];
        const Vec3 a = f.row(face[0]);
        const Vec3 b = f.row(face[1]);
        const Vec3 c = f.row(face[2]);
        const Vec3 n = (b - a).cross(c - a);
        const Vec3 m = unit_normal(a, shape) + unit_normal(b, shape) + unit_normal(c, shape);
        if (n.dot(m) < 0.0) {
            ++out.count;
            out.faces.push_back(static_cast<int>(t));
        }
    }
    return out;
}

struct CorrectionResult {
    Points f;
    int rounds = 0;
    int folds_before = 0;
    int folds_after = 0;
};

/// Local unfolding: each round moves every vertex of a folded face halfway
/// towards the projected centroid of its 1-ring and projects back. A round
/// that would increase the fold count is discarded and ends the correction.
inline CorrectionResult correct_bijectivity(const SimplicialSurface& s, const Points& f, const TorusShape& shape,
                                            int max_rounds = 10) {
    CorrectionResult out{f, 0, 0, 0};
    FoldReport folds = count_folds(s, f, shape);
    out.folds_before = out.folds_after = folds.count;
    while (folds.count > 0 && out.rounds < max_rounds) {
        std::vector<char> move(static_cast<std::size_t>(s.vertex_count()), 0);
        for (int t : folds.faces) {
            for (int v : s.face(t)) move[static_cast<std::size_t>(v)] = 1;
        }
        Points next = out.f;
        for (int v = 0; v < s.vertex_count(); ++v) {
            if (!move[static_cast<std::size_t>(v)]) continue;
            Vec3 centroid = Vec3::Zero();
            for (int w : s.ring(v)) centroid += out.f.row(w).transpose();
            centroid /= static_cast<double>(s.ring(v).size());
            const Vec3 target = project_point(centroid, shape);
            const Vec3 cur = out.f.row(v);
            next.row(v) = project_point(cur + 0.5 * (target - cur), shape);
        }
        FoldReport after = count_folds(s, next, shape);
        ++out.rounds;
        if (after.count > folds.count) break;
        out.f = std::move(next);
        folds = std::move(after);
        out.folds_after = folds.count;
    }
    return out;
}

struct QualityReport {
    double sd_over_mean = 0.0;
    int folds = 0;
    EnergyReport energy;
    std::vector<double> ratios;

    nlohmann::ordered_json to_json() const {
        return {{"sd_over_mean", sd_over_mean},
                {"folds", folds},
                {"E", energy.objective},
                {"E_S", energy.stretch},
                {"area", energy.area}};
    }
};

inline QualityReport quality_report(const FaceDomain& d, const Points& f, const TorusShape& shape) {
    QualityReport q;
    q.ratios = area_ratios(d, f);
    q.sd_over_mean = sd_over_mean(q.ratios);
    q.folds = count_folds(d, f, shape).count;
    q.energy = objective(d, f);
    return q;
}

}  // namespace torusmap
