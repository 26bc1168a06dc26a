#pragma once

#include "torusmap/energy.hpp"
#include "torusmap/homology.hpp"
#include "torusmap/initmap.hpp"
#include "torusmap/mesh.hpp"
#include "torusmap/optim.hpp"
#include "torusmap/quality.hpp"
#include "torusmap/torus.hpp"

#include <optional>
#include <utility>
#include <string>
#include <vector>

namespace torusmap {

struct PipelineConfig {
    TorusShape shape;
    OptimizerConfig optim;
    FixedPointOptions init;
    bool correct_bijectivity = false;
    int correction_rounds = 10;
};

/// Loops, fundamental domain, planar fixed point and the wrapped start map.
struct InitialMapping {
    DomainComputation domain;
    PeriodicPlanarMap planar;
    double phase = 0.0;  ///< v offset applied before wrapping
    Points f0;
    std::vector<std::string> warnings;
};

inline InitialMapping initial_mapping(const SimplicialSurface& s, const std::optional<LoopBasis>& loops,
                                      const TorusShape& shape, const FixedPointOptions& init = {}) {
    InitialMapping out;
    out.warnings = s.warnings();
    LoopBasis basis = loops ? *loops : fallback_loops(s);
    out.warnings.insert(out.warnings.end(), basis.warnings.begin(), basis.warnings.end());
    out.domain = compute_fundamental_domain(s, basis);
    // gamma1 becomes the theta direction of the torus; for automatically
    // chosen loops take the one with the longer period, as the major circle
    // is the longer one.
    if (!loops && out.domain.domain.w2.norm() > out.domain.domain.w1.norm()) {
        std::swap(basis.gamma1, basis.gamma2);
        out.domain = compute_fundamental_domain(s, basis);
    }
    if (out.domain.domain.flipped_faces > 0) {
        out.warnings.push_back(std::to_string(out.domain.domain.flipped_faces) +
                               " faces of the fundamental domain are flipped");
    }
    out.planar = sem_fixed_point(s, normalize_domain(out.domain.domain), init);
    out.warnings.insert(out.warnings.end(), out.planar.warnings.begin(), out.planar.warnings.end());
    out.phase = best_phase_offset(s, out.planar, shape);
    out.planar = translate_planar(s, out.planar, Vec2(0.0, out.phase));
    out.f0 = wrap_to_torus(out.planar, shape);
    return out;
}

/// One optimizer run plus the quality report, optionally after unfolding.
struct Parameterization {
    Method method = Method::PCG;
    SolveResult result;
    QualityReport quality;
    std::optional<CorrectionResult> correction;
    std::optional<QualityReport> quality_before_correction;
};

inline Parameterization run_parameterization(const SimplicialSurface& s, const Points& f0, const PipelineConfig& cfg,
                                             Method method) {
    OptimizerConfig oc = cfg.optim;
    oc.method = method;
    Parameterization p;
    p.method = method;
    p.result = solve(FaceDomain(s), f0, cfg.shape, oc);
    p.quality = quality_report(s, p.result.f, cfg.shape);
    if (cfg.correct_bijectivity) {
        p.quality_before_correction = p.quality;
        p.correction = correct_bijectivity(s, p.result.f, cfg.shape, cfg.correction_rounds);
        p.result.f = p.correction->f;
        p.quality = quality_report(s, p.result.f, cfg.shape);
    }
    return p;
}

}  // namespace torusmap
