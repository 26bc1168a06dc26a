#pragma once

#include "torusmap/energy.hpp"
#include "torusmap/mesh.hpp"
#include "torusmap/torus.hpp"
#include "torusmap/types.hpp"

#include <cstdint>
#include <memory>

namespace torusmap {

/// Adds independent uniform noise in [-amplitude, amplitude) to every
/// coordinate and projects back onto the torus.
inline Points jitter_on_torus(const Points& f, const TorusShape& shape, double amplitude, std::uint64_t seed) {
    SplitMix64 rng(seed);
    Points out = f;
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
        for (int c = 0; c < 3; ++c) out(i, c) += rng.uniform(-amplitude, amplitude);
    }
    return project_points(out, shape);
}

/// Torus grid with its identity embedding and a jittered starting map.
/// The surface is heap-allocated so that views into it stay valid when the
/// benchmark is moved.
struct TorusBenchmark {
    std::unique_ptr<SimplicialSurface> surface;
    TorusShape shape;
    Points identity;
    Points f0;
};

/// make_torus_grid(R, r, n, n) with each identity row perturbed by
/// jitter * r per coordinate and re-projected.
inline TorusBenchmark jittered_torus_benchmark(int n_theta = 16, int n_phi = 16, const TorusShape& shape = {},
                                               double jitter = 0.05, std::uint64_t seed = 1) {
    auto [surface, identity] = make_torus_grid(shape.R(), shape.r(), n_theta, n_phi);
    TorusBenchmark b;
    b.surface = std::make_unique<SimplicialSurface>(std::move(surface));
    b.shape = shape;
    b.identity = std::move(identity);
    b.f0 = jitter_on_torus(b.identity, shape, jitter * shape.r(), seed);
    return b;
}

/// Two jittered copies of the same grid map, registered through landmark
/// pairs (i, i) at evenly spaced vertices.
struct RegistrationBenchmark {
    std::unique_ptr<SimplicialSurface> surface;
    TorusShape shape;
    Points f0;
    Points g;
    LandmarkSet landmarks;
};

inline RegistrationBenchmark registration_benchmark(int n = 16, int landmark_count = 5, double lambda = 0.2,
                                                    double jitter = 0.05, std::uint64_t seed = 1) {
    auto [surface, identity] = make_torus_grid(2.0, 1.0, n, n);
    RegistrationBenchmark b;
    b.surface = std::make_unique<SimplicialSurface>(std::move(surface));
    b.f0 = jitter_on_torus(identity, b.shape, jitter * b.shape.r(), seed);
    b.g = jitter_on_torus(identity, b.shape, jitter * b.shape.r(), seed + 1);
    b.landmarks.lambda = lambda;
    const int nv = b.surface->vertex_count();
    for (int l = 0; l < landmark_count; ++l) {
        const int v = (l * nv) / landmark_count + l * 3 % n;
        b.landmarks.pairs.emplace_back(v, v);
    }
    return b;
}

}  // namespace torusmap
