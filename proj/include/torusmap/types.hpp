#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace torusmap {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;

/// n x 3 matrix whose row l is the image f(v_l). Column-major so that the
/// columns f^1, f^2, f^3 are contiguous, matching vec(f).
using Points = Eigen::MatrixX3d;

using Face = std::array<int, 3>;

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
    virtual const char* kind() const noexcept { return "Error"; }
};

#define TORUSMAP_DEFINE_ERROR(Name)                                     \
    class Name : public Error {                                         \
    public:                                                             \
        explicit Name(const std::string& what) : Error(what) {}         \
        const char* kind() const noexcept override { return #Name; }    \
    };

// mesh
TORUSMAP_DEFINE_ERROR(IoError)
TORUSMAP_DEFINE_ERROR(ParseError)
TORUSMAP_DEFINE_ERROR(TopologyError)
TORUSMAP_DEFINE_ERROR(GenusError)
TORUSMAP_DEFINE_ERROR(DegenerateFaceError)
// torus
TORUSMAP_DEFINE_ERROR(AxisSingularity)
TORUSMAP_DEFINE_ERROR(CoreSingularity)
TORUSMAP_DEFINE_ERROR(NotOnManifold)
TORUSMAP_DEFINE_ERROR(InvalidShape)
// energy
TORUSMAP_DEFINE_ERROR(DegenerateImageFace)
TORUSMAP_DEFINE_ERROR(ZeroImageArea)
TORUSMAP_DEFINE_ERROR(LandmarkError)
// homology
TORUSMAP_DEFINE_ERROR(LoopError)
TORUSMAP_DEFINE_ERROR(NotSimpleError)
TORUSMAP_DEFINE_ERROR(IndependenceError)
TORUSMAP_DEFINE_ERROR(SolverError)
TORUSMAP_DEFINE_ERROR(CutNotDisk)
TORUSMAP_DEFINE_ERROR(SingularPeriods)
// initmap
TORUSMAP_DEFINE_ERROR(SingularLattice)
// optim
TORUSMAP_DEFINE_ERROR(NotDescent)
TORUSMAP_DEFINE_ERROR(LineSearchFailure)
TORUSMAP_DEFINE_ERROR(ConfigError)

#undef TORUSMAP_DEFINE_ERROR

/// Thrown when a torus projection hits a singular row; carries the row index.
class RowSingularity : public Error {
public:
    RowSingularity(const std::string& what, int row) : Error(what), row_(row) {}
    const char* kind() const noexcept override { return "RowSingularity"; }
    int row() const noexcept { return row_; }

private:
    int row_;
};

/// Deterministic uniform generator (splitmix64). Used for jitter and seeds so
/// that outputs do not depend on the standard library's distributions.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    /// Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

private:
    std::uint64_t state_;
};

}  // namespace torusmap
