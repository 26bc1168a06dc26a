#pragma once

#include "torusmap/types.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace torusmap {

inline double triangle_area(const Vec3& a, const Vec3& b, const Vec3& c) {
    return 0.5 * (b - a).cross(c - a).norm();
}

/// Sum of triangle areas of an arbitrary (possibly open) triangle soup.
inline double total_area(const Points& vertices, std::span<const Face> faces) {
    double sum = 0.0;
    for (const Face& f : faces) {
        sum += triangle_area(vertices.row(f[0]), vertices.row(f[1]), vertices.row(f[2]));
    }
    return sum;
}

/// Integer lattice offsets for a flat (periodic) torus. Corner k of face t sits
/// at vertices[face[k]] + shift[t][k][0] * t1 + shift[t][k][1] * t2.
struct PeriodicLattice {
    Vec3 t1 = Vec3::Zero();
    Vec3 t2 = Vec3::Zero();
    std::vector<std::array<std::array<int, 2>, 3>> shifts;
};

struct SurfaceOptions {
    /// Flip all faces when the signed volume is negative instead of
    /// leaving the orientation as given.
    bool fix_orientation = true;
    /// Relative threshold (to the mean face area) below which a face is
    /// rejected as degenerate.
    double degenerate_tol = 1e-14;
};

/// A closed, oriented, connected genus-one triangle mesh. Immutable after
/// construction; every invariant is checked by the constructor.
class SimplicialSurface {
public:
    using Options = SurfaceOptions;

    SimplicialSurface(Points vertices, std::vector<Face> faces)
        : SimplicialSurface(std::move(vertices), std::move(faces), std::nullopt, Options{}) {}

    SimplicialSurface(Points vertices, std::vector<Face> faces, Options options)
        : SimplicialSurface(std::move(vertices), std::move(faces), std::nullopt, options) {}

    SimplicialSurface(Points vertices, std::vector<Face> faces, std::optional<PeriodicLattice> lattice,
                      Options options = {})
        : vertices_(std::move(vertices)), faces_(std::move(faces)), lattice_(std::move(lattice)) {
        build(options);
    }

    int vertex_count() const { return static_cast<int>(vertices_.rows()); }
    int face_count() const { return static_cast<int>(faces_.size()); }
    int edge_count() const { return static_cast<int>(edges_.size()); }
    int euler_characteristic() const { return vertex_count() - edge_count() + face_count(); }

    const Points& vertices() const { return vertices_; }
    const std::vector<Face>& faces() const { return faces_; }
    const Face& face(int t) const { return faces_[static_cast<std::size_t>(t)]; }
    bool is_periodic() const { return lattice_.has_value(); }
    const std::optional<PeriodicLattice>& lattice() const { return lattice_; }

    /// Source positions of the three corners of face t, unwrapped across the
    /// lattice for periodic surfaces.
    std::array<Vec3, 3> corners(int t) const {
        const Face& f = face(t);
        std::array<Vec3, 3> p{vertices_.row(f[0]), vertices_.row(f[1]), vertices_.row(f[2])};
        if (lattice_) {
            const auto& s = lattice_->shifts[static_cast<std::size_t>(t)];
            for (int k = 0; k < 3; ++k) {
                p[k] += s[k][0] * lattice_->t1 + s[k][1] * lattice_->t2;
            }
        }
        return p;
    }

    double face_area(int t) const { return face_areas_.at(static_cast<std::size_t>(t)); }
    const std::vector<double>& face_areas() const { return face_areas_; }
    double total_area() const { return total_area_; }

    /// Undirected edges, stored with the lower vertex index first.
    const std::vector<std::array<int, 2>>& edges() const { return edges_; }

    /// Edge id of the k-th side of face t (corner k to corner k+1).
    int face_edge(int t, int k) const { return face_edges_[static_cast<std::size_t>(t)][static_cast<std::size_t>(k)]; }

    /// Id of edge {i, j}, or -1.
    int edge_index(int i, int j) const {
        auto it = edge_ids_.find(key(std::min(i, j), std::max(i, j)));
        return it == edge_ids_.end() ? -1 : it->second;
    }

    /// Face containing the directed edge i -> j, or -1.
    int face_of_halfedge(int i, int j) const {
        auto it = halfedge_face_.find(key(i, j));
        return it == halfedge_face_.end() ? -1 : it->second;
    }

    /// The third vertex c of the face (a, b, c); around a this is the
    /// counterclockwise successor of b.
    int next_ccw(int a, int b) const {
        const int t = face_of_halfedge(a, b);
        if (t < 0) return -1;
        const Face& f = face(t);
        for (int k = 0; k < 3; ++k) {
            if (f[k] == a) return f[(k + 2) % 3];
        }
        return -1;
    }

    /// Neighbours of v in counterclockwise order.
    const std::vector<int>& ring(int v) const { return rings_[static_cast<std::size_t>(v)]; }
    const std::vector<int>& vertex_faces(int v) const { return vertex_faces_[static_cast<std::size_t>(v)]; }

    /// Non-fatal diagnostics gathered during construction.
    const std::vector<std::string>& warnings() const { return warnings_; }

private:
    static std::uint64_t key(int a, int b) {
        return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) |
               static_cast<std::uint32_t>(b);
    }

    void build(const Options& options) {
        const int n = vertex_count();
        if (faces_.empty() || n < 3) {
            throw TopologyError("non-manifold or open surface: mesh has too few simplices");
        }
        if (lattice_ && lattice_->shifts.size() != faces_.size()) {
            throw TopologyError("periodic lattice shift table does not match the face count");
        }
        for (const Face& f : faces_) {
            for (int k = 0; k < 3; ++k) {
                if (f[k] < 0 || f[k] >= n) throw TopologyError("face references a vertex index out of range");
            }
            if (f[0] == f[1] || f[1] == f[2] || f[0] == f[2]) {
                throw TopologyError("face repeats a vertex");
            }
        }

        if (!lattice_ && options.fix_orientation) {
            double volume = 0.0;
            for (const Face& f : faces_) {
                const Vec3 a = vertices_.row(f[0]);
                volume += a.dot(Vec3(vertices_.row(f[1])).cross(Vec3(vertices_.row(f[2]))));
            }
            if (volume < 0.0) {
                for (Face& f : faces_) std::swap(f[1], f[2]);
                warnings_.emplace_back("negative signed volume: all faces flipped to outward orientation");
            }
        }

        build_connectivity();

        face_areas_.resize(faces_.size());
        total_area_ = 0.0;
        for (int t = 0; t < face_count(); ++t) {
            const auto p = corners(t);
            face_areas_[static_cast<std::size_t>(t)] = triangle_area(p[0], p[1], p[2]);
            total_area_ += face_areas_[static_cast<std::size_t>(t)];
        }
        const double mean = total_area_ / face_count();
        for (int t = 0; t < face_count(); ++t) {
            if (!(face_areas_[static_cast<std::size_t>(t)] >= options.degenerate_tol * mean)) {
                throw DegenerateFaceError("face " + std::to_string(t) + " is degenerate (area " +
                                          std::to_string(face_areas_[static_cast<std::size_t>(t)]) + ")");
            }
        }
        check_conditioning();

        if (euler_characteristic() != 0) {
            throw GenusError("surface is not genus one: Euler characteristic " +
                             std::to_string(euler_characteristic()) + " (expected 0)");
        }
    }

    void build_connectivity() {
        const int n = vertex_count();
        halfedge_face_.reserve(faces_.size() * 3);
        for (int t = 0; t < face_count(); ++t) {
            const Face& f = face(t);
            for (int k = 0; k < 3; ++k) {
                const int a = f[k];
                const int b = f[(k + 1) % 3];
                if (!halfedge_face_.emplace(key(a, b), t).second) {
                    throw TopologyError("non-manifold or open surface: directed edge (" + std::to_string(a) +
                                        ", " + std::to_string(b) + ") appears twice");
                }
            }
        }
        face_edges_.resize(faces_.size());
        for (int t = 0; t < face_count(); ++t) {
            const Face& f = face(t);
            for (int k = 0; k < 3; ++k) {
                const int a = f[k];
                const int b = f[(k + 1) % 3];
                if (!halfedge_face_.contains(key(b, a))) {
                    throw TopologyError("non-manifold or open surface: edge (" + std::to_string(a) + ", " +
                                        std::to_string(b) + ") has no opposite face");
                }
                const auto k2 = key(std::min(a, b), std::max(a, b));
                auto [it, inserted] = edge_ids_.emplace(k2, edge_count());
                if (inserted) edges_.push_back({std::min(a, b), std::max(a, b)});
                face_edges_[static_cast<std::size_t>(t)][static_cast<std::size_t>(k)] = it->second;
            }
        }

        vertex_faces_.assign(static_cast<std::size_t>(n), {});
        for (int t = 0; t < face_count(); ++t) {
            for (int v : face(t)) vertex_faces_[static_cast<std::size_t>(v)].push_back(t);
        }
        rings_.assign(static_cast<std::size_t>(n), {});
        for (int v = 0; v < n; ++v) {
            const auto& vf = vertex_faces_[static_cast<std::size_t>(v)];
            if (vf.empty()) throw TopologyError("vertex " + std::to_string(v) + " is not referenced by any face");
            const Face& f0 = face(vf.front());
            int start = -1;
            for (int k = 0; k < 3; ++k) {
                if (f0[k] == v) start = f0[(k + 1) % 3];
            }
            auto& ring = rings_[static_cast<std::size_t>(v)];
            int cur = start;
            do {
                ring.push_back(cur);
                cur = next_ccw(v, cur);
                if (ring.size() > vf.size()) break;
            } while (cur != start);
            if (ring.size() != vf.size()) {
                throw TopologyError("non-manifold vertex " + std::to_string(v));
            }
        }

        // single connected component
        std::vector<char> seen(static_cast<std::size_t>(n), 0);
        std::vector<int> stack{0};
        seen[0] = 1;
        int reached = 1;
        while (!stack.empty()) {
            const int v = stack.back();
            stack.pop_back();
            for (int w : rings_[static_cast<std::size_t>(v)]) {
                if (!seen[static_cast<std::size_t>(w)]) {
                    seen[static_cast<std::size_t>(w)] = 1;
                    ++reached;
                    stack.push_back(w);
                }
            }
        }
        if (reached != n) throw TopologyError("surface has more than one connected component");
    }

    void check_conditioning() {
        // The modified cotangent weights divide by |tau| and contain cot of
        // source-dependent angles; very thin triangles make them explode.
        constexpr double kMaxCot = 1e4;
        int bad = 0;
        for (int t = 0; t < face_count(); ++t) {
            const auto p = corners(t);
            for (int k = 0; k < 3; ++k) {
                const Vec3 a = p[(k + 1) % 3] - p[k];
                const Vec3 b = p[(k + 2) % 3] - p[k];
                const double cr = a.cross(b).norm();
                if (std::abs(a.dot(b)) > kMaxCot * cr) {
                    ++bad;
                    break;
                }
            }
        }
        if (bad > 0) {
            warnings_.push_back(std::to_string(bad) + " poorly conditioned faces (an angle has |cot| > 1e4)");
        }
    }

    Points vertices_;
    std::vector<Face> faces_;
    std::optional<PeriodicLattice> lattice_;

    std::vector<double> face_areas_;
    double total_area_ = 0.0;
    std::vector<std::array<int, 2>> edges_;
    std::vector<std::array<int, 3>> face_edges_;
    std::unordered_map<std::uint64_t, int> edge_ids_;
    std::unordered_map<std::uint64_t, int> halfedge_face_;
    std::vector<std::vector<int>> vertex_faces_;
    std::vector<std::vector<int>> rings_;
    std::vector<std::string> warnings_;
};

inline double face_area(const SimplicialSurface& surface, int t) {
    if (t < 0 || t >= surface.face_count()) throw std::out_of_range("face index out of range");
    return surface.face_area(t);
}

inline double total_area(const SimplicialSurface& surface) { return surface.total_area(); }

/// Raw OBJ contents: positions, triangles, and optional texture coordinates
/// with per-corner indices.
struct ObjData {
    Points vertices;
    std::vector<Face> faces;
    std::vector<Vec2> uvs;
    std::vector<Face> face_uvs;
};

namespace detail {

inline int parse_obj_index(const std::string& token, int count, int line_no) {
    const std::string head = token.substr(0, token.find('/'));
    int idx = 0;
    try {
        std::size_t used = 0;
        idx = std::stoi(head, &used);
        if (used != head.size()) throw std::invalid_argument(head);
    } catch (const std::exception&) {
        throw ParseError("line " + std::to_string(line_no) + ": bad face index '" + token + "'");
    }
    if (idx < 0) idx = count + idx + 1;  // relative index
    if (idx < 1 || idx > count) {
        throw ParseError("line " + std::to_string(line_no) + ": face index " + head + " out of range");
    }
    return idx - 1;
}

inline int parse_obj_uv_index(const std::string& token, int count, int line_no) {
    const auto a = token.find('/');
    if (a == std::string::npos) return -1;
    const auto b = token.find('/', a + 1);
    const std::string s = token.substr(a + 1, b == std::string::npos ? std::string::npos : b - a - 1);
    if (s.empty()) return -1;
    return parse_obj_index(s, count, line_no);
}

}  // namespace detail

/// Reads v/f (and vt) records. Indices on disk are 1-based.
inline ObjData read_obj(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "'");
    std::vector<Vec3> verts;
    ObjData out;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream ss(line);
        std::string tag;
        if (!(ss >> tag) || tag[0] == '#') continue;
        if (tag == "v") {
            Vec3 p;
            if (!(ss >> p.x() >> p.y() >> p.z())) {
                throw ParseError("line " + std::to_string(line_no) + ": malformed vertex");
            }
            verts.push_back(p);
        } else if (tag == "vt") {
            Vec2 uv;
            if (!(ss >> uv.x() >> uv.y())) {
                throw ParseError("line " + std::to_string(line_no) + ": malformed texture coordinate");
            }
            out.uvs.push_back(uv);
        } else if (tag == "f") {
            std::vector<std::string> tokens;
            std::string tok;
            while (ss >> tok) tokens.push_back(tok);
            if (tokens.size() != 3) {
                throw ParseError("line " + std::to_string(line_no) + ": non-triangle face with " +
                                 std::to_string(tokens.size()) + " vertices");
            }
            Face f{};
            Face fu{-1, -1, -1};
            for (int k = 0; k < 3; ++k) {
                f[k] = detail::parse_obj_index(tokens[k], static_cast<int>(verts.size()), line_no);
                if (!out.uvs.empty()) {
                    fu[k] = detail::parse_obj_uv_index(tokens[k], static_cast<int>(out.uvs.size()), line_no);
                }
            }
            out.faces.push_back(f);
            out.face_uvs.push_back(fu);
        }
    }
    out.vertices.resize(static_cast<Eigen::Index>(verts.size()), 3);
    for (std::size_t i = 0; i < verts.size(); ++i) out.vertices.row(static_cast<Eigen::Index>(i)) = verts[i];
    return out;
}

inline SimplicialSurface load_obj(const std::string& path) {
    ObjData data = read_obj(path);
    return SimplicialSurface(std::move(data.vertices), std::move(data.faces));
}

/// Writes positions and faces with 17 significant digits. When `uvs` is
/// non-empty, `face_uvs` gives the vt index of every face corner.
inline void write_obj(const std::string& path, const Points& vertices, std::span<const Face> faces,
                      std::span<const Vec2> uvs = {}, std::span<const Face> face_uvs = {}) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write '" + path + "'");
    char buf[128];
    for (Eigen::Index i = 0; i < vertices.rows(); ++i) {
        std::snprintf(buf, sizeof buf, "v %.17g %.17g %.17g\n", vertices(i, 0), vertices(i, 1), vertices(i, 2));
        out << buf;
    }
    for (const Vec2& uv : uvs) {
        std::snprintf(buf, sizeof buf, "vt %.17g %.17g\n", uv.x(), uv.y());
        out << buf;
    }
    const bool textured = !uvs.empty();
    for (std::size_t t = 0; t < faces.size(); ++t) {
        out << 'f';
        for (int k = 0; k < 3; ++k) {
            out << ' ' << faces[t][k] + 1;
            if (textured) out << '/' << face_uvs[t][k] + 1;
        }
        out << '\n';
    }
    if (!out) throw IoError("failed while writing '" + path + "'");
}

inline std::vector<Face> grid_faces(int nu, int nv) {
    std::vector<Face> faces;
    faces.reserve(static_cast<std::size_t>(2 * nu * nv));
    auto id = [nu, nv](int i, int j) { return ((j % nv) * nu) + (i % nu); };
    for (int j = 0; j < nv; ++j) {
        for (int i = 0; i < nu; ++i) {
            const int a = id(i, j), b = id(i + 1, j), c = id(i + 1, j + 1), d = id(i, j + 1);
            faces.push_back({a, b, c});
            faces.push_back({a, c, d});
        }
    }
    return faces;
}

/// Regular (theta, phi) grid on the ring torus T^2(R, r). Vertex (i, j) has
/// index j * n_theta + i and sits at theta = 2 pi i / n_theta,
/// phi = 2 pi j / n_phi. The returned map is the identity embedding.
inline std::pair<SimplicialSurface, Points> make_torus_grid(double R, double r, int n_theta, int n_phi) {
    if (n_theta < 3 || n_phi < 3) throw std::invalid_argument("torus grid needs at least 3 x 3 samples");
    if (!(R > r && r > 0.0)) throw InvalidShape("torus grid requires R > r > 0");
    Points v(static_cast<Eigen::Index>(n_theta) * n_phi, 3);
    for (int j = 0; j < n_phi; ++j) {
        const double phi = 2.0 * std::numbers::pi * j / n_phi;
        for (int i = 0; i < n_theta; ++i) {
            const double theta = 2.0 * std::numbers::pi * i / n_theta;
            const Eigen::Index row = static_cast<Eigen::Index>(j) * n_theta + i;
            v(row, 0) = (R + r * std::cos(phi)) * std::cos(theta);
            v(row, 1) = (R + r * std::cos(phi)) * std::sin(theta);
            v(row, 2) = r * std::sin(phi);
        }
    }
    Points identity = v;
    SimplicialSurface s(std::move(v), grid_faces(n_theta, n_phi));
    return {std::move(s), std::move(identity)};
}

/// Flat torus: the rectangle [0, width) x [0, height) in the z = 0 plane with
/// opposite sides identified. Wrap-around faces carry lattice shifts, so face
/// geometry is that of the uniform grid everywhere.
inline SimplicialSurface make_flat_torus_grid(int nx, int ny, double width = 1.0, double height = 1.0) {
    if (nx < 3 || ny < 3) throw std::invalid_argument("flat torus grid needs at least 3 x 3 samples");
    Points v(static_cast<Eigen::Index>(nx) * ny, 3);
    for (int j = 0; j < ny; ++j) {
        for (int i = 0; i < nx; ++i) {
            const Eigen::Index row = static_cast<Eigen::Index>(j) * nx + i;
            v(row, 0) = width * i / nx;
            v(row, 1) = height * j / ny;
            v(row, 2) = 0.0;
        }
    }
    PeriodicLattice lattice;
    lattice.t1 = Vec3(width, 0.0, 0.0);
    lattice.t2 = Vec3(0.0, height, 0.0);
    for (int j = 0; j < ny; ++j) {
        for (int i = 0; i < nx; ++i) {
            const std::array<int, 2> sa{0, 0};
            const std::array<int, 2> sb{i + 1 == nx ? 1 : 0, 0};
            const std::array<int, 2> sc{i + 1 == nx ? 1 : 0, j + 1 == ny ? 1 : 0};
            const std::array<int, 2> sd{0, j + 1 == ny ? 1 : 0};
            lattice.shifts.push_back({sa, sb, sc});
            lattice.shifts.push_back({sa, sc, sd});
        }
    }
    return SimplicialSurface(std::move(v), grid_faces(nx, ny), std::move(lattice));
}

}  // namespace torusmap
