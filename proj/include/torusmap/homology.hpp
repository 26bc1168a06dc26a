#pragma once

#include "torusmap/mesh.hpp"
#include "torusmap/types.hpp"

#include <Eigen/Dense>
#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <complex>
#include <deque>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

namespace torusmap {

/// Two simple closed vertex cycles generating the first homology. Each cycle
/// lists its vertices once; the closing edge back to the first is implicit.
struct LoopBasis {
    std::vector<int> gamma1;
    std::vector<int> gamma2;
    std::vector<std::string> warnings;
};

/// A discrete 1-form, one value per undirected edge in the lower-to-higher
/// index direction; reversing an edge flips the sign.
struct OneForm {
    std::vector<double> values;

    OneForm() = default;
    explicit OneForm(int edge_count) : values(static_cast<std::size_t>(edge_count), 0.0) {}

    /// Value on the directed edge i -> j.
    double along(const SimplicialSurface& s, int i, int j) const {
        const int e = s.edge_index(i, j);
        if (e < 0) throw LoopError("vertices " + std::to_string(i) + " and " + std::to_string(j) + " are not adjacent");
        const double v = values[static_cast<std::size_t>(e)];
        return i < j ? v : -v;
    }

    void add(const SimplicialSurface& s, int i, int j, double amount) {
        const int e = s.edge_index(i, j);
        values[static_cast<std::size_t>(e)] += i < j ? amount : -amount;
    }

    OneForm& operator+=(const OneForm& o) {
        for (std::size_t e = 0; e < values.size(); ++e) values[e] += o.values[e];
        return *this;
    }

    OneForm scaled(double s) const {
        OneForm out = *this;
        for (double& v : out.values) v *= s;
        return out;
    }
};

/// zeta = re + i im.
struct ComplexOneForm {
    OneForm re;
    OneForm im;

    /// c * zeta, expanded into real and imaginary parts.
    ComplexOneForm scaled(std::complex<double> c) const {
        ComplexOneForm out{OneForm(static_cast<int>(re.values.size())), OneForm(static_cast<int>(re.values.size()))};
        for (std::size_t e = 0; e < re.values.size(); ++e) {
            out.re.values[e] = c.real() * re.values[e] - c.imag() * im.values[e];
            out.im.values[e] = c.imag() * re.values[e] + c.real() * im.values[e];
        }
        return out;
    }

    ComplexOneForm& operator+=(const ComplexOneForm& o) {
        re += o.re;
        im += o.im;
        return *this;
    }
};

// ---------------------------------------------------------------------------
// loops

/// Checks that `cycle` is a simple closed edge path on the surface.
inline void validate_cycle(const SimplicialSurface& s, const std::vector<int>& cycle, const std::string& name) {
    if (cycle.size() < 3) throw LoopError(name + " needs at least 3 vertices");
    std::vector<char> seen(static_cast<std::size_t>(s.vertex_count()), 0);
    for (int v : cycle) {
        if (v < 0 || v >= s.vertex_count()) throw LoopError(name + ": vertex " + std::to_string(v) + " out of range");
        if (seen[static_cast<std::size_t>(v)]) {
            throw NotSimpleError(name + " visits vertex " + std::to_string(v) + " twice");
        }
        seen[static_cast<std::size_t>(v)] = 1;
    }
    for (std::size_t k = 0; k < cycle.size(); ++k) {
        const int a = cycle[k];
        const int b = cycle[(k + 1) % cycle.size()];
        if (s.edge_index(a, b) < 0) {
            throw LoopError(name + ": consecutive vertices " + std::to_string(a) + " and " + std::to_string(b) +
                            " are not joined by an edge");
        }
    }
}

/// Neighbours of `a` strictly between `next` and `prev` in counterclockwise
/// order: the left-hand side of a path passing prev -> a -> next.
inline std::vector<int> left_fan(const SimplicialSurface& s, int prev, int a, int next) {
    std::vector<int> out;
    const std::size_t degree = s.ring(a).size();
    int x = s.next_ccw(a, next);
    while (x != prev) {
        if (x < 0 || out.size() > degree) throw LoopError("cannot resolve the left side of a loop at vertex " + std::to_string(a));
        out.push_back(x);
        x = s.next_ccw(a, x);
    }
    return out;
}

/// Sum of a 1-form along a closed vertex cycle.
inline double period(const SimplicialSurface& s, const OneForm& form, const std::vector<int>& cycle) {
    double sum = 0.0;
    for (std::size_t k = 0; k < cycle.size(); ++k) sum += form.along(s, cycle[k], cycle[(k + 1) % cycle.size()]);
    return sum;
}

inline std::complex<double> period(const SimplicialSurface& s, const ComplexOneForm& form,
                                   const std::vector<int>& cycle) {
    return {period(s, form.re, cycle), period(s, form.im, cycle)};
}

/// Largest |circulation| of a 1-form around a face boundary.
inline double max_face_circulation(const SimplicialSurface& s, const OneForm& form) {
    double worst = 0.0;
    for (int t = 0; t < s.face_count(); ++t) {
        const Face& f = s.face(t);
        const double c = form.along(s, f[0], f[1]) + form.along(s, f[1], f[2]) + form.along(s, f[2], f[0]);
        worst = std::max(worst, std::abs(c));
    }
    return worst;
}

/// Integer closed 1-form dual to gamma: +1 on edges leaving a loop vertex
/// towards its left-hand side, -1 on their reverses, 0 elsewhere.
inline OneForm closed_one_form(const SimplicialSurface& s, const std::vector<int>& gamma) {
    validate_cycle(s, gamma, "loop");
    OneForm eta(s.edge_count());
    const std::size_t L = gamma.size();
    for (std::size_t k = 0; k < L; ++k) {
        const int a = gamma[k];
        const int prev = gamma[(k + L - 1) % L];
        const int next = gamma[(k + 1) % L];
        for (int x : left_fan(s, prev, a, next)) eta.add(s, a, x, 1.0);
    }
    if (max_face_circulation(s, eta) != 0.0) {
        throw LoopError("loop does not induce a closed 1-form; its left side is not well defined");
    }
    return eta;
}

/// Integer matrix P(k, l) = period of eta_l along gamma_k.
inline Eigen::Matrix2d eta_period_matrix(const SimplicialSurface& s, const LoopBasis& loops) {
    const OneForm e1 = closed_one_form(s, loops.gamma1);
    const OneForm e2 = closed_one_form(s, loops.gamma2);
    Eigen::Matrix2d P;
    P << period(s, e1, loops.gamma1), period(s, e2, loops.gamma1), period(s, e1, loops.gamma2),
        period(s, e2, loops.gamma2);
    return P;
}

namespace detail {

inline void require_basis(const Eigen::Matrix2d& P) {
    const double det = P.determinant();
    if (std::abs(det) < 0.5) {
        throw IndependenceError("loops are homologically dependent (degenerate period matrix)");
    }
    if (std::abs(std::abs(det) - 1.0) > 1e-9) {
        throw LoopError("loops are independent but do not form a homology basis (|det| = " + std::to_string(det) + ")");
    }
}

inline std::vector<int> rotate_to(const std::vector<int>& cycle, int v) {
    auto it = std::find(cycle.begin(), cycle.end(), v);
    std::vector<int> out(it, cycle.end());
    out.insert(out.end(), cycle.begin(), it);
    return out;
}

/// True when gamma2 meets gamma1 in exactly one vertex and crosses it there.
inline bool crosses_once(const SimplicialSurface& s, const std::vector<int>& g1, const std::vector<int>& g2, int& shared) {
    std::vector<char> on1(static_cast<std::size_t>(s.vertex_count()), 0);
    for (int v : g1) on1[static_cast<std::size_t>(v)] = 1;
    int count = 0;
    for (int v : g2) {
        if (on1[static_cast<std::size_t>(v)]) {
            ++count;
            shared = v;
        }
    }
    if (count != 1) return false;
    const auto i1 = static_cast<std::size_t>(std::find(g1.begin(), g1.end(), shared) - g1.begin());
    const auto i2 = static_cast<std::size_t>(std::find(g2.begin(), g2.end(), shared) - g2.begin());
    const auto left = left_fan(s, g1[(i1 + g1.size() - 1) % g1.size()], shared, g1[(i1 + 1) % g1.size()]);
    const int before = g2[(i2 + g2.size() - 1) % g2.size()];
    const int after = g2[(i2 + 1) % g2.size()];
    const bool bl = std::find(left.begin(), left.end(), before) != left.end();
    const bool al = std::find(left.begin(), left.end(), after) != left.end();
    return bl != al;
}

}  // namespace detail

/// A simple cycle through v0 (on gamma) that leaves gamma to its left, avoids
/// gamma elsewhere, and returns from the right: it crosses gamma exactly once.
/// Breadth-first, so the result is a shortest such cycle in edge count.
inline std::vector<int> crossing_loop(const SimplicialSurface& s, const std::vector<int>& gamma, int v0) {
    const std::size_t L = gamma.size();
    const auto pos = static_cast<std::size_t>(std::find(gamma.begin(), gamma.end(), v0) - gamma.begin());
    if (pos == L) throw LoopError("crossing vertex is not on the loop");
    const int prev = gamma[(pos + L - 1) % L];
    const int next = gamma[(pos + 1) % L];
    std::vector<char> blocked(static_cast<std::size_t>(s.vertex_count()), 0);
    for (int v : gamma) blocked[static_cast<std::size_t>(v)] = 1;

    const auto left = left_fan(s, prev, v0, next);
    const auto right = left_fan(s, next, v0, prev);
    std::vector<char> is_target(static_cast<std::size_t>(s.vertex_count()), 0);
    for (int v : right) {
        if (!blocked[static_cast<std::size_t>(v)]) is_target[static_cast<std::size_t>(v)] = 1;
    }
    std::vector<int> parent(static_cast<std::size_t>(s.vertex_count()), -2);
    std::deque<int> queue;
    for (int v : left) {
        if (blocked[static_cast<std::size_t>(v)] || parent[static_cast<std::size_t>(v)] != -2) continue;
        parent[static_cast<std::size_t>(v)] = -1;
        queue.push_back(v);
    }
    while (!queue.empty()) {
        const int v = queue.front();
        queue.pop_front();
        if (is_target[static_cast<std::size_t>(v)]) {
            std::vector<int> path;
            for (int u = v; u != -1; u = parent[static_cast<std::size_t>(u)]) path.push_back(u);
            std::reverse(path.begin(), path.end());
            path.insert(path.begin(), v0);
            return path;
        }
        for (int w : s.ring(v)) {
            if (blocked[static_cast<std::size_t>(w)] || parent[static_cast<std::size_t>(w)] != -2) continue;
            parent[static_cast<std::size_t>(w)] = v;
            queue.push_back(w);
        }
    }
    throw LoopError("no path joins the two sides of the loop at vertex " + std::to_string(v0));
}

/// Replaces gamma2 by a loop crossing gamma1 exactly once, preferring the
/// shared vertex (or the gamma1 vertex closest to gamma2).
inline std::vector<int> reroute_second_loop(const SimplicialSurface& s, const std::vector<int>& g1,
                                            const std::vector<int>& g2) {
    std::vector<int> dist(static_cast<std::size_t>(s.vertex_count()), -1);
    std::deque<int> queue;
    for (int v : g2) {
        dist[static_cast<std::size_t>(v)] = 0;
        queue.push_back(v);
    }
    while (!queue.empty()) {
        const int v = queue.front();
        queue.pop_front();
        for (int w : s.ring(v)) {
            if (dist[static_cast<std::size_t>(w)] < 0) {
                dist[static_cast<std::size_t>(w)] = dist[static_cast<std::size_t>(v)] + 1;
                queue.push_back(w);
            }
        }
    }
    std::vector<int> order = g1;
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return dist[static_cast<std::size_t>(a)] < dist[static_cast<std::size_t>(b)];
    });
    for (int v0 : order) {
        try {
            return crossing_loop(s, g1, v0);
        } catch (const LoopError&) {
        }
    }
    throw LoopError("could not find a loop crossing gamma1 exactly once");
}

/// Validates a pair of user loops and brings them to the form needed
/// downstream: independent, meeting at one vertex where they cross, both
/// starting at that vertex.
inline LoopBasis normalize_loops(const SimplicialSurface& s, LoopBasis loops) {
    validate_cycle(s, loops.gamma1, "gamma1");
    validate_cycle(s, loops.gamma2, "gamma2");
    detail::require_basis(eta_period_matrix(s, loops));
    int shared = -1;
    if (!detail::crosses_once(s, loops.gamma1, loops.gamma2, shared)) {
        loops.gamma2 = reroute_second_loop(s, loops.gamma1, loops.gamma2);
        shared = loops.gamma2.front();
        loops.warnings.emplace_back("loops do not cross at exactly one vertex; gamma2 rerouted through vertex " +
                                    std::to_string(shared));
        detail::require_basis(eta_period_matrix(s, loops));
    }
    loops.gamma1 = detail::rotate_to(loops.gamma1, shared);
    loops.gamma2 = detail::rotate_to(loops.gamma2, shared);
    return loops;
}

inline std::vector<int> parse_cycle(const nlohmann::json& j, const char* name) {
    if (!j.contains(name) || !j[name].is_array()) throw LoopError(std::string("missing integer array '") + name + "'");
    std::vector<int> c;
    for (const auto& v : j[name]) {
        if (!v.is_number_integer()) throw LoopError(std::string(name) + " must contain integers");
        c.push_back(v.get<int>());
    }
    if (c.size() > 1 && c.front() == c.back()) c.pop_back();
    return c;
}

/// Reads {"gamma1": [...], "gamma2": [...]} with 0-based vertex indices.
inline LoopBasis load_loops(const std::string& path, const SimplicialSurface& s) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("loops file '" + path + "': " + e.what());
    }
    LoopBasis loops{parse_cycle(j, "gamma1"), parse_cycle(j, "gamma2"), {}};
    return normalize_loops(s, std::move(loops));
}

inline void save_loops(const std::string& path, const LoopBasis& loops) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write '" + path + "'");
    out << nlohmann::json{{"gamma1", loops.gamma1}, {"gamma2", loops.gamma2}}.dump() << '\n';
}

/// Homology basis from a tree-cotree decomposition: one generator from a
/// leftover edge closes a simple cycle through the primal tree; the second
/// loop is the shortest cycle crossing it once.
inline LoopBasis fallback_loops(const SimplicialSurface& s) {
    if (s.euler_characteristic() != 0) throw GenusError("tree-cotree loops need a genus-one surface");
    const int n = s.vertex_count();
    std::vector<int> parent(static_cast<std::size_t>(n), -2);
    std::vector<int> depth(static_cast<std::size_t>(n), 0);
    std::vector<char> in_tree(static_cast<std::size_t>(s.edge_count()), 0);
    std::deque<int> queue{0};
    parent[0] = -1;
    while (!queue.empty()) {
        const int v = queue.front();
        queue.pop_front();
        for (int w : s.ring(v)) {
            if (parent[static_cast<std::size_t>(w)] != -2) continue;
            parent[static_cast<std::size_t>(w)] = v;
            depth[static_cast<std::size_t>(w)] = depth[static_cast<std::size_t>(v)] + 1;
            in_tree[static_cast<std::size_t>(s.edge_index(v, w))] = 1;
            queue.push_back(w);
        }
    }
    // dual tree over faces across non-tree edges
    std::vector<char> in_cotree(static_cast<std::size_t>(s.edge_count()), 0);
    std::vector<char> face_seen(static_cast<std::size_t>(s.face_count()), 0);
    std::deque<int> fq{0};
    face_seen[0] = 1;
    while (!fq.empty()) {
        const int t = fq.front();
        fq.pop_front();
        const Face& f = s.face(t);
        for (int k = 0; k < 3; ++k) {
            const int e = s.face_edge(t, k);
            if (in_tree[static_cast<std::size_t>(e)]) continue;
            const int u = s.face_of_halfedge(f[(k + 1) % 3], f[k]);
            if (face_seen[static_cast<std::size_t>(u)]) continue;
            face_seen[static_cast<std::size_t>(u)] = 1;
            in_cotree[static_cast<std::size_t>(e)] = 1;
            fq.push_back(u);
        }
    }
    std::vector<int> generators;
    for (int e = 0; e < s.edge_count(); ++e) {
        if (!in_tree[static_cast<std::size_t>(e)] && !in_cotree[static_cast<std::size_t>(e)]) generators.push_back(e);
    }
    if (generators.size() != 2) {
        throw LoopError("tree-cotree left " + std::to_string(generators.size()) + " generators (expected 2)");
    }
    auto tree_cycle = [&](int e) {
        int a = s.edges()[static_cast<std::size_t>(e)][0];
        int b = s.edges()[static_cast<std::size_t>(e)][1];
        std::vector<int> up_a, up_b;
        while (depth[static_cast<std::size_t>(a)] > depth[static_cast<std::size_t>(b)]) {
            up_a.push_back(a);
            a = parent[static_cast<std::size_t>(a)];
        }
        while (depth[static_cast<std::size_t>(b)] > depth[static_cast<std::size_t>(a)]) {
            up_b.push_back(b);
            b = parent[static_cast<std::size_t>(b)];
        }
        while (a != b) {
            up_a.push_back(a);
            up_b.push_back(b);
            a = parent[static_cast<std::size_t>(a)];
            b = parent[static_cast<std::size_t>(b)];
        }
        // a -> ... -> lca -> ... -> b, closed by the generator edge b -> a
        std::vector<int> cycle = up_a;
        cycle.push_back(a);
        cycle.insert(cycle.end(), up_b.rbegin(), up_b.rend());
        return cycle;
    };
    LoopBasis loops;
    loops.gamma1 = tree_cycle(generators[0]);
    // Shortest generator first keeps the cut short.
    const auto other = tree_cycle(generators[1]);
    if (other.size() < loops.gamma1.size()) loops.gamma1 = other;
    loops.gamma2 = reroute_second_loop(s, loops.gamma1, loops.gamma1);
    loops.warnings.emplace_back("no loops supplied: using a tree-cotree homology basis; the loop homotopy class "
                                "affects the fundamental domain");
    return normalize_loops(s, std::move(loops));
}

// ---------------------------------------------------------------------------
// harmonic and holomorphic forms

/// Cotangent edge weights (cot alpha + cot beta) / 2 on the source surface.
inline std::vector<double> cotan_weights(const SimplicialSurface& s) {
    std::vector<double> w(static_cast<std::size_t>(s.edge_count()), 0.0);
    for (int t = 0; t < s.face_count(); ++t) {
        const auto p = s.corners(t);
        for (int k = 0; k < 3; ++k) {
            const Vec3 a = p[static_cast<std::size_t>((k + 1) % 3)] - p[static_cast<std::size_t>(k)];
            const Vec3 b = p[static_cast<std::size_t>((k + 2) % 3)] - p[static_cast<std::size_t>(k)];
            // opposite edge runs from corner k+1 to k+2, which is face edge k+1
            w[static_cast<std::size_t>(s.face_edge(t, (k + 1) % 3))] += 0.5 * a.dot(b) / a.cross(b).norm();
        }
    }
    return w;
}

/// Solves L x = b for the positive semidefinite cotangent Laplacian with x(0)
/// held at zero. Direct factorization up to 2e5 unknowns, Jacobi-preconditioned
/// conjugate gradients above.
inline Eigen::VectorXd solve_grounded(const Eigen::SparseMatrix<double>& L, const Eigen::VectorXd& b) {
    const Eigen::Index n = L.rows();
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<std::size_t>(L.nonZeros()));
    for (int k = 0; k < L.outerSize(); ++k) {
        for (Eigen::SparseMatrix<double>::InnerIterator it(L, k); it; ++it) {
            if (it.row() > 0 && it.col() > 0) trip.emplace_back(it.row() - 1, it.col() - 1, it.value());
        }
    }
    Eigen::SparseMatrix<double> A(n - 1, n - 1);
    A.setFromTriplets(trip.begin(), trip.end());
    const Eigen::VectorXd rhs = b.tail(n - 1);
    Eigen::VectorXd x(n);
    x(0) = 0.0;
    if (n <= 200000) {
        Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(A);
        if (solver.info() != Eigen::Success) throw SolverError("factorization of the grounded Laplacian failed");
        x.tail(n - 1) = solver.solve(rhs);
        if (solver.info() != Eigen::Success) throw SolverError("grounded Laplacian solve failed");
    } else {
        Eigen::ConjugateGradient<Eigen::SparseMatrix<double>, Eigen::Lower | Eigen::Upper,
                                 Eigen::DiagonalPreconditioner<double>>
            cg(A);
        cg.setTolerance(1e-12);
        cg.setMaxIterations(static_cast<Eigen::Index>(10 * n));
        x.tail(n - 1) = cg.solve(rhs);
        if (cg.info() != Eigen::Success) throw SolverError("conjugate gradient did not converge");
    }
    if (!x.allFinite()) throw SolverError("non-finite solution of the grounded Laplacian");
    return x;
}

struct HarmonicForm {
    OneForm omega;
    Eigen::VectorXd h;      ///< potential with h(v_0) = 0
    double residual = 0.0;  ///< max |sum_j w_ij omega(i->j)| / max |w|
};

/// omega = eta + dh where h solves the cotangent-weighted Poisson equation
/// sum_j w_ij (eta(i->j) + h_j - h_i) = 0 at every vertex.
inline HarmonicForm harmonize(const SimplicialSurface& s, const OneForm& eta) {
    const auto w = cotan_weights(s);
    const int n = s.vertex_count();
    std::vector<Eigen::Triplet<double>> trip;
    Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
    for (int e = 0; e < s.edge_count(); ++e) {
        const auto [i, j] = s.edges()[static_cast<std::size_t>(e)];
        const double we = w[static_cast<std::size_t>(e)];
        trip.emplace_back(i, i, we);
        trip.emplace_back(j, j, we);
        trip.emplace_back(i, j, -we);
        trip.emplace_back(j, i, -we);
        // value stored for i -> j (i < j)
        b(i) += we * eta.values[static_cast<std::size_t>(e)];
        b(j) -= we * eta.values[static_cast<std::size_t>(e)];
    }
    Eigen::SparseMatrix<double> L(n, n);
    L.setFromTriplets(trip.begin(), trip.end());

    HarmonicForm out;
    out.h = solve_grounded(L, b);
    out.omega = OneForm(s.edge_count());
    for (int e = 0; e < s.edge_count(); ++e) {
        const auto [i, j] = s.edges()[static_cast<std::size_t>(e)];
        out.omega.values[static_cast<std::size_t>(e)] = eta.values[static_cast<std::size_t>(e)] + out.h(j) - out.h(i);
    }
    Eigen::VectorXd div = Eigen::VectorXd::Zero(n);
    double wmax = 0.0;
    for (int e = 0; e < s.edge_count(); ++e) {
        const auto [i, j] = s.edges()[static_cast<std::size_t>(e)];
        const double flux = w[static_cast<std::size_t>(e)] * out.omega.values[static_cast<std::size_t>(e)];
        div(i) += flux;
        div(j) -= flux;
        wmax = std::max(wmax, std::abs(w[static_cast<std::size_t>(e)]));
    }
    out.residual = div.cwiseAbs().maxCoeff() / wmax;
    return out;
}

/// The constant vector field in the plane of face t whose dot products with
/// the face edges reproduce the (closed) 1-form.
inline Vec3 face_field(const SimplicialSurface& s, const OneForm& form, int t) {
    const auto p = s.corners(t);
    const Face& f = s.face(t);
    const Vec3 e1 = p[1] - p[0];
    const Vec3 e2 = p[2] - p[0];
    Eigen::Matrix2d G;
    G << e1.dot(e1), e1.dot(e2), e1.dot(e2), e2.dot(e2);
    const Eigen::Vector2d rhs(form.along(s, f[0], f[1]), form.along(s, f[0], f[2]));
    const Eigen::Vector2d ab = G.inverse() * rhs;
    return ab(0) * e1 + ab(1) * e2;
}

inline Vec3 face_unit_normal(const SimplicialSurface& s, int t) {
    const auto p = s.corners(t);
    return (p[1] - p[0]).cross(p[2] - p[0]).normalized();
}

/// Discrete Hodge star: rotate the face field of omega by +90 degrees about
/// each face normal, read it back on the edges, and average the two incident
/// faces weighted by area.
inline OneForm hodge_star(const SimplicialSurface& s, const OneForm& omega) {
    OneForm star(s.edge_count());
    std::vector<double> weight(static_cast<std::size_t>(s.edge_count()), 0.0);
    for (int t = 0; t < s.face_count(); ++t) {
        const auto p = s.corners(t);
        const Face& f = s.face(t);
        const Vec3 rotated = face_unit_normal(s, t).cross(face_field(s, omega, t));
        const double a = s.face_area(t);
        for (int k = 0; k < 3; ++k) {
            const int i = f[k];
            const int j = f[(k + 1) % 3];
            const double val = rotated.dot(p[static_cast<std::size_t>((k + 1) % 3)] - p[static_cast<std::size_t>(k)]);
            star.add(s, i, j, a * val);
            weight[static_cast<std::size_t>(s.face_edge(t, k))] += a;
        }
    }
    for (int e = 0; e < s.edge_count(); ++e) star.values[static_cast<std::size_t>(e)] /= weight[static_cast<std::size_t>(e)];
    return star;
}

/// zeta = omega + i (star omega) with the edge-averaged Hodge star.
inline ComplexOneForm holomorphic_form(const SimplicialSurface& s, const OneForm& omega) {
    return {omega, hodge_star(s, omega)};
}

/// zeta = omega + i (star omega), where star omega is taken as the
/// area-weighted least-squares fit of the rotated face field by the harmonic
/// basis. The imaginary part is then exactly closed and integrable.
inline ComplexOneForm holomorphic_form(const SimplicialSurface& s, const OneForm& omega,
                                       const std::array<const OneForm*, 2>& basis) {
    Eigen::Matrix2d G = Eigen::Matrix2d::Zero();
    Eigen::Vector2d rhs = Eigen::Vector2d::Zero();
    for (int t = 0; t < s.face_count(); ++t) {
        const double a = s.face_area(t);
        const Vec3 rotated = face_unit_normal(s, t).cross(face_field(s, omega, t));
        const Vec3 b0 = face_field(s, *basis[0], t);
        const Vec3 b1 = face_field(s, *basis[1], t);
        G(0, 0) += a * b0.dot(b0);
        G(0, 1) += a * b0.dot(b1);
        G(1, 1) += a * b1.dot(b1);
        rhs(0) += a * rotated.dot(b0);
        rhs(1) += a * rotated.dot(b1);
    }
    G(1, 0) = G(0, 1);
    const Eigen::Vector2d lambda = G.ldlt().solve(rhs);
    ComplexOneForm out{omega, OneForm(s.edge_count())};
    for (std::size_t e = 0; e < out.im.values.size(); ++e) {
        out.im.values[e] = lambda(0) * basis[0]->values[e] + lambda(1) * basis[1]->values[e];
    }
    return out;
}

/// Rows: (Re, Im) of the periods of zeta along gamma1 and gamma2.
inline Eigen::Matrix2d period_matrix(const SimplicialSurface& s, const ComplexOneForm& zeta, const LoopBasis& loops) {
    const auto p1 = period(s, zeta, loops.gamma1);
    const auto p2 = period(s, zeta, loops.gamma2);
    Eigen::Matrix2d P;
    P << p1.real(), p1.imag(), p2.real(), p2.imag();
    return P;
}

// ---------------------------------------------------------------------------
// fundamental domain

/// The surface cut open along both loops and laid out in the plane.
struct FundamentalDomain {
    Eigen::MatrixX2d coords;          ///< g(v) per cut vertex
    std::vector<int> correspondence;  ///< cut vertex -> original vertex
    std::vector<Face> faces;          ///< original faces in cut-vertex indices
    Vec2 w1 = Vec2(1.0, 0.0);
    Vec2 w2 = Vec2(0.0, 1.0);
    std::complex<double> c1{1.0, 0.0};
    std::complex<double> c2{0.0, 0.0};
    int cut_euler = 0;
    int flipped_faces = 0;
    double identification_error = 0.0;  ///< worst mismatch of paired seam copies
    double integration_error = 0.0;     ///< worst face-loop mismatch of g
};

namespace detail {

struct UnionFind {
    std::vector<int> parent;
    explicit UnionFind(int n) : parent(static_cast<std::size_t>(n)) { std::iota(parent.begin(), parent.end(), 0); }
    int find(int x) {
        while (parent[static_cast<std::size_t>(x)] != x) {
            parent[static_cast<std::size_t>(x)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
            x = parent[static_cast<std::size_t>(x)];
        }
        return x;
    }
    void unite(int a, int b) {
        a = find(a);
        b = find(b);
        if (a != b) parent[static_cast<std::size_t>(std::max(a, b))] = std::min(a, b);
    }
};

inline double cross2(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

}  // namespace detail

/// Slices the surface along gamma1 and gamma2 and integrates
/// zeta = c1 zeta1 + c2 zeta2 over the resulting disk from the root vertex.
/// The coefficients make the gamma1 period equal to 1, so w1 = (1, 0); w2 is
/// taken with positive second component.
inline FundamentalDomain cut_and_integrate(const SimplicialSurface& s, const LoopBasis& loops,
                                           const ComplexOneForm& zeta1, const ComplexOneForm& zeta2) {
    const double scale = std::max(max_face_circulation(s, zeta1.re), 1.0);
    for (const ComplexOneForm* z : {&zeta1, &zeta2}) {
        if (max_face_circulation(s, z->re) > 1e-8 * scale || max_face_circulation(s, z->im) > 1e-8 * scale) {
            throw SolverError("holomorphic form is not closed; it cannot be integrated");
        }
    }

    FundamentalDomain dom;
    const auto p1 = period(s, zeta1, loops.gamma1);
    const auto p2 = period(s, zeta2, loops.gamma1);
    if (std::abs(p1) >= std::abs(p2)) {
        dom.c1 = 1.0 / p1;
        dom.c2 = 0.0;
    } else {
        dom.c1 = 0.0;
        dom.c2 = 1.0 / p2;
    }
    if (!std::isfinite(std::abs(dom.c1)) || !std::isfinite(std::abs(dom.c2))) {
        throw SingularPeriods("both holomorphic forms have zero period along gamma1");
    }
    ComplexOneForm zeta = zeta1.scaled(dom.c1);
    zeta += zeta2.scaled(dom.c2);

    const auto w1c = period(s, zeta, loops.gamma1);
    const auto w2c = period(s, zeta, loops.gamma2);
    dom.w1 = Vec2(w1c.real(), w1c.imag());
    dom.w2 = Vec2(w2c.real(), w2c.imag());
    if (std::abs(detail::cross2(dom.w1, dom.w2)) < 1e-10) {
        throw SingularPeriods("period lattice is degenerate");
    }
    if (dom.w2.y() < 0.0) dom.w2 = -dom.w2;

    // cut edges
    std::vector<char> is_cut(static_cast<std::size_t>(s.edge_count()), 0);
    int cut_edges = 0;
    for (const auto* g : {&loops.gamma1, &loops.gamma2}) {
        for (std::size_t k = 0; k < g->size(); ++k) {
            const int e = s.edge_index((*g)[k], (*g)[(k + 1) % g->size()]);
            if (!is_cut[static_cast<std::size_t>(e)]) ++cut_edges;
            is_cut[static_cast<std::size_t>(e)] = 1;
        }
    }

    // corners glued across uncut edges form the cut vertices
    const int m = s.face_count();
    detail::UnionFind uf(3 * m);
    auto corner_of = [&](int t, int v) {
        const Face& f = s.face(t);
        for (int k = 0; k < 3; ++k) {
            if (f[k] == v) return 3 * t + k;
        }
        return -1;
    };
    for (int t = 0; t < m; ++t) {
        const Face& f = s.face(t);
        for (int k = 0; k < 3; ++k) {
            if (is_cut[static_cast<std::size_t>(s.face_edge(t, k))]) continue;
            const int i = f[k];
            const int j = f[(k + 1) % 3];
            const int u = s.face_of_halfedge(j, i);
            uf.unite(corner_of(t, i), corner_of(u, i));
            uf.unite(corner_of(t, j), corner_of(u, j));
        }
    }
    std::vector<int> id(static_cast<std::size_t>(3 * m), -1);
    dom.faces.resize(static_cast<std::size_t>(m));
    for (int t = 0; t < m; ++t) {
        for (int k = 0; k < 3; ++k) {
            const int root = uf.find(3 * t + k);
            if (id[static_cast<std::size_t>(root)] < 0) {
                id[static_cast<std::size_t>(root)] = static_cast<int>(dom.correspondence.size());
                dom.correspondence.push_back(s.face(t)[k]);
            }
            dom.faces[static_cast<std::size_t>(t)][static_cast<std::size_t>(k)] = id[static_cast<std::size_t>(root)];
        }
    }
    const int nv = static_cast<int>(dom.correspondence.size());
    dom.cut_euler = nv - (s.edge_count() + cut_edges) + m;
    if (dom.cut_euler != 1) {
        throw CutNotDisk("cutting along the loops gives Euler characteristic " + std::to_string(dom.cut_euler) +
                         " (a disk has 1)");
    }

    // integrate over the disk, breadth-first across uncut edges
    dom.coords = Eigen::MatrixX2d::Zero(nv, 2);
    std::vector<char> known(static_cast<std::size_t>(nv), 0);
    std::vector<char> face_done(static_cast<std::size_t>(m), 0);
    auto zeta_along = [&](int i, int j) { return Vec2(zeta.re.along(s, i, j), zeta.im.along(s, i, j)); };
    // root: the cut vertex of original vertex gamma1[0] in the first face that contains it
    int root_face = s.vertex_faces(loops.gamma1.front()).front();
    known[static_cast<std::size_t>(dom.faces[static_cast<std::size_t>(root_face)][static_cast<std::size_t>(
        corner_of(root_face, loops.gamma1.front()) % 3)])] = 1;
    std::deque<int> fq{root_face};
    face_done[static_cast<std::size_t>(root_face)] = 1;
    int visited = 0;
    while (!fq.empty()) {
        const int t = fq.front();
        fq.pop_front();
        ++visited;
        const Face& f = s.face(t);
        const Face& cf = dom.faces[static_cast<std::size_t>(t)];
        int anchor = -1;
        for (int k = 0; k < 3; ++k) {
            if (known[static_cast<std::size_t>(cf[k])]) anchor = k;
        }
        for (int d = 1; d <= 2; ++d) {
            const int k = (anchor + d) % 3;
            if (known[static_cast<std::size_t>(cf[k])]) continue;
            dom.coords.row(cf[k]) = dom.coords.row(cf[anchor]) + zeta_along(f[anchor], f[k]).transpose();
            known[static_cast<std::size_t>(cf[k])] = 1;
        }
        for (int k = 0; k < 3; ++k) {
            if (is_cut[static_cast<std::size_t>(s.face_edge(t, k))]) continue;
            const int u = s.face_of_halfedge(f[(k + 1) % 3], f[k]);
            if (face_done[static_cast<std::size_t>(u)]) continue;
            face_done[static_cast<std::size_t>(u)] = 1;
            fq.push_back(u);
        }
    }
    if (visited != m) throw CutNotDisk("cut surface is disconnected");

    // diagnostics
    Eigen::Matrix2d B;
    B.col(0) = dom.w1;
    B.col(1) = dom.w2;
    const Eigen::Matrix2d Binv = B.inverse();
    for (int t = 0; t < m; ++t) {
        const Face& f = s.face(t);
        const Face& cf = dom.faces[static_cast<std::size_t>(t)];
        const Vec2 g0 = dom.coords.row(cf[0]);
        const Vec2 g1 = dom.coords.row(cf[1]);
        const Vec2 g2 = dom.coords.row(cf[2]);
        if (detail::cross2(g1 - g0, g2 - g0) <= 0.0) ++dom.flipped_faces;
        for (int k = 0; k < 3; ++k) {
            const Vec2 a = dom.coords.row(cf[k]);
            const Vec2 b = dom.coords.row(cf[(k + 1) % 3]);
            dom.integration_error =
                std::max(dom.integration_error, (b - a - zeta_along(f[k], f[(k + 1) % 3])).norm());
        }
    }
    std::vector<int> first_copy(static_cast<std::size_t>(s.vertex_count()), -1);
    for (int c = 0; c < nv; ++c) {
        const int v = dom.correspondence[static_cast<std::size_t>(c)];
        if (first_copy[static_cast<std::size_t>(v)] < 0) {
            first_copy[static_cast<std::size_t>(v)] = c;
            continue;
        }
        const Vec2 d = dom.coords.row(c) - dom.coords.row(first_copy[static_cast<std::size_t>(v)]);
        const Vec2 k = (Binv * d).array().round().matrix();
        double err = (d - B * k).norm();
        if (k.cwiseAbs().maxCoeff() > 1.0) err = std::max(err, d.norm());
        dom.identification_error = std::max(dom.identification_error, err);
    }
    return dom;
}

/// Everything Algorithm-1 style computation produces, with its diagnostics.
struct DomainComputation {
    LoopBasis loops;
    HarmonicForm harmonic1;
    HarmonicForm harmonic2;
    ComplexOneForm zeta1;
    ComplexOneForm zeta2;
    FundamentalDomain domain;
};

/// Loops -> closed forms -> harmonic forms -> holomorphic forms -> domain.
inline DomainComputation compute_fundamental_domain(const SimplicialSurface& s, const LoopBasis& loops) {
    DomainComputation out;
    out.loops = loops;
    out.harmonic1 = harmonize(s, closed_one_form(s, loops.gamma1));
    out.harmonic2 = harmonize(s, closed_one_form(s, loops.gamma2));
    const std::array<const OneForm*, 2> basis{&out.harmonic1.omega, &out.harmonic2.omega};
    out.zeta1 = holomorphic_form(s, out.harmonic1.omega, basis);
    out.zeta2 = holomorphic_form(s, out.harmonic2.omega, basis);
    out.domain = cut_and_integrate(s, loops, out.zeta1, out.zeta2);
    return out;
}

/// Writes the domain as an OBJ (z = 0) plus a JSON sidecar with the lattice
/// and the cut-vertex correspondence.
inline void write_domain(const std::string& obj_path, const std::string& json_path, const FundamentalDomain& dom) {
    Points v = Points::Zero(dom.coords.rows(), 3);
    v.leftCols(2) = dom.coords;
    write_obj(obj_path, v, dom.faces);
    std::ofstream out(json_path);
    if (!out) throw IoError("cannot write '" + json_path + "'");
    nlohmann::json j;
    j["w1"] = {dom.w1.x(), dom.w1.y()};
    j["w2"] = {dom.w2.x(), dom.w2.y()};
    j["correspondence"] = dom.correspondence;
    out << j.dump() << '\n';
}

}  // namespace torusmap
