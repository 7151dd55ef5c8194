#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <numeric>
#include <queue>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mfgraph/error.hpp"

namespace mfgraph {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// A function on the vertex set, one value per state.
using NodeFunction = Vector;

/// Undirected edge stored once with i < j.
struct Edge {
    int i = 0;
    int j = 0;
    double weight = 0.0;       // omega_ij
    double sqrt_weight = 0.0;  // sqrt(omega_ij)
};

/// Adjacency entry: neighbour j of a node, the stored edge, and the sign that
/// turns the stored (i<j) orientation into the (node, j) orientation.
struct Neighbor {
    int j = 0;
    int edge = 0;
    double sign = 1.0;
};

namespace tol {
inline constexpr double row_sum = 1e-12;
inline constexpr double measure_sum = 1e-12;
inline constexpr double detailed_balance = 1e-10;
inline constexpr double density_sum = 1e-10;
}  // namespace tol

/// Reversible chain (Q, pi) together with its symmetric edge weights
/// omega_ij = Q_ij pi_i. Immutable after construction.
class MarkovGraph {
public:
    int size() const { return static_cast<int>(pi_.size()); }
    const Matrix& rates() const { return q_; }
    const Vector& invariant() const { return pi_; }
    const Matrix& weights() const { return omega_; }
    double weight(int i, int j) const { return omega_(i, j); }

    std::span<const Edge> edges() const { return edges_; }
    std::span<const Neighbor> neighbors(int i) const { return adjacency_[static_cast<std::size_t>(i)]; }
    int edge_count() const { return static_cast<int>(edges_.size()); }

    /// Index of the stored edge joining i and j, or -1.
    int edge_index(int i, int j) const {
        if (i < 0 || j < 0 || i >= size() || j >= size() || i == j) return -1;
        return edge_lookup_[static_cast<std::size_t>(i * size() + j)];
    }

    /// Largest |Q_ij pi_i - Q_ji pi_j| over i != j.
    double detailed_balance_residual() const {
        double worst = 0.0;
        for (int i = 0; i < size(); ++i)
            for (int j = i + 1; j < size(); ++j)
                worst = std::max(worst, std::abs(q_(i, j) * pi_(i) - q_(j, i) * pi_(j)));
        return worst;
    }

    friend MarkovGraph build_from_q(const Matrix& q);
    friend MarkovGraph build_from_weights(const Matrix& omega, const Vector& pi);

private:
    MarkovGraph(Matrix q, Vector pi, Matrix omega) : q_(std::move(q)), pi_(std::move(pi)), omega_(std::move(omega)) {
        const int n = size();
        adjacency_.assign(static_cast<std::size_t>(n), {});
        edge_lookup_.assign(static_cast<std::size_t>(n * n), -1);
        for (int i = 0; i < n; ++i) {
            for (int j = i + 1; j < n; ++j) {
                const double w = omega_(i, j);
                if (w <= 0.0) continue;
                const int e = static_cast<int>(edges_.size());
                edges_.push_back({i, j, w, std::sqrt(w)});
                adjacency_[static_cast<std::size_t>(i)].push_back({j, e, 1.0});
                adjacency_[static_cast<std::size_t>(j)].push_back({i, e, -1.0});
                edge_lookup_[static_cast<std::size_t>(i * n + j)] = e;
                edge_lookup_[static_cast<std::size_t>(j * n + i)] = e;
            }
        }
    }

    Matrix q_;
    Vector pi_;
    Matrix omega_;
    std::vector<Edge> edges_;
    std::vector<std::vector<Neighbor>> adjacency_;
    std::vector<int> edge_lookup_;
};

/// Antisymmetric field on edges: one slot per stored edge holds v_ij for i<j,
/// and v_ji = -v_ij is a sign-adjusted read.
class EdgeField {
public:
    EdgeField() = default;
    explicit EdgeField(int edge_count) : values_(Vector::Zero(edge_count)) {}
    explicit EdgeField(Vector values) : values_(std::move(values)) {}

    int size() const { return static_cast<int>(values_.size()); }
    const Vector& values() const { return values_; }
    Vector& values() { return values_; }
    double operator[](int e) const { return values_(e); }
    double& operator[](int e) { return values_(e); }

    /// v_ij with orientation (i, j), either order.
    double at(const MarkovGraph& g, int i, int j) const {
        const int e = g.edge_index(i, j);
        detail::require(e >= 0, Errc::NotAnEdge, "no edge between " + std::to_string(i) + " and " + std::to_string(j));
        return i < j ? values_(e) : -values_(e);
    }

private:
    Vector values_;
};

/// Probability vector on the states: nonnegative, unit mass.
class Density {
public:
    explicit Density(Vector p) : p_(std::move(p)) {
        for (Eigen::Index i = 0; i < p_.size(); ++i)
            detail::require(std::isfinite(p_(i)) && p_(i) >= 0.0, Errc::OutOfDomain, "density entries must be nonnegative");
        detail::require(std::abs(p_.sum() - 1.0) <= tol::density_sum, Errc::OutOfDomain, "density must sum to 1");
    }

    int size() const { return static_cast<int>(p_.size()); }
    const Vector& values() const { return p_; }
    double operator[](int i) const { return p_(i); }
    bool interior() const { return p_.minCoeff() > 0.0; }

private:
    Vector p_;
};

namespace detail {

inline bool connected(const Matrix& omega) {
    const int n = static_cast<int>(omega.rows());
    if (n == 0) return false;
    std::vector<char> seen(static_cast<std::size_t>(n), 0);
    std::queue<int> frontier;
    frontier.push(0);
    seen[0] = 1;
    int count = 1;
    while (!frontier.empty()) {
        const int i = frontier.front();
        frontier.pop();
        for (int j = 0; j < n; ++j) {
            if (j == i || seen[static_cast<std::size_t>(j)] || omega(i, j) <= 0.0) continue;
            seen[static_cast<std::size_t>(j)] = 1;
            ++count;
            frontier.push(j);
        }
    }
    return count == n;
}

inline void check_dim(int expected, Eigen::Index got, const char* what) {
    require(got == expected, Errc::DimensionMismatch,
            std::string(what) + ": expected length " + std::to_string(expected) + ", got " + std::to_string(got));
}

}  // namespace detail

/// Graph from a rate matrix: solves pi Q = 0 (normalized) by dense LU and
/// checks reversibility before forming omega_ij = Q_ij pi_i.
inline MarkovGraph build_from_q(const Matrix& q) {
    const int n = static_cast<int>(q.rows());
    detail::require(n >= 1 && q.cols() == n, Errc::DimensionMismatch, "rate matrix must be square");
    for (int i = 0; i < n; ++i) {
        detail::require(std::abs(q.row(i).sum()) <= tol::row_sum, Errc::NonConservativeRates,
                        "row " + std::to_string(i) + " does not sum to zero");
        for (int j = 0; j < n; ++j)
            if (i != j) detail::require(q(i, j) >= 0.0, Errc::NegativeRate, "negative off-diagonal rate");
    }

    // The support graph of Q must be strongly connected; for a reversible
    // chain the symmetrized support suffices, the stationary solve catches the rest.
    Matrix support = (q.array().abs() + q.transpose().array().abs()).matrix();
    support.diagonal().setZero();
    detail::require(detail::connected(support), Errc::Irreducibility, "rate matrix support is disconnected");

    Matrix a = q.transpose();
    a.row(n - 1).setOnes();
    Vector rhs = Vector::Zero(n);
    rhs(n - 1) = 1.0;
    Eigen::PartialPivLU<Matrix> lu(a);
    Vector pi = lu.solve(rhs);
    const double residual = (q.transpose() * pi).cwiseAbs().maxCoeff();
    detail::require(pi.allFinite() && pi.minCoeff() > 0.0 && residual <= 1e-9, Errc::Irreducibility,
                    "stationary measure is not unique and positive");
    pi /= pi.sum();

    Matrix omega = Matrix::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            const double fwd = q(i, j) * pi(i);
            const double bwd = q(j, i) * pi(j);
            detail::require(std::abs(fwd - bwd) <= tol::detailed_balance, Errc::DetailedBalanceViolation,
                            "detailed balance fails on pair (" + std::to_string(i) + ", " + std::to_string(j) + ")");
            omega(i, j) = omega(j, i) = 0.5 * (fwd + bwd);
        }
    }
    return MarkovGraph(q, std::move(pi), std::move(omega));
}

/// Inverse construction: Q_ij = omega_ij / pi_i with zero row sums.
inline MarkovGraph build_from_weights(const Matrix& omega, const Vector& pi) {
    const int n = static_cast<int>(pi.size());
    detail::require(n >= 1 && omega.rows() == n && omega.cols() == n, Errc::DimensionMismatch,
                    "weight matrix must be n x n");
    for (int i = 0; i < n; ++i)
        detail::require(std::isfinite(pi(i)) && pi(i) > 0.0, Errc::NonPositiveMeasure, "invariant measure must be positive");
    detail::require(std::abs(pi.sum() - 1.0) <= tol::measure_sum, Errc::NonPositiveMeasure,
                    "invariant measure must sum to 1");
    Matrix w = Matrix::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            detail::require(omega(i, j) == omega(j, i), Errc::AsymmetricWeights,
                            "omega(" + std::to_string(i) + "," + std::to_string(j) + ") != omega(" + std::to_string(j) +
                                "," + std::to_string(i) + ")");
            detail::require(omega(i, j) >= 0.0, Errc::NegativeRate, "negative edge weight");
            w(i, j) = w(j, i) = omega(i, j);
        }
    }
    detail::require(detail::connected(w), Errc::Irreducibility, "weighted graph is disconnected");

    Matrix q = Matrix::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        double row = 0.0;
        for (int j = 0; j < n; ++j) {
            if (j == i) continue;
            q(i, j) = w(i, j) / pi(i);
            row += q(i, j);
        }
        q(i, i) = -row;
    }
    return MarkovGraph(std::move(q), pi, std::move(w));
}

/// (grad Phi)_ij = sqrt(omega_ij) (Phi_j - Phi_i) on each stored edge.
inline EdgeField weighted_gradient(const MarkovGraph& g, const NodeFunction& phi) {
    detail::check_dim(g.size(), phi.size(), "weighted_gradient");
    EdgeField out(g.edge_count());
    for (int e = 0; const Edge& edge : g.edges()) out[e++] = edge.sqrt_weight * (phi(edge.j) - phi(edge.i));
    return out;
}

/// div(v)_i = sum_{j in N_i} sqrt(omega_ij) v_ij.
inline NodeFunction divergence(const MarkovGraph& g, const EdgeField& v) {
    detail::check_dim(g.edge_count(), v.size(), "divergence");
    NodeFunction out = NodeFunction::Zero(g.size());
    for (int e = 0; const Edge& edge : g.edges()) {
        const double flux = edge.sqrt_weight * v[e++];
        out(edge.i) += flux;
        out(edge.j) -= flux;
    }
    return out;
}

/// Combinatorial Laplacian (L Phi)_i = sum_j omega_ij (Phi_j - Phi_i); nonpositive.
inline NodeFunction laplacian_apply(const MarkovGraph& g, const NodeFunction& phi) {
    detail::check_dim(g.size(), phi.size(), "laplacian_apply");
    NodeFunction out = NodeFunction::Zero(g.size());
    for (const Edge& edge : g.edges()) {
        const double d = edge.weight * (phi(edge.j) - phi(edge.i));
        out(edge.i) += d;
        out(edge.j) -= d;
    }
    return out;
}

/// Dense matrix of the Laplacian (omega with diagonal -sum of the row).
inline Matrix laplacian_matrix(const MarkovGraph& g) {
    Matrix l = g.weights();
    for (int i = 0; i < g.size(); ++i) l(i, i) = -g.weights().row(i).sum() + g.weights()(i, i);
    return l;
}

}  // namespace mfgraph
