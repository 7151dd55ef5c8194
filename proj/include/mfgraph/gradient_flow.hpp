#pragma once

#include <Eigen/Eigenvalues>

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "mfgraph/activation.hpp"
#include "mfgraph/error.hpp"
#include "mfgraph/markov_graph.hpp"

namespace mfgraph {

struct FlowTrajectory {
    std::vector<double> times;
    std::vector<Vector> densities;
    std::vector<double> dissipation;  // D_phi(p_t || pi)
    int halvings = 0;                 // rejected RK4 steps
};

/// D_phi(p || pi) = sum_i phi(p_i / pi_i) pi_i.
inline double phi_divergence(const MarkovGraph& g, const GeneratorPhi& phi, const Vector& p) {
    detail::check_dim(g.size(), p.size(), "phi_divergence");
    double s = 0.0;
    for (int i = 0; i < g.size(); ++i) s += phi.phi(p(i) / g.invariant()(i)) * g.invariant()(i);
    return s;
}

inline double phi_divergence(const MarkovGraph& g, const GeneratorPhi& phi, const Density& p) {
    return phi_divergence(g, phi, p.values());
}

/// K_ij(p) = -omega_ij theta_ij(p) off the diagonal, zero row sums.
inline Matrix onsager_matrix(const MarkovGraph& g, const Activation& a, const Vector& p) {
    detail::check_dim(g.size(), p.size(), "onsager_matrix");
    Matrix k = Matrix::Zero(g.size(), g.size());
    for (int e = 0; const Edge& ed : g.edges()) {
        const double v = -ed.weight * theta_on_edge(a, g, p, e++);
        k(ed.i, ed.j) = k(ed.j, ed.i) = v;
        k(ed.i, ed.i) -= v;
        k(ed.j, ed.j) -= v;
    }
    return k;
}

/// Spectral gap of the generator, from the symmetric matrix
/// S_ij = omega_ij / sqrt(pi_i pi_j), S_ii = Q_ii.
inline double spectral_gap(const MarkovGraph& g) {
    const int n = g.size();
    if (n < 2) return 0.0;
    Matrix s(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            s(i, j) = i == j ? g.rates()(i, i) : g.weights()(i, j) / std::sqrt(g.invariant()(i) * g.invariant()(j));
    Eigen::SelfAdjointEigenSolver<Matrix> es(s, Eigen::EigenvaluesOnly);
    return -es.eigenvalues()(n - 2);
}

using FlowRhs = std::function<Vector(const Vector&)>;

namespace detail {

inline constexpr double positivity_slack = 1e-12;
inline constexpr int max_halvings = 20;

inline Vector rk4_step(const FlowRhs& f, const Vector& p, double h) {
    const Vector k1 = f(p);
    const Vector k2 = f(p + 0.5 * h * k1);
    const Vector k3 = f(p + 0.5 * h * k2);
    const Vector k4 = f(p + h * k3);
    return p + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

inline bool admissible(const Vector& p) { return p.allFinite() && p.minCoeff() >= -positivity_slack; }

/// Advances by h, splitting the step in halves while it leaves the simplex.
inline Vector advance(const FlowRhs& f, const Vector& p, double h, int depth, int& halvings) {
    Vector q = rk4_step(f, p, h);
    if (admissible(q)) return q;
    if (depth >= max_halvings)
        fail(Errc::PositivityLoss, "density left the simplex after " + std::to_string(max_halvings) + " step halvings");
    ++halvings;
    const Vector mid = advance(f, p, 0.5 * h, depth + 1, halvings);
    return advance(f, mid, 0.5 * h, depth + 1, halvings);
}

inline FlowTrajectory integrate(const MarkovGraph& g, const GeneratorPhi& phi, const FlowRhs& f, const Vector& p0,
                                double t_end, double dt) {
    check_dim(g.size(), p0.size(), "initial density");
    require(dt > 0.0 && t_end >= 0.0, Errc::InvalidArgument, "need dt > 0 and t_end >= 0");
    require(p0.allFinite() && p0.minCoeff() >= 0.0, Errc::PositivityLoss, "initial density has negative entries");
    const long steps = std::max(1L, std::lround(std::ceil(t_end / dt - 1e-9)));
    FlowTrajectory out;
    out.times.reserve(static_cast<std::size_t>(steps + 1));
    Vector p = p0;
    out.times.push_back(0.0);
    out.densities.push_back(p);
    out.dissipation.push_back(phi_divergence(g, phi, p));
    for (long k = 1; k <= steps; ++k) {
        const double t_next = std::min(t_end, k * dt);
        p = advance(f, p, t_next - out.times.back(), 0, out.halvings);
        out.times.push_back(t_next);
        out.densities.push_back(p);
        out.dissipation.push_back(phi_divergence(g, phi, p));
    }
    return out;
}

/// sum_j omega_ij theta_ij s(phi'(x_j) - phi'(x_i)) on each node. A vanishing
/// theta against a finite phi' difference carries no flux; against an
/// infinite one the result is NaN and the step is rejected.
inline Vector edge_flux_rhs(const MarkovGraph& g, const Activation& a, const GeneratorPhi& phi,
                            const std::function<double(double)>& s, const Vector& p) {
    Vector out = Vector::Zero(g.size());
    for (int e = 0; const Edge& ed : g.edges()) {
        const double th = theta_on_edge(a, g, p, e++);
        const double xi = phi.phi_prime(p(ed.j) / g.invariant()(ed.j)) - phi.phi_prime(p(ed.i) / g.invariant()(ed.i));
        const double flux = ed.weight * th * s(xi);
        out(ed.i) += flux;
        out(ed.j) -= flux;
    }
    return out;
}

}  // namespace detail

/// Kolmogorov forward equation dp/dt = Q^T p.
inline FlowTrajectory integrate_forward(const MarkovGraph& g, const GeneratorPhi& phi, const Vector& p0, double t_end,
                                        double dt) {
    const Matrix qt = g.rates().transpose();
    return detail::integrate(g, phi, [&](const Vector& p) { return Vector(qt * p); }, p0, t_end, dt);
}

/// Onsager flow dp/dt = -K(p) grad D_phi, i.e.
/// dp_i/dt = sum_j omega_ij theta_ij (phi'(x_j) - phi'(x_i)).
inline FlowTrajectory integrate_onsager(const MarkovGraph& g, const Activation& a, const GeneratorPhi& phi,
                                        const Vector& p0, double t_end, double dt) {
    const std::function<double(double)> id = [](double s) { return s; };
    return detail::integrate(
        g, phi, [&](const Vector& p) { return detail::edge_flux_rhs(g, a, phi, id, p); }, p0, t_end, dt);
}

/// Largest |psi*'(phi'(x_i) - phi'(x_j)) theta_ij - (x_i - x_j)| over edges.
inline double triple_consistency(const MarkovGraph& g, const Activation& a, const GeneratorPhi& phi,
                                 const DissipationPsiStar& psi, const Vector& p) {
    double worst = 0.0;
    for (int e = 0; const Edge& ed : g.edges()) {
        const double x = p(ed.i) / g.invariant()(ed.i);
        const double y = p(ed.j) / g.invariant()(ed.j);
        const double th = theta_on_edge(a, g, p, e++);
        const double r = psi.psi_star_prime(phi.phi_prime(x) - phi.phi_prime(y)) * th - (x - y);
        worst = std::max(worst, std::abs(r) / (1.0 + std::abs(x - y)));
    }
    return worst;
}

/// Generalized flow dp_i/dt = -sum_j omega_ij theta_ij psi*'(phi'(x_i) - phi'(x_j)).
inline FlowTrajectory integrate_generalized(const MarkovGraph& g, const Activation& a, const GeneratorPhi& phi,
                                            const DissipationPsiStar& psi, const Vector& p0, double t_end, double dt) {
    detail::check_dim(g.size(), p0.size(), "initial density");
    detail::require(p0.minCoeff() > 0.0, Errc::PositivityLoss, "initial density must be interior");
    detail::require(triple_consistency(g, a, phi, psi, p0) <= 1e-8, Errc::InconsistentTriple,
                    "(theta, phi, psi*) do not satisfy psi*'(phi'(x) - phi'(y)) theta(x, y) = x - y");
    const std::function<double(double)> s = psi.psi_star_prime;
    return detail::integrate(
        g, phi, [&](const Vector& p) { return detail::edge_flux_rhs(g, a, phi, s, p); }, p0, t_end, dt);
}

/// Sup-norm gap between -div(theta v) with v the gradient-flow velocity and
/// the direct right-hand side assembled from the dense weight matrix.
inline double flux_form_check(const MarkovGraph& g, const Activation& a, const GeneratorPhi& phi,
                              const DissipationPsiStar* psi, const Vector& p) {
    detail::check_dim(g.size(), p.size(), "flux_form_check");
    const int n = g.size();
    Vector dphi(n);
    for (int i = 0; i < n; ++i) dphi(i) = phi.phi_prime(p(i) / g.invariant()(i));

    const EdgeField grad = weighted_gradient(g, dphi);
    EdgeField m(g.edge_count());
    for (int e = 0; e < g.edge_count(); ++e) {
        const Edge& ed = g.edges()[static_cast<std::size_t>(e)];
        const double v = psi ? -ed.sqrt_weight * psi->psi_star_prime(grad[e] / ed.sqrt_weight) : -grad[e];
        m[e] = theta_on_edge(a, g, p, e) * v;
    }
    const Vector continuity = -divergence(g, m);

    Vector direct = Vector::Zero(n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            if (j == i || g.weight(i, j) <= 0.0) continue;
            const double th = a.theta(p(i) / g.invariant()(i), p(j) / g.invariant()(j));
            const double xi = dphi(i) - dphi(j);
            direct(i) -= g.weight(i, j) * th * (psi ? psi->psi_star_prime(xi) : xi);
        }
    }
    return (continuity - direct).cwiseAbs().maxCoeff();
}

}  // namespace mfgraph
