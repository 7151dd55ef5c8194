#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "mfgraph/activation.hpp"
#include "mfgraph/error.hpp"
#include "mfgraph/lagrangian.hpp"
#include "mfgraph/markov_graph.hpp"

namespace mfgraph {

/// Payoff map F(p) (or G(p)) with an optional scalar potential whose
/// tangential gradient reproduces it.
struct PayoffField {
    std::function<Vector(const Vector&)> field;
    std::function<double(const Vector&)> potential;

    bool has_potential() const { return static_cast<bool>(potential); }
    Vector operator()(const Vector& p) const { return field(p); }
};

inline PayoffField zero_payoff(int n) {
    return {[n](const Vector&) { return Vector(Vector::Zero(n)); }, [](const Vector&) { return 0.0; }};
}

/// F(p) = W p + b. A symmetric W carries the potential 1/2 p^T W p + b^T p;
/// otherwise the field is flagged non-potential.
inline PayoffField quadratic_payoff(const Matrix& w, const Vector& b) {
    detail::require(w.rows() == w.cols() && b.size() == w.rows(), Errc::DimensionMismatch,
                    "W must be n x n and b of length n");
    PayoffField out;
    out.field = [w, b](const Vector& p) { return Vector(w * p + b); };
    if ((w - w.transpose()).cwiseAbs().maxCoeff() == 0.0)
        out.potential = [w, b](const Vector& p) { return 0.5 * p.dot(w * p) + b.dot(p); };
    return out;
}

inline PayoffField quadratic_payoff(const Matrix& w) { return quadratic_payoff(w, Vector::Zero(w.rows())); }

/// Complete problem data on a horizon [t0, T].
struct MFGProblem {
    MarkovGraph graph;
    Activation activation;
    EdgeLagrangians lagrangian;
    PayoffField running;   // F, optional potential
    PayoffField terminal;  // G, optional potential
    double t0 = 0.0;
    double T = 1.0;
    Vector p0;
    /// When set, the terminal density is prescribed (transport problem) and
    /// the terminal payoff is ignored.
    std::optional<Vector> pinned_terminal;

    int size() const { return graph.size(); }
    double horizon() const { return T - t0; }
    bool potential_game() const {
        return running.has_potential() && (pinned_terminal.has_value() || terminal.has_potential());
    }
};

/// Problem with a new starting point (p, t); everything else unchanged.
inline MFGProblem restarted(const MFGProblem& prob, const Vector& p, double t) {
    MFGProblem out = prob;
    out.p0 = p;
    out.t0 = t;
    return out;
}

inline MFGProblem make_problem(MarkovGraph graph, Activation activation, LagrangianPair pair, PayoffField running,
                               PayoffField terminal, double t0, double T, Vector p0) {
    return MFGProblem{std::move(graph), std::move(activation), EdgeLagrangians(std::move(pair)), std::move(running),
                      std::move(terminal), t0, T, std::move(p0), std::nullopt};
}

inline void validate_problem(const MFGProblem& prob) {
    const int n = prob.size();
    detail::check_dim(n, prob.p0.size(), "initial density");
    detail::require(prob.T > prob.t0, Errc::InvalidArgument, "horizon must satisfy t < T");
    detail::require(prob.p0.allFinite() && prob.p0.minCoeff() >= 0.0 && std::abs(prob.p0.sum() - 1.0) <= 1e-10,
                    Errc::OutOfDomain, "initial density must lie on the simplex");
    detail::require(static_cast<bool>(prob.running.field) && static_cast<bool>(prob.terminal.field),
                    Errc::InvalidArgument, "F and G must be set");
    if (!prob.lagrangian.uniform())
        detail::require(static_cast<int>(prob.lagrangian.per_edge_count()) == prob.graph.edge_count(),
                        Errc::DimensionMismatch, "one Lagrangian pair per edge is required");
    if (prob.pinned_terminal) {
        const Vector& q = *prob.pinned_terminal;
        detail::check_dim(n, q.size(), "terminal density");
        detail::require(q.allFinite() && q.minCoeff() >= 0.0 && std::abs(q.sum() - 1.0) <= 1e-10, Errc::OutOfDomain,
                        "terminal density must lie on the simplex");
    }
}

/// Largest mismatch between (F_i - F_j) and the central tangential
/// difference of the potential along e_i - e_j, over random interior points.
inline double potential_mismatch(const PayoffField& f, int n, unsigned seed = 1, int samples = 10) {
    detail::require(f.has_potential(), Errc::NoPotentialStructure, "payoff has no potential");
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> u(0.1, 1.0);
    const double h = 1e-5;
    double worst = 0.0;
    for (int s = 0; s < samples; ++s) {
        Vector p(n);
        for (int i = 0; i < n; ++i) p(i) = u(rng);
        p /= p.sum();
        const Vector v = f.field(p);
        for (int i = 0; i < n; ++i) {
            for (int j = i + 1; j < n; ++j) {
                Vector hi = p, lo = p;
                hi(i) += h, hi(j) -= h, lo(i) -= h, lo(j) += h;
                const double fd = (f.potential(hi) - f.potential(lo)) / (2.0 * h);
                worst = std::max(worst, std::abs(fd - (v(i) - v(j))));
            }
        }
    }
    return worst;
}

enum class SolverMethod { automatic, convex, fixed_point };

struct SolverOptions {
    int n_t = 128;
    double tol = 1e-8;
    double damping = 0.5;
    long max_iterations = 0;  // 0: method default (1e5 convex, 1e4 fixed point)
    SolverMethod method = SolverMethod::automatic;
    /// Return the last iterate flagged converged = false instead of throwing.
    bool allow_nonconvergence = false;
};

struct SolverDiagnostics {
    std::string method;
    long iterations = 0;
    double residual = 0.0;  // final stopping metric
    bool converged = false;
    double continuity_residual = 0.0;
    double adjoint_residual = 0.0;
    std::vector<double> objective_history;  // convex solver only
};

/// Time-gridded equilibrium: densities p_k, potentials Phi_k, velocities
/// v_k = H'(grad Phi_k), fluxes m_k (k < N), Hamiltonian and value.
struct MFGSolution {
    std::vector<double> times;
    std::vector<Vector> p;
    std::vector<Vector> phi;
    std::vector<EdgeField> v;
    std::vector<EdgeField> m;
    std::vector<double> hamiltonian_trace;  // NaN without a running potential
    double value = std::nan("");
    SolverDiagnostics diagnostics;

    int steps() const { return static_cast<int>(times.size()) - 1; }
    double dt() const { return times.size() > 1 ? times[1] - times[0] : 0.0; }
};

}  // namespace mfgraph
