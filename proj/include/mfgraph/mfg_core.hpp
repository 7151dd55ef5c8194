#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "mfgraph/activation.hpp"
#include "mfgraph/error.hpp"
#include "mfgraph/markov_graph.hpp"
#include "mfgraph/mfg_problem.hpp"

namespace mfgraph {

/// H(p, Phi) = sum over stored edges of H_e(grad Phi) theta_e(p), plus the
/// running potential. Both orientations of an edge carry the same value, so
/// this equals the half sum over ordered pairs.
inline double hamiltonian_value(const MFGProblem& prob, const Vector& p, const NodeFunction& phi) {
    detail::require(prob.running.has_potential(), Errc::NoPotentialStructure,
                    "the Hamiltonian needs a running potential");
    const MarkovGraph& g = prob.graph;
    detail::check_dim(g.size(), p.size(), "hamiltonian_value density");
    const EdgeField grad = weighted_gradient(g, phi);
    double s = 0.0;
    for (int e = 0; e < g.edge_count(); ++e) s += prob.lagrangian[e].H(grad[e]) * theta_on_edge(prob.activation, g, p, e);
    return s + prob.running.potential(p);
}

namespace detail {

inline constexpr double interior_floor = 1e-10;

/// Kinetic part sum_e theta_e L_e(m_e / theta_e) of the running cost.
inline double kinetic_cost(const MFGProblem& prob, const Vector& p, const Vector& m) {
    double s = 0.0;
    for (int e = 0; e < prob.graph.edge_count(); ++e) {
        const double th = theta_on_edge(prob.activation, prob.graph, p, e);
        if (m(e) == 0.0) continue;
        s += th * prob.lagrangian[e].L(m(e) / th);
    }
    return s;
}

/// H_e(grad Phi) d theta_e / d p_i summed over the edges at each node.
inline Vector hamiltonian_density_gradient(const MFGProblem& prob, const Vector& p, const EdgeField& b) {
    const MarkovGraph& g = prob.graph;
    Vector out = Vector::Zero(g.size());
    for (int e = 0; const Edge& ed : g.edges()) {
        const double h = prob.lagrangian[e].H(b[e]);
        if (h != 0.0) {
            const auto [di, dj] = dtheta_on_edge(prob.activation, g, p, e);
            out(ed.i) += h * di;
            out(ed.j) += h * dj;
        }
        ++e;
    }
    return out;
}

/// m_e = theta_e(p) H'_e(b_e).
inline EdgeField optimal_flux(const MFGProblem& prob, const Vector& p, const EdgeField& b) {
    EdgeField m(prob.graph.edge_count());
    for (int e = 0; e < m.size(); ++e)
        m[e] = theta_on_edge(prob.activation, prob.graph, p, e) * prob.lagrangian[e].H_prime(b[e]);
    return m;
}

inline EdgeField velocity(const MFGProblem& prob, const NodeFunction& phi) {
    const EdgeField grad = weighted_gradient(prob.graph, phi);
    EdgeField v(grad.size());
    for (int e = 0; e < v.size(); ++e) v[e] = prob.lagrangian[e].H_prime(grad[e]);
    return v;
}

/// Solution fields that depend only on (p_k, Phi_k): velocities, Hamiltonian
/// trace, time grid and the Euler-Lagrange residuals.
inline void finish_solution(const MFGProblem& prob, MFGSolution& sol);

/// Concavity spot check of a potential along tangential directions e_i - e_j.
inline void check_concave(const std::function<double(const Vector&)>& f, int n, const char* what) {
    std::mt19937 rng(97);
    std::uniform_real_distribution<double> u(0.05, 1.0);
    const double h = 1e-3;
    for (int s = 0; s < 20; ++s) {
        Vector p(n);
        for (int i = 0; i < n; ++i) p(i) = u(rng);
        p /= p.sum();
        const double f0 = f(p);
        for (int i = 0; i < n; ++i) {
            for (int j = i + 1; j < n; ++j) {
                Vector hi = p, lo = p;
                hi(i) += h, hi(j) -= h, lo(i) -= h, lo(j) += h;
                const double second = (f(hi) - 2.0 * f0 + f(lo)) / (h * h);
                const double noise = 64.0 * std::numeric_limits<double>::epsilon() * (1.0 + std::abs(f0)) / (h * h);
                require(second <= 1e-8 + noise, Errc::NotConcave,
                        std::string(what) + " is not concave along e_" + std::to_string(i) + " - e_" +
                            std::to_string(j));
            }
        }
    }
}

/// Reduced objective of the density-flux program on fluxes m (N x E), with
/// densities eliminated through p_{k+1} = p_k - dt div(m_k).
class FluxProgram {
public:
    FluxProgram(const MFGProblem& prob, int n_t) : prob_(prob), n_(n_t), dt_(prob.horizon() / n_t) {}

    int steps() const { return n_; }
    double dt() const { return dt_; }
    int edges() const { return prob_.graph.edge_count(); }

    /// Densities along m; false if any falls below the interior floor.
    bool densities(const Matrix& m, std::vector<Vector>& p) const {
        p.resize(static_cast<std::size_t>(n_ + 1));
        p[0] = prob_.p0;
        for (int k = 0; k < n_; ++k) {
            const Vector mk = m.row(k).transpose();
            p[static_cast<std::size_t>(k + 1)] = p[static_cast<std::size_t>(k)] - dt_ * divergence(prob_.graph, EdgeField(mk));
            if (!(p[static_cast<std::size_t>(k + 1)].minCoeff() >= interior_floor)) return false;
        }
        return true;
    }

    double objective(const Matrix& m, const std::vector<Vector>& p) const {
        double j = prob_.pinned_terminal ? 0.0 : prob_.terminal.potential(p.back());
        for (int k = 0; k < n_; ++k) {
            const Vector& pk = p[static_cast<std::size_t>(k)];
            j -= dt_ * (kinetic_cost(prob_, pk, m.row(k).transpose()) - prob_.running.potential(pk));
        }
        return j;
    }

    /// Objective, or -inf when the densities leave the interior.
    double objective(const Matrix& m) const {
        std::vector<Vector> p;
        if (!densities(m, p)) return -std::numeric_limits<double>::infinity();
        return objective(m, p);
    }

    /// Gradient in m by the adjoint sweep from lambda_N; fills lambda_0..N.
    Matrix gradient(const Matrix& m, const std::vector<Vector>& p, const Vector& lambda_n,
                    std::vector<Vector>& lambda) const {
        const MarkovGraph& g = prob_.graph;
        Matrix grad(n_, edges());
        lambda.assign(static_cast<std::size_t>(n_ + 1), Vector());
        lambda[static_cast<std::size_t>(n_)] = lambda_n;
        for (int k = n_ - 1; k >= 0; --k) {
            const Vector& pk = p[static_cast<std::size_t>(k)];
            const Vector& next = lambda[static_cast<std::size_t>(k + 1)];
            const EdgeField dl = weighted_gradient(g, next);
            Vector back = prob_.running.field(pk);
            for (int e = 0; const Edge& ed : g.edges()) {
                const LagrangianPair& pair = prob_.lagrangian[e];
                const double th = theta_on_edge(prob_.activation, g, pk, e);
                const double v = m(k, e) / th;
                const double lp = pair.L_prime(v);
                grad(k, e) = dt_ * (dl[e] - lp);
                // d/d theta [theta L(m / theta)] = L(v) - v L'(v) = -H(L'(v)).
                const double hval = v * lp - pair.L(v);
                if (hval != 0.0) {
                    const auto [di, dj] = dtheta_on_edge(prob_.activation, g, pk, e);
                    back(ed.i) += hval * di;
                    back(ed.j) += hval * dj;
                }
                ++e;
            }
            lambda[static_cast<std::size_t>(k)] = next + dt_ * back;
        }
        return grad;
    }

    /// Sum over time of div(m_k), the linear map fixing the terminal density.
    Vector total_divergence(const Matrix& m) const {
        return divergence(prob_.graph, EdgeField(Vector(m.colwise().sum().transpose())));
    }

private:
    const MFGProblem& prob_;
    int n_;
    double dt_;
};

/// Projection onto {d : sum_k div(d_k) = 0}. With A = sum_k div and
/// div^T = -grad, A A^T = -N L; the pseudo-inverse uses -N L + 1 1^T.
class TerminalProjector {
public:
    TerminalProjector(const MarkovGraph& g, int n_t) : g_(g), n_t_(n_t) {
        const int n = g.size();
        Matrix a = -static_cast<double>(n_t) * laplacian_matrix(g) + Matrix::Ones(n, n);
        lu_.compute(a);
    }

    /// z with A A^T z = A x (zero mean).
    Vector multiplier(const Matrix& x) const {
        const Vector ax = divergence(g_, EdgeField(Vector(x.colwise().sum().transpose())));
        return lu_.solve(ax);
    }

    Matrix project(const Matrix& x) const {
        const Vector z = multiplier(x);
        const Vector gz = weighted_gradient(g_, z).values();
        Matrix out = x;
        out.rowwise() += gz.transpose();
        (void)n_t_;
        return out;
    }

private:
    const MarkovGraph& g_;
    int n_t_;
    Eigen::PartialPivLU<Matrix> lu_;
};

}  // namespace detail

/// Maximizes the time-discrete payoff
///   G(p_N) - sum_k dt [sum_e theta_e(p_k) L(m_ke / theta_e(p_k)) - F(p_k)]
/// over fluxes with L-BFGS ascent and Armijo backtracking. Phi is the
/// adjoint of the final gradient evaluation.
inline MFGSolution solve_potential_convex(const MFGProblem& prob, const SolverOptions& opts = {}) {
    validate_problem(prob);
    const int n = prob.size();
    detail::require(opts.n_t >= 1, Errc::InvalidArgument, "n_t must be positive");
    detail::require(prob.potential_game(), Errc::NoPotentialStructure,
                    "convex solver requires potential structure for F and G");
    detail::require(prob.activation.concave(), Errc::NotConcave,
                    "convex solver requires a concave activation kind");
    detail::check_concave(prob.running.potential, n, "running potential");
    if (!prob.pinned_terminal) detail::check_concave(prob.terminal.potential, n, "terminal potential");
    detail::require(prob.p0.minCoeff() >= detail::interior_floor, Errc::PositivityLoss,
                    "initial density must be interior");

    const detail::FluxProgram program(prob, opts.n_t);
    const int nt = opts.n_t;
    const int ne = program.edges();
    const double dt = program.dt();
    const long cap = opts.max_iterations > 0 ? opts.max_iterations : 100000;

    std::optional<detail::TerminalProjector> projector;
    Matrix m = Matrix::Zero(nt, ne);
    if (prob.pinned_terminal) {
        const Vector& p1 = *prob.pinned_terminal;
        detail::require(p1.minCoeff() >= detail::interior_floor, Errc::PositivityLoss,
                        "terminal density must be interior");
        projector.emplace(prob.graph, nt);
        // Constant flux -grad w with (-L) w = (p0 - p1) / (T - t) joins p0 to p1 linearly.
        Matrix a = -laplacian_matrix(prob.graph) + Matrix::Ones(n, n);
        const Vector w = a.partialPivLu().solve(Vector((prob.p0 - p1) / prob.horizon()));
        const Vector flux = -weighted_gradient(prob.graph, w).values();
        m.rowwise() = flux.transpose();
    }

    std::vector<Vector> p;
    std::vector<Vector> lambda;
    detail::require(program.densities(m, p), Errc::PositivityLoss, "initial flux leaves the interior");
    double j = program.objective(m, p);

    // Gradient (ascent direction, projected when the terminal is pinned) and the multipliers.
    auto evaluate = [&](const Matrix& mm, const std::vector<Vector>& pp, std::vector<Vector>& lam) {
        if (!projector) return program.gradient(mm, pp, prob.terminal.field(pp.back()), lam);
        const Matrix g0 = program.gradient(mm, pp, Vector::Zero(n), lam);
        const Vector z = projector->multiplier(g0);
        // Shifting lambda_N by z / dt adds grad(z) to every gradient row, which is the projection.
        return program.gradient(mm, pp, Vector(z / dt), lam);
    };

    Matrix grad = evaluate(m, p, lambda);
    SolverDiagnostics diag;
    diag.method = "convex";
    diag.objective_history.push_back(j);

    struct Pair {
        Matrix s, y;
        double rho;
    };
    std::deque<Pair> memory;
    const std::size_t memory_size = 10;
    long it = 0;
    double metric = grad.cwiseAbs().maxCoeff() / dt;
    bool converged = metric <= opts.tol;
    std::string stall;

    while (!converged && it < cap) {
        ++it;
        // Two-loop recursion on -J; q is the ascent direction.
        Matrix q = grad;
        std::vector<double> alphas(memory.size());
        for (std::size_t r = memory.size(); r-- > 0;) {
            alphas[r] = memory[r].rho * (memory[r].s.cwiseProduct(q)).sum();
            q -= alphas[r] * (-memory[r].y);
        }
        double gamma = 1.0 / dt;
        if (!memory.empty()) {
            const Pair& last = memory.back();
            gamma = (last.s.cwiseProduct(-last.y)).sum() / last.y.squaredNorm();
        }
        q *= gamma;
        for (std::size_t r = 0; r < memory.size(); ++r) {
            const double beta = memory[r].rho * ((-memory[r].y).cwiseProduct(q)).sum();
            q += memory[r].s * (alphas[r] - beta);
        }
        double slope = grad.cwiseProduct(q).sum();
        if (!(slope > 0.0)) {
            memory.clear();
            q = grad / dt;
            slope = grad.cwiseProduct(q).sum();
        }

        double step = 1.0;
        bool accepted = false;
        bool any_feasible = false;
        Matrix m_new;
        std::vector<Vector> p_new;
        double j_new = 0.0;
        const double noise = 1e-14 * (1.0 + std::abs(j));
        for (int h = 0; h <= 60; ++h, step *= 0.5) {
            m_new = m + step * q;
            if (projector) {
                // Remove drift of the terminal constraint from rounding.
                const Vector drift = program.total_divergence(m_new) - program.total_divergence(m);
                if (drift.cwiseAbs().maxCoeff() > 1e-13) m_new = m + step * projector->project(q);
            }
            if (!program.densities(m_new, p_new)) continue;
            any_feasible = true;
            j_new = program.objective(m_new, p_new);
            if (j_new >= j + 1e-4 * step * slope) {
                accepted = true;
                break;
            }
            // Near the optimum the Armijo gain drops below rounding in J; fall back
            // to a decrease of the gradient norm at an objective level within noise.
            if (j_new >= j - noise) {
                std::vector<Vector> lam_try;
                const Matrix g_try = evaluate(m_new, p_new, lam_try);
                if (g_try.cwiseAbs().maxCoeff() < grad.cwiseAbs().maxCoeff()) {
                    accepted = true;
                    break;
                }
            }
        }
        if (!accepted) {
            if (!memory.empty()) {
                memory.clear();
                continue;
            }
            stall = any_feasible ? "line search failed to improve the objective"
                                 : "line search cannot keep densities interior";
            if (!any_feasible) detail::fail(Errc::PositivityLoss, stall);
            break;
        }

        std::vector<Vector> lam_new;
        const Matrix grad_new = evaluate(m_new, p_new, lam_new);
        Pair pr{m_new - m, grad_new - grad, 0.0};
        const double sy = (pr.s.cwiseProduct(-pr.y)).sum();
        if (sy > 1e-300) {
            pr.rho = 1.0 / sy;
            memory.push_back(std::move(pr));
            if (memory.size() > memory_size) memory.pop_front();
        }
        m = std::move(m_new);
        p = std::move(p_new);
        j = j_new;
        grad = grad_new;
        lambda = std::move(lam_new);
        diag.objective_history.push_back(j);
        metric = grad.cwiseAbs().maxCoeff() / dt;
        converged = metric <= opts.tol;
    }

    diag.iterations = it;
    diag.residual = metric;
    diag.converged = converged;
    if (!converged && !opts.allow_nonconvergence) {
        detail::fail(Errc::NonConvergence, (stall.empty() ? std::string("iteration cap reached") : stall) +
                                               "; flux gradient " + std::to_string(metric));
    }

    MFGSolution sol;
    sol.p = std::move(p);
    sol.phi = std::move(lambda);
    sol.m.reserve(static_cast<std::size_t>(nt));
    for (int k = 0; k < nt; ++k) sol.m.emplace_back(Vector(m.row(k).transpose()));
    sol.value = j;
    sol.diagnostics = std::move(diag);
    detail::finish_solution(prob, sol);
    return sol;
}

/// Damped Picard iteration on the potential trajectory: forward explicit
/// Euler for p given Phi, backward sweep from Phi_N = G(p_N), then
/// Phi <- (1 - damping) Phi + damping Phi_new. Stops on the undamped change.
inline MFGSolution solve_mfg_fixedpoint(const MFGProblem& prob, const SolverOptions& opts = {}) {
    validate_problem(prob);
    detail::require(!prob.pinned_terminal, Errc::InvalidArgument,
                    "the fixed-point solver does not support a prescribed terminal density");
    detail::require(opts.n_t >= 1, Errc::InvalidArgument, "n_t must be positive");
    detail::require(opts.damping > 0.0 && opts.damping <= 1.0, Errc::InvalidArgument, "damping must lie in (0, 1]");
    const MarkovGraph& g = prob.graph;
    const int nt = opts.n_t;
    const double dt = prob.horizon() / nt;
    const long cap = opts.max_iterations > 0 ? opts.max_iterations : 10000;

    std::vector<Vector> phi(static_cast<std::size_t>(nt + 1), prob.terminal.field(prob.p0));
    std::vector<Vector> p(static_cast<std::size_t>(nt + 1));
    std::vector<EdgeField> m(static_cast<std::size_t>(nt));

    auto forward = [&](const std::vector<Vector>& ph) {
        p[0] = prob.p0;
        for (int k = 0; k < nt; ++k) {
            const auto ku = static_cast<std::size_t>(k);
            m[ku] = detail::optimal_flux(prob, p[ku], weighted_gradient(g, ph[ku + 1]));
            p[ku + 1] = p[ku] - dt * divergence(g, m[ku]);
            if (!p[ku + 1].allFinite() || p[ku + 1].minCoeff() < -1e-12)
                detail::fail(Errc::PositivityLoss, "density left the simplex at step " + std::to_string(k + 1));
        }
    };
    auto backward = [&](std::vector<Vector>& out) {
        out.assign(static_cast<std::size_t>(nt + 1), Vector());
        out[static_cast<std::size_t>(nt)] = prob.terminal.field(p[static_cast<std::size_t>(nt)]);
        for (int k = nt - 1; k >= 0; --k) {
            const auto ku = static_cast<std::size_t>(k);
            const EdgeField b = weighted_gradient(g, out[ku + 1]);
            out[ku] = out[ku + 1] + dt * (prob.running.field(p[ku]) + detail::hamiltonian_density_gradient(prob, p[ku], b));
        }
    };

    SolverDiagnostics diag;
    diag.method = "fixed_point";
    std::vector<Vector> fresh;
    double residual = std::numeric_limits<double>::infinity();
    long it = 0;
    bool converged = false;
    while (it < cap) {
        ++it;
        forward(phi);
        backward(fresh);
        residual = 0.0;
        for (int k = 0; k <= nt; ++k) {
            const auto ku = static_cast<std::size_t>(k);
            residual = std::max(residual, (fresh[ku] - phi[ku]).cwiseAbs().maxCoeff());
        }
        if (!std::isfinite(residual)) break;
        if (residual <= opts.tol) {
            converged = true;
            phi = fresh;
            break;
        }
        for (int k = 0; k <= nt; ++k) {
            const auto ku = static_cast<std::size_t>(k);
            phi[ku] = (1.0 - opts.damping) * phi[ku] + opts.damping * fresh[ku];
        }
    }
    diag.iterations = it;
    diag.residual = residual;
    diag.converged = converged;
    if (!converged && !opts.allow_nonconvergence)
        detail::fail(Errc::NonConvergence,
                     "fixed point stopped after " + std::to_string(it) + " sweeps, residual " + std::to_string(residual));

    MFGSolution sol;
    forward(phi);
    sol.p = p;
    sol.phi = phi;
    sol.m = m;
    sol.diagnostics = std::move(diag);
    if (prob.potential_game()) {
        const detail::FluxProgram program(prob, nt);
        Matrix mm(nt, g.edge_count());
        for (int k = 0; k < nt; ++k) mm.row(k) = m[static_cast<std::size_t>(k)].values().transpose();
        sol.value = program.objective(mm, p);
    }
    detail::finish_solution(prob, sol);
    return sol;
}

/// Dispatches on SolverOptions::method; automatic picks the convex program
/// for concave potential games and the fixed point otherwise.
inline MFGSolution solve(const MFGProblem& prob, const SolverOptions& opts = {}) {
    SolverMethod method = opts.method;
    if (method == SolverMethod::automatic) {
        method = prob.pinned_terminal || (prob.potential_game() && prob.activation.concave()) ? SolverMethod::convex
                                                                                               : SolverMethod::fixed_point;
    }
    return method == SolverMethod::convex ? solve_potential_convex(prob, opts) : solve_mfg_fixedpoint(prob, opts);
}

/// (continuity residual, adjoint residual): sup over interior grid times of
///   (p_{k+1} - p_{k-1}) / 2dt + div(theta(p_k) H'(grad Phi_k))
///   (Phi_{k+1} - Phi_{k-1}) / 2dt + sum_e H(grad Phi_k) d theta / dp + F(p_k).
inline std::pair<double, double> euler_lagrange_residual(const MFGProblem& prob, const MFGSolution& sol) {
    const int nt = sol.steps();
    if (nt < 2) return {0.0, 0.0};
    const double dt = sol.dt();
    double rc = 0.0;
    double ra = 0.0;
    for (int k = 1; k < nt; ++k) {
        const auto ku = static_cast<std::size_t>(k);
        const Vector& pk = sol.p[ku];
        const EdgeField b = weighted_gradient(prob.graph, sol.phi[ku]);
        const Vector cont = (sol.p[ku + 1] - sol.p[ku - 1]) / (2.0 * dt) +
                            divergence(prob.graph, detail::optimal_flux(prob, pk, b));
        const Vector adj = (sol.phi[ku + 1] - sol.phi[ku - 1]) / (2.0 * dt) +
                           detail::hamiltonian_density_gradient(prob, pk, b) + prob.running.field(pk);
        rc = std::max(rc, cont.cwiseAbs().maxCoeff());
        ra = std::max(ra, adj.cwiseAbs().maxCoeff());
    }
    return {rc, ra};
}

inline void detail::finish_solution(const MFGProblem& prob, MFGSolution& sol) {
    const int nt = static_cast<int>(sol.p.size()) - 1;
    const double dt = prob.horizon() / nt;
    sol.times.resize(static_cast<std::size_t>(nt + 1));
    for (int k = 0; k <= nt; ++k) sol.times[static_cast<std::size_t>(k)] = prob.t0 + k * dt;
    sol.times.back() = prob.T;
    sol.v.clear();
    sol.hamiltonian_trace.clear();
    for (int k = 0; k <= nt; ++k) {
        const auto ku = static_cast<std::size_t>(k);
        sol.v.push_back(velocity(prob, sol.phi[ku]));
        sol.hamiltonian_trace.push_back(prob.running.has_potential() ? hamiltonian_value(prob, sol.p[ku], sol.phi[ku])
                                                                     : std::nan(""));
    }
    const auto [rc, ra] = euler_lagrange_residual(prob, sol);
    sol.diagnostics.continuity_residual = rc;
    sol.diagnostics.adjoint_residual = ra;
}

/// G(p_T) - int (sum_e theta_e L(v_e) - F) ds by the trapezoid rule along sol.
inline double value_of_trajectory(const MFGProblem& prob, const MFGSolution& sol) {
    detail::require(prob.potential_game(), Errc::NoPotentialStructure, "value needs potentials for F and G");
    const int nt = sol.steps();
    std::vector<double> running(static_cast<std::size_t>(nt + 1));
    for (int k = 0; k <= nt; ++k) {
        const auto ku = static_cast<std::size_t>(k);
        const Vector& pk = sol.p[ku];
        double kin = 0.0;
        for (int e = 0; e < prob.graph.edge_count(); ++e)
            kin += theta_on_edge(prob.activation, prob.graph, pk, e) * prob.lagrangian[e].L(sol.v[ku][e]);
        running[ku] = kin - prob.running.potential(pk);
    }
    double integral = 0.0;
    for (int k = 0; k < nt; ++k) {
        const auto ku = static_cast<std::size_t>(k);
        integral += 0.5 * (sol.times[ku + 1] - sol.times[ku]) * (running[ku] + running[ku + 1]);
    }
    const double terminal = prob.pinned_terminal ? 0.0 : prob.terminal.potential(sol.p.back());
    return terminal - integral;
}

/// G(p_T) - (beta - 1) H0 (T - t) + beta int F ds for Hamiltonians
/// homogeneous of degree beta, with H0 the mean of the Hamiltonian trace.
inline double homogeneous_value(const MFGProblem& prob, const MFGSolution& sol, double beta) {
    detail::require(prob.potential_game(), Errc::NoPotentialStructure, "value needs potentials for F and G");
    for (int e = 0; e < prob.graph.edge_count(); ++e)
        detail::require(prob.lagrangian[e].is_power() && std::abs(prob.lagrangian[e].beta() - beta) <= 1e-12,
                        Errc::BadExponent, "H is not homogeneous of degree " + std::to_string(beta));
    const auto& tr = sol.hamiltonian_trace;
    double mean = 0.0;
    for (double h : tr) mean += h;
    mean /= static_cast<double>(tr.size());
    const auto [lo, hi] = std::minmax_element(tr.begin(), tr.end());
    detail::require(*hi - *lo <= 1e-4 * std::max(1.0, std::abs(mean)), Errc::NonConstantHamiltonian,
                    "Hamiltonian varies by " + std::to_string(*hi - *lo) + " along the trajectory");
    double potential = 0.0;
    for (int k = 0; k < sol.steps(); ++k) {
        const auto ku = static_cast<std::size_t>(k);
        potential += 0.5 * (sol.times[ku + 1] - sol.times[ku]) *
                     (prob.running.potential(sol.p[ku]) + prob.running.potential(sol.p[ku + 1]));
    }
    const double terminal = prob.pinned_terminal ? 0.0 : prob.terminal.potential(sol.p.back());
    return terminal - (beta - 1.0) * mean * prob.horizon() + beta * potential;
}

/// U(p, t): optimal discrete payoff of the game started at (p, t).
inline double value_function(const MFGProblem& prob, const Vector& p, double t, const SolverOptions& opts = {}) {
    if (t >= prob.T) return prob.terminal.potential(p);
    return solve_potential_convex(restarted(prob, p, t), opts).value;
}

/// |d_t U + H(p, grad U)| with central differences in t and tangential
/// central differences in p against the state carrying the most mass.
inline double hje_residual(const MFGProblem& prob, const Vector& p, double t, double dt_fd, double dp_fd,
                           const SolverOptions& opts = {}) {
    detail::require(!prob.pinned_terminal, Errc::InvalidArgument, "value function needs a terminal payoff");
    detail::require(t - dt_fd >= prob.t0 - 1e-15 && t + dt_fd < prob.T, Errc::InvalidArgument,
                    "time stencil must stay inside the horizon");
    const int n = prob.size();
    const double ut = (value_function(prob, p, t + dt_fd, opts) - value_function(prob, p, t - dt_fd, opts)) / (2.0 * dt_fd);
    int ref = 0;
    p.maxCoeff(&ref);
    NodeFunction grad = NodeFunction::Zero(n);
    for (int i = 0; i < n; ++i) {
        if (i == ref) continue;
        Vector hi = p, lo = p;
        hi(i) += dp_fd, hi(ref) -= dp_fd, lo(i) -= dp_fd, lo(ref) += dp_fd;
        grad(i) = (value_function(prob, hi, t, opts) - value_function(prob, lo, t, opts)) / (2.0 * dp_fd);
    }
    return std::abs(ut + hamiltonian_value(prob, p, grad));
}

}  // namespace mfgraph
