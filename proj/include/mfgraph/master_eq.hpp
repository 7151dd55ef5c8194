#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <string>
#include <thread>
#include <vector>

#include "mfgraph/error.hpp"
#include "mfgraph/markov_graph.hpp"
#include "mfgraph/mfg_core.hpp"
#include "mfgraph/mfg_problem.hpp"
#include "mfgraph/quadrature.hpp"
#include "mfgraph/twopoint.hpp"

namespace mfgraph {

/// u(p, t) = Phi_t of the equilibrium started from (p, t); G(p) at t >= T.
inline Vector u_at(const MFGProblem& prob, const Vector& p, double t, const SolverOptions& opts = {}) {
    detail::check_dim(prob.size(), p.size(), "u_at density");
    if (t >= prob.T) return prob.terminal.field(p);
    return solve(restarted(prob, p, t), opts).phi.front();
}

inline Vector u_at(const MFGProblem& prob, const Density& p, double t, const SolverOptions& opts = {}) {
    return u_at(prob, p.values(), t, opts);
}

/// sup |u(p_r, r) - Phi_r| with (p_s, Phi_s) the equilibrium from (p, t). The
/// restart at r keeps the time step of the first solve; p_r and Phi_r are
/// interpolated linearly between grid times.
inline double semigroup_check(const MFGProblem& prob, const Vector& p, double t, double r,
                              const SolverOptions& opts = {}) {
    detail::require(t < r && r < prob.T, Errc::InvalidArgument, "semigroup_check needs t < r < T");
    const MFGSolution first = solve(restarted(prob, p, t), opts);
    const double dt = first.dt();
    const double pos = (r - t) / dt;
    const int k = std::min(first.steps() - 1, static_cast<int>(pos));
    const double w = pos - k;
    const auto ku = static_cast<std::size_t>(k);
    const Vector p_r = (1.0 - w) * first.p[ku] + w * first.p[ku + 1];
    const Vector phi_r = (1.0 - w) * first.phi[ku] + w * first.phi[ku + 1];
    SolverOptions again = opts;
    again.n_t = std::max(1, static_cast<int>(std::lround((prob.T - r) / dt)));
    return (u_at(prob, Vector(p_r / p_r.sum()), r, again) - phi_r).cwiseAbs().maxCoeff();
}

/// U(q, p, t) = sum_i q_i u_i(p, t).
inline double mixed_value(const MFGProblem& prob, const Vector& q, const Vector& p, double t,
                          const SolverOptions& opts = {}) {
    detail::check_dim(prob.size(), q.size(), "mixed_value individual density");
    return q.dot(u_at(prob, p, t, opts));
}

/// Reduced master field on an (x, t) grid: w = u_1 - u_2 together with the
/// components u_1, u_2. Tables are indexed [t index][x index].
struct MasterField {
    std::vector<double> x;
    std::vector<double> t;
    std::vector<std::vector<double>> w, u1, u2;
    struct Hole {
        int ix = 0;
        int it = 0;
        std::string reason;
    };
    std::vector<Hole> failures;

    bool ok(int it, int ix) const {
        return std::isfinite(w[static_cast<std::size_t>(it)][static_cast<std::size_t>(ix)]);
    }
};

namespace detail {

struct MasterNode {
    double w = std::numeric_limits<double>::quiet_NaN();
    double u1 = std::numeric_limits<double>::quiet_NaN();
    double u2 = std::numeric_limits<double>::quiet_NaN();
};

/// u_i(x, t) = G_i(x_T) + int_t^T (H(h y) d theta / d p_i + F_i) ds, with the
/// time integral taken in x along the monotone branch.
inline MasterNode master_node(const TwoPointProblem& tp, double x, double t, const ShootingOptions& opts) {
    MasterNode out;
    const double duration = tp.T - t;
    if (duration <= 0.0) {
        const Vector g = tp.terminal(x);
        out.u1 = g(0);
        out.u2 = g(1);
        out.w = g(0) - g(1);
        return out;
    }
    TwoPointProblem local = tp;
    local.t0 = t;
    ShootingOptions o = opts;
    o.steps = 1;
    o.scan_roots = false;
    const GameResult res = solve_potential_game(local, x, duration, o);
    const Vector g = tp.terminal(res.x_T);
    if (res.method == "stationary") {
        const Vector f = tp.running(x);
        out.u1 = g(0) + duration * f(0);
        out.u2 = g(1) + duration * f(1);
    } else {
        const double sgn = res.x_T > x ? 1.0 : -1.0;
        auto source = [&](double s, int i) {
            const double y = branch_y(tp, s, res.H0, sgn);
            const auto [d1, d2] = tp.theta_partials(s);
            const Vector f = tp.running(s);
            return (tp.pair.H(tp.h * y) * (i == 0 ? d1 : d2) + f(i)) / speed(tp, s, res.H0);
        };
        QuadratureOptions q;
        q.abs_tol = std::max(1e-12, 0.1 * opts.tol);
        const double lo = std::min(x, res.x_T), hi = std::max(x, res.x_T);
        out.u1 = g(0) + integrate_substituted([&](double s) { return source(s, 0); }, lo, hi, Singular::both, q);
        out.u2 = g(1) + integrate_substituted([&](double s) { return source(s, 1); }, lo, hi, Singular::both, q);
    }
    out.w = res.trajectory.y.front();
    return out;
}

}  // namespace detail

/// Fills w(x, t) node by node from two-point equilibria; failed nodes are
/// left as NaN holes and listed in failures.
inline MasterField reduced_master_grid(const TwoPointProblem& tp, const std::vector<double>& x_grid,
                                       const std::vector<double>& t_grid, int threads = 0,
                                       const ShootingOptions& opts = {}) {
    detail::require(!x_grid.empty() && !t_grid.empty(), Errc::InvalidArgument, "empty grid");
    for (double x : x_grid)
        detail::require(x >= 1e-3 && x <= 1.0 - 1e-3, Errc::OutOfDomain,
                        "grid x = " + std::to_string(x) + " is closer than 1e-3 to the boundary");
    for (double t : t_grid)
        detail::require(t >= tp.t0 && t <= tp.T, Errc::OutOfDomain, "grid t = " + std::to_string(t) + " is outside [t0, T]");
    const std::size_t nx = x_grid.size(), nt = t_grid.size();
    MasterField field;
    field.x = x_grid;
    field.t = t_grid;
    const std::vector<double> blank(nx, std::numeric_limits<double>::quiet_NaN());
    field.w.assign(nt, blank);
    field.u1.assign(nt, blank);
    field.u2.assign(nt, blank);
    std::vector<std::string> reasons(nx * nt);

    const std::size_t total = nx * nt;
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t n = next++; n < total; n = next++) {
            const std::size_t it = n / nx, ix = n % nx;
            try {
                const detail::MasterNode node = detail::master_node(tp, x_grid[ix], t_grid[it], opts);
                field.w[it][ix] = node.w;
                field.u1[it][ix] = node.u1;
                field.u2[it][ix] = node.u2;
            } catch (const Error& e) {
                reasons[n] = e.what();
            }
        }
    };
    const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    const unsigned count = std::clamp(threads > 0 ? static_cast<unsigned>(threads) : hw, 1u,
                                      static_cast<unsigned>(std::max<std::size_t>(1, total)));
    std::vector<std::thread> pool;
    for (unsigned k = 1; k < count; ++k) pool.emplace_back(worker);
    worker();
    for (std::thread& th : pool) th.join();

    for (std::size_t n = 0; n < total; ++n)
        if (!reasons[n].empty())
            field.failures.push_back({static_cast<int>(n % nx), static_cast<int>(n / nx), std::move(reasons[n])});
    return field;
}

namespace detail {

/// Finite-difference derivative of a table along x (dir = 0) or t (dir = 1):
/// three-point central inside, three-point one-sided at the edges.
inline double table_derivative(const std::vector<std::vector<double>>& v, const std::vector<double>& x,
                               const std::vector<double>& t, std::size_t it, std::size_t ix, int dir) {
    const std::vector<double>& axis = dir == 0 ? x : t;
    const std::size_t i = dir == 0 ? ix : it;
    const std::size_t n = axis.size();
    if (n < 2) return 0.0;
    auto at = [&](std::size_t j) { return dir == 0 ? v[it][j] : v[j][ix]; };
    if (n == 2) return (at(1) - at(0)) / (axis[1] - axis[0]);
    const std::size_t c = i == 0 ? 1 : i + 1 == n ? n - 2 : i;
    const double a = axis[c - 1], b = axis[c], d = axis[c + 1], s = axis[i];
    // Derivative of the quadratic through the three nodes, at s.
    return at(c - 1) * ((s - b) + (s - d)) / ((a - b) * (a - d)) +
           at(c) * ((s - a) + (s - d)) / ((b - a) * (b - d)) + at(c + 1) * ((s - a) + (s - b)) / ((d - a) * (d - b));
}

/// Whether every table entry used by the stencil at (it, ix) is filled.
inline bool stencil_filled(const MasterField& f, std::size_t it, std::size_t ix) {
    const std::size_t nx = f.x.size(), nt = f.t.size();
    const std::size_t a0 = it < 2 ? 0 : it - 2, b0 = ix < 2 ? 0 : ix - 2;
    for (std::size_t a = a0; a <= std::min(nt - 1, it + 2); ++a)
        if (!std::isfinite(f.w[a][ix])) return false;
    for (std::size_t b = b0; b <= std::min(nx - 1, ix + 2); ++b)
        if (!std::isfinite(f.w[it][b])) return false;
    return true;
}

}  // namespace detail

/// Residual tables of the reduced master equation
///   d_t w + theta'(x) H(h w) + F_bar'(x) + h theta(x) H'(h w) d_x w = 0
/// and of its components
///   d_t u_i + H(h w) d theta / d p_i + F_i + h theta(x) H'(h w) d_x u_i = 0.
struct MasterResiduals {
    std::vector<std::vector<double>> reduced, first, second;
    double reduced_max = 0.0;
    double component_max = 0.0;
};

inline MasterResiduals master_residuals(const TwoPointProblem& tp, const MasterField& f) {
    const std::size_t nx = f.x.size(), nt = f.t.size();
    const double nan = std::numeric_limits<double>::quiet_NaN();
    MasterResiduals out;
    out.reduced.assign(nt, std::vector<double>(nx, nan));
    out.first = out.reduced;
    out.second = out.reduced;
    for (std::size_t it = 0; it < nt; ++it) {
        for (std::size_t ix = 0; ix < nx; ++ix) {
            if (!detail::stencil_filled(f, it, ix)) continue;
            const double x = f.x[ix];
            const double w = f.w[it][ix];
            const double hv = tp.pair.H(tp.h * w);
            const double adv = tp.h * tp.theta(x) * tp.pair.H_prime(tp.h * w);
            const auto [d1, d2] = tp.theta_partials(x);
            const Vector fx = tp.running(x);
            auto dt_of = [&](const auto& v) { return detail::table_derivative(v, f.x, f.t, it, ix, 1); };
            auto dx_of = [&](const auto& v) { return detail::table_derivative(v, f.x, f.t, it, ix, 0); };
            const double r = dt_of(f.w) + (d1 - d2) * hv + tp.F_bar_prime(x) + adv * dx_of(f.w);
            const double r1 = dt_of(f.u1) + hv * d1 + fx(0) + adv * dx_of(f.u1);
            const double r2 = dt_of(f.u2) + hv * d2 + fx(1) + adv * dx_of(f.u2);
            out.reduced[it][ix] = r;
            out.first[it][ix] = r1;
            out.second[it][ix] = r2;
            out.reduced_max = std::max(out.reduced_max, std::abs(r));
            out.component_max = std::max({out.component_max, std::abs(r1), std::abs(r2)});
        }
    }
    return out;
}

/// sup over the grid of the mixed master equation residual for U = q_1 u_1 + q_2 u_2,
/// assembled from the U table itself:
///   d_t U + H(h w) (q_1 d theta / d p_1 + q_2 d theta / d p_2) + q . F + h theta H'(h w) d_x U.
inline double mixed_residual(const TwoPointProblem& tp, const MasterField& f, const Vector& q) {
    detail::check_dim(2, q.size(), "mixed_residual individual density");
    const std::size_t nx = f.x.size(), nt = f.t.size();
    std::vector<std::vector<double>> big_u(nt, std::vector<double>(nx));
    for (std::size_t it = 0; it < nt; ++it)
        for (std::size_t ix = 0; ix < nx; ++ix) big_u[it][ix] = q(0) * f.u1[it][ix] + q(1) * f.u2[it][ix];
    double worst = 0.0;
    for (std::size_t it = 0; it < nt; ++it) {
        for (std::size_t ix = 0; ix < nx; ++ix) {
            if (!detail::stencil_filled(f, it, ix)) continue;
            const double x = f.x[ix];
            const double w = f.u1[it][ix] - f.u2[it][ix];
            const auto [d1, d2] = tp.theta_partials(x);
            const double r = detail::table_derivative(big_u, f.x, f.t, it, ix, 1) +
                             tp.pair.H(tp.h * w) * (q(0) * d1 + q(1) * d2) + q.dot(tp.running(x)) +
                             tp.h * tp.theta(x) * tp.pair.H_prime(tp.h * w) *
                                 detail::table_derivative(big_u, f.x, f.t, it, ix, 0);
            worst = std::max(worst, std::abs(r));
        }
    }
    return worst;
}

/// n + 1 equally spaced points on [a, b].
inline std::vector<double> linspace(double a, double b, int n) {
    std::vector<double> out(static_cast<std::size_t>(n + 1));
    for (int k = 0; k <= n; ++k) out[static_cast<std::size_t>(k)] = k == n ? b : a + (b - a) * k / n;
    return out;
}

}  // namespace mfgraph
