#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "mfgraph/activation.hpp"
#include "mfgraph/error.hpp"
#include "mfgraph/lagrangian.hpp"
#include "mfgraph/markov_graph.hpp"
#include "mfgraph/mfg_problem.hpp"
#include "mfgraph/quadrature.hpp"

namespace mfgraph {

/// Two-state game in the variables x = p_1, y = Phi_1 - Phi_2.
struct TwoPointProblem {
    double h = 1.0;  // sqrt(omega_12)
    std::function<double(double)> theta;
    /// (d theta / d p_1, d theta / d p_2) at p = (x, 1 - x).
    std::function<std::pair<double, double>(double)> theta_partials;
    LagrangianPair pair;
    std::function<double(double)> F_bar;
    std::function<double(double)> F_bar_prime;
    /// F and G evaluated at p = (x, 1 - x).
    std::function<Vector(double)> running;
    std::function<Vector(double)> terminal;
    double t0 = 0.0;
    double T = 1.0;

    double theta_prime(double x) const {
        const auto [d1, d2] = theta_partials(x);
        return d1 - d2;
    }
    /// G(x) = G_1 - G_2.
    double G(double x) const {
        const Vector g = terminal(x);
        return g(0) - g(1);
    }
    double horizon() const { return T - t0; }
};

struct ReducedTrajectory {
    std::vector<double> times;
    std::vector<double> x;
    std::vector<double> y;
    std::vector<double> hamiltonian;

    std::size_t size() const { return times.size(); }
};

namespace detail {

inline Vector two_point_density(double x) {
    Vector p(2);
    p << x, 1.0 - x;
    return p;
}

/// Antiderivative of a smooth function on [0, 1] with value 0 at 0, stored
/// on a uniform grid (Simpson per cell) and evaluated by cubic Hermite
/// interpolation with the exact derivative as slopes.
class PrimitiveTable {
public:
    PrimitiveTable(std::function<double(double)> d, int cells) : d_(std::move(d)), n_(cells) {
        step_ = 1.0 / n_;
        values_.assign(static_cast<std::size_t>(n_ + 1), 0.0);
        slopes_.resize(static_cast<std::size_t>(n_ + 1));
        slopes_[0] = d_(0.0);
        for (int k = 0; k < n_; ++k) {
            const double a = k * step_;
            const double b = (k + 1) * step_;
            slopes_[static_cast<std::size_t>(k + 1)] = d_(b);
            values_[static_cast<std::size_t>(k + 1)] =
                values_[static_cast<std::size_t>(k)] +
                step_ / 6.0 * (slopes_[static_cast<std::size_t>(k)] + 4.0 * d_(0.5 * (a + b)) +
                               slopes_[static_cast<std::size_t>(k + 1)]);
        }
    }

    double operator()(double x) const {
        const double s = std::clamp(x, 0.0, 1.0) / step_;
        const int k = std::min(n_ - 1, static_cast<int>(s));
        const double u = s - k;
        const auto ku = static_cast<std::size_t>(k);
        const double h00 = (1 + 2 * u) * (1 - u) * (1 - u);
        const double h10 = u * (1 - u) * (1 - u);
        const double h01 = u * u * (3 - 2 * u);
        const double h11 = u * u * (u - 1);
        return h00 * values_[ku] + h10 * step_ * slopes_[ku] + h01 * values_[ku + 1] + h11 * step_ * slopes_[ku + 1];
    }

private:
    std::function<double(double)> d_;
    int n_;
    double step_;
    std::vector<double> values_;
    std::vector<double> slopes_;
};

}  // namespace detail

/// Reduction of a two-state problem. F_bar uses the running potential when
/// there is one (shifted so that F_bar(0) = 0), otherwise a tabulated
/// antiderivative of F_1 - F_2.
inline TwoPointProblem reduce(const MFGProblem& prob) {
    detail::require(prob.size() == 2, Errc::WrongStateCount,
                    "two-point reduction needs 2 states, got " + std::to_string(prob.size()));
    validate_problem(prob);
    const MarkovGraph g = prob.graph;
    const Activation a = prob.activation;
    TwoPointProblem tp;
    tp.h = g.edges()[0].sqrt_weight;
    tp.theta = [g, a](double x) { return theta_on_edge(a, g, detail::two_point_density(x), 0); };
    tp.theta_partials = [g, a](double x) { return dtheta_on_edge(a, g, detail::two_point_density(x), 0); };
    tp.pair = prob.lagrangian[0];
    const PayoffField running = prob.running;
    const PayoffField terminal = prob.terminal;
    tp.running = [running](double x) { return running.field(detail::two_point_density(x)); };
    tp.terminal = [terminal](double x) { return terminal.field(detail::two_point_density(x)); };
    tp.F_bar_prime = [running](double x) {
        const Vector f = running.field(detail::two_point_density(x));
        return f(0) - f(1);
    };
    if (running.has_potential()) {
        const double base = running.potential(detail::two_point_density(0.0));
        tp.F_bar = [running, base](double x) { return running.potential(detail::two_point_density(x)) - base; };
    } else {
        auto table = std::make_shared<detail::PrimitiveTable>(tp.F_bar_prime, 4096);
        tp.F_bar = [table](double x) { return (*table)(x); };
    }
    tp.t0 = prob.t0;
    tp.T = prob.T;
    return tp;
}

/// H(h y) theta(x) + F_bar(x).
inline double reduced_hamiltonian(const TwoPointProblem& tp, double x, double y) {
    detail::require(x > 0.0 && x < 1.0, Errc::OutOfDomain, "x = " + std::to_string(x) + " is outside (0, 1)");
    return tp.pair.H(tp.h * y) * tp.theta(x) + tp.F_bar(x);
}

namespace detail {

inline std::pair<double, double> reduced_rhs(const TwoPointProblem& tp, double x, double y) {
    const double hy = tp.h * y;
    return {tp.h * tp.theta(x) * tp.pair.H_prime(hy), -tp.pair.H(hy) * tp.theta_prime(x) - tp.F_bar_prime(x)};
}

inline void require_open_unit(double x, double s) {
    require(x > 0.0 && x < 1.0, Errc::OutOfDomain,
            "x left (0, 1) at s = " + std::to_string(s) + " (x = " + std::to_string(x) + ")");
}

}  // namespace detail

/// Implicit midpoint for dx/ds = h theta H'(h y), dy/ds = -H(h y) theta' - F_bar'
/// from (x0, y0) at tp.t0 to t_end, in uniform steps no longer than dt.
inline ReducedTrajectory integrate_reduced(const TwoPointProblem& tp, double x0, double y0, double t_end, double dt) {
    detail::require(dt > 0.0 && t_end >= tp.t0, Errc::InvalidArgument, "need dt > 0 and t_end >= t0");
    detail::require_open_unit(x0, tp.t0);
    const long steps = std::max(1L, std::lround(std::ceil((t_end - tp.t0) / dt - 1e-9)));
    const double step = (t_end - tp.t0) / steps;
    ReducedTrajectory out;
    out.times.reserve(static_cast<std::size_t>(steps + 1));
    double x = x0, y = y0;
    auto record = [&](double s) {
        out.times.push_back(s);
        out.x.push_back(x);
        out.y.push_back(y);
        out.hamiltonian.push_back(reduced_hamiltonian(tp, x, y));
    };
    record(tp.t0);
    for (long k = 1; k <= steps; ++k) {
        const double s = k == steps ? t_end : tp.t0 + k * step;
        const auto [fx, fy] = detail::reduced_rhs(tp, x, y);
        double xn = x + step * fx, yn = y + step * fy;
        bool done = false;
        for (int it = 0; it < 50 && !done; ++it) {
            const double xm = 0.5 * (x + xn);
            detail::require_open_unit(xm, s);
            const auto [gx, gy] = detail::reduced_rhs(tp, xm, 0.5 * (y + yn));
            const double nx = x + step * gx, ny = y + step * gy;
            const double change = std::max(std::abs(nx - xn), std::abs(ny - yn));
            done = change <= 1e-14 * (1.0 + std::abs(nx) + std::abs(ny));
            xn = nx;
            yn = ny;
            detail::require(std::isfinite(xn) && std::isfinite(yn), Errc::MidpointDivergence,
                            "midpoint iterate is not finite at s = " + std::to_string(s));
        }
        detail::require(done, Errc::MidpointDivergence,
                        "midpoint fixed point did not settle in 50 iterations at s = " + std::to_string(s));
        x = xn;
        y = yn;
        detail::require_open_unit(x, s);
        record(s);
    }
    return out;
}

/// W_alpha between (p0, 1 - p0) and (p1, 1 - p1): (1/h) |int theta^(-1/beta)|.
inline double wasserstein_alpha(const TwoPointProblem& tp, double p0, double p1, double alpha,
                                QuadratureOptions opts = {}) {
    detail::require(p0 >= 0.0 && p0 <= 1.0 && p1 >= 0.0 && p1 <= 1.0, Errc::OutOfDomain,
                    "endpoints must lie in [0, 1]");
    detail::require(alpha > 1.0, Errc::BadExponent, "alpha must exceed 1");
    if (p0 == p1) return 0.0;
    const double beta = alpha / (alpha - 1.0);
    const double a = std::min(p0, p1), b = std::max(p0, p1);
    auto near_edge = [](double v) { return v <= 1e-8 || v >= 1.0 - 1e-8; };
    const bool lo = near_edge(a), hi = near_edge(b);
    const Singular where = lo && hi ? Singular::both : lo ? Singular::lower : hi ? Singular::upper : Singular::none;
    const std::function<double(double)> f = [&](double x) { return std::pow(tp.theta(x), -1.0 / beta); };
    return integrate_substituted(f, a, b, where, opts) / tp.h;
}

struct ShootingOptions {
    double tol = 1e-10;
    int steps = 256;  // trajectory samples
    /// Scan x_T for further roots of the shooting system.
    bool scan_roots = true;
};

struct PlanningResult {
    double H0 = 0.0;
    ReducedTrajectory trajectory;
    int iterations = 0;
    double time_residual = 0.0;
};

struct GameResult {
    double x_T = 0.0;
    double H0 = 0.0;
    ReducedTrajectory trajectory;
    int iterations = 0;
    double time_residual = 0.0;      // int dx / f - (T - t)
    double terminal_residual = 0.0;  // theta(x_T) H(h G(x_T)) + F_bar(x_T) - H0
    std::string method;              // newton, bracket or stationary
    int roots_found = 1;             // sign changes seen by the scan, if run
};

namespace detail {

/// Largest F_bar on [a, b]: dense sampling then golden-section refinement.
inline double max_on_interval(const std::function<double(double)>& f, double a, double b) {
    if (a > b) std::swap(a, b);
    const int samples = 64;
    double best = f(a), arg = a;
    for (int k = 1; k <= samples; ++k) {
        const double x = a + (b - a) * k / samples;
        const double v = f(x);
        if (v > best) best = v, arg = x;
    }
    double lo = std::max(a, arg - (b - a) / samples), hi = std::min(b, arg + (b - a) / samples);
    const double r = 0.5 * (std::sqrt(5.0) - 1.0);
    double c = hi - r * (hi - lo), d = lo + r * (hi - lo);
    double fc = f(c), fd = f(d);
    for (int it = 0; it < 80 && hi - lo > 1e-13; ++it) {
        if (fc > fd) {
            hi = d, d = c, fd = fc;
            c = hi - r * (hi - lo), fc = f(c);
        } else {
            lo = c, c = d, fc = fd;
            d = lo + r * (hi - lo), fd = f(d);
        }
    }
    return std::max({best, fc, fd});
}

/// Speed at x given the kinetic part H0 - F_bar(x).
inline double speed_from_gap(const TwoPointProblem& tp, double x, double gap) {
    const double th = tp.theta(x);
    const double z = gap / th;
    if (!(z >= 0.0)) return std::numeric_limits<double>::quiet_NaN();
    return tp.h * th * tp.pair.H_prime(tp.pair.H_inverse(z));
}

/// Speed |f(x; H0)| = h theta(x) H'(H^-1((H0 - F_bar(x)) / theta(x))).
inline double speed(const TwoPointProblem& tp, double x, double h0) {
    return speed_from_gap(tp, x, h0 - tp.F_bar(x));
}

/// H0 - F_bar(x) anchored at the nearer of a and b. Within 1e-6 of the anchor
/// the increment of F_bar is a Gauss-Legendre integral of F_bar', which keeps
/// relative accuracy where the direct difference cancels (turning points).
inline double anchored_gap(const TwoPointProblem& tp, double x, double h0, double a, double b) {
    const double e = std::abs(x - a) <= std::abs(x - b) ? a : b;
    const double d = e - x;
    if (std::abs(d) > 1e-6) return h0 - tp.F_bar(x);
    const double c = std::sqrt(0.6);
    const double rise = d / 18.0 *
                        (5.0 * tp.F_bar_prime(x + 0.5 * (1.0 - c) * d) + 8.0 * tp.F_bar_prime(x + 0.5 * d) +
                         5.0 * tp.F_bar_prime(x + 0.5 * (1.0 + c) * d));
    return (h0 - tp.F_bar(e)) + rise;
}

/// y(x; H0) on the branch moving in direction sgn.
inline double branch_y(const TwoPointProblem& tp, double x, double h0, double sgn) {
    const double z = std::max(0.0, (h0 - tp.F_bar(x)) / tp.theta(x));
    return sgn * tp.pair.H_inverse(z) / tp.h;
}

/// Travel time int_a^b dx / |f(x; H0)|.
inline double travel_time(const TwoPointProblem& tp, double a, double b, double h0, double tol) {
    if (a == b) return 0.0;
    const std::function<double(double)> g = [&](double x) {
        return 1.0 / speed_from_gap(tp, x, anchored_gap(tp, x, h0, a, b));
    };
    QuadratureOptions q;
    q.abs_tol = std::max(1e-14, 0.1 * tol);
    try {
        return std::abs(integrate_substituted(g, std::min(a, b), std::max(a, b), Singular::both, q));
    } catch (const Error& e) {
        // Close to a maximum of F_bar, H0 - F_bar(x) loses digits to
        // cancellation and the integrand turns noisy; retry at a tolerance
        // above that noise.
        if (e.code() != Errc::QuadratureFailure || q.abs_tol >= 1e-8) throw;
        q.abs_tol = 1e-8;
        return std::abs(integrate_substituted(g, std::min(a, b), std::max(a, b), Singular::both, q));
    }
}

/// Monotone trajectory from a to b with first integral H0 over [t0, t0 + duration].
inline ReducedTrajectory monotone_trajectory(const TwoPointProblem& tp, double a, double b, double h0, double t0,
                                             double duration, int steps, double tol) {
    const double sgn = b > a ? 1.0 : -1.0;
    ReducedTrajectory out;
    double x = a;
    for (int k = 0; k <= steps; ++k) {
        if (k == steps) {
            x = b;
        } else if (k > 0) {
            // Advance x so that the travel time from the previous node is dt.
            const double dt = duration / steps;
            double lo = x, hi = b, cur = x + sgn * std::min(std::abs(b - x), dt * speed(tp, x, h0));
            for (int it = 0; it < 200; ++it) {
                if (!(sgn * (cur - lo) > 0.0 && sgn * (hi - cur) > 0.0)) cur = 0.5 * (lo + hi);
                const double r = travel_time(tp, x, cur, h0, tol) - dt;
                if (std::abs(r) <= tol) break;
                if (r > 0.0) hi = cur;
                else lo = cur;
                const double next = cur - r * speed(tp, cur, h0) * sgn;
                cur = std::isfinite(next) ? next : 0.5 * (lo + hi);
                if (std::abs(hi - lo) <= 1e-15) break;
            }
            x = cur;
        }
        const double y = branch_y(tp, x, h0, sgn);
        out.times.push_back(k == steps ? t0 + duration : t0 + duration * k / steps);
        out.x.push_back(x);
        out.y.push_back(y);
        out.hamiltonian.push_back(tp.pair.H(tp.h * y) * tp.theta(x) + tp.F_bar(x));
    }
    return out;
}

inline ReducedTrajectory stationary_trajectory(const TwoPointProblem& tp, double x, double t0, double duration,
                                               int steps) {
    ReducedTrajectory out;
    for (int k = 0; k <= steps; ++k) {
        out.times.push_back(k == steps ? t0 + duration : t0 + duration * k / steps);
        out.x.push_back(x);
        out.y.push_back(0.0);
        out.hamiltonian.push_back(tp.F_bar(x));
    }
    return out;
}

}  // namespace detail

/// Prescribed endpoints: find H0 with int_{p0}^{p1} dx / |f(x; H0)| = T - t by
/// safeguarded Newton in log(H0 - max F_bar), bisection as fallback.
inline PlanningResult solve_planning(const TwoPointProblem& tp, double p0, double p1, double T_minus_t,
                                     ShootingOptions opts = {}) {
    detail::require(p0 > 0.0 && p0 < 1.0 && p1 > 0.0 && p1 < 1.0, Errc::OutOfDomain, "endpoints must lie in (0, 1)");
    detail::require(p0 != p1, Errc::InvalidArgument, "planning needs distinct endpoints");
    detail::require(T_minus_t > 0.0, Errc::InvalidArgument, "T - t must be positive");
    const double top = detail::max_on_interval(tp.F_bar, p0, p1);
    const double scale = std::max(1.0, std::abs(top));
    auto time_at = [&](double s) { return detail::travel_time(tp, p0, p1, top + std::exp(s), opts.tol); };

    // Lower end of the bracket: move H0 towards max F_bar until the travel
    // time exceeds T - t. Offsets below about 1e-9 are not resolvable.
    double s_lo = std::log(1e-3 * scale);
    double r_lo = time_at(s_lo) - T_minus_t;
    while (r_lo < 0.0 && s_lo > std::log(1e-9 * scale)) {
        s_lo -= 2.0;
        r_lo = time_at(s_lo) - T_minus_t;
    }
    if (r_lo < 0.0)
        detail::fail(Errc::NoMonotonePath, "no monotone path reaches p1 in time: even at the lowest admissible H0 "
                                           "the travel time is " +
                                               std::to_string(r_lo + T_minus_t));
    double s_hi = std::max(std::log(scale), s_lo + 1.0);
    double r_hi = time_at(s_hi) - T_minus_t;
    while (r_hi > 0.0) {
        s_hi += 2.0;
        detail::require(s_hi < std::log(1e12 * scale), Errc::NewtonFailure, "H0 bracket exceeds 1e12");
        r_hi = time_at(s_hi) - T_minus_t;
    }
    double s = 0.5 * (s_lo + s_hi);
    double r = time_at(s) - T_minus_t;
    int it = 0;
    for (; it < 200 && std::abs(r) > opts.tol; ++it) {
        if (r > 0.0) s_lo = s;
        else s_hi = s;
        const double ds = 1e-6 * std::max(1.0, std::abs(s));
        const double slope = (time_at(s + ds) - time_at(s - ds)) / (2.0 * ds);
        double next = s - r / slope;
        if (!std::isfinite(next) || next <= s_lo || next >= s_hi) next = 0.5 * (s_lo + s_hi);
        s = next;
        r = time_at(s) - T_minus_t;
        if (s_hi - s_lo <= 1e-15 * std::max(1.0, std::abs(s))) break;
    }
    detail::require(std::abs(r) <= opts.tol, Errc::NewtonFailure,
                    "time equation residual " + std::to_string(r) + " after " + std::to_string(it) + " iterations");
    PlanningResult out;
    out.H0 = top + std::exp(s);
    out.iterations = it;
    out.time_residual = r;
    out.trajectory = detail::monotone_trajectory(tp, p0, p1, out.H0, tp.t0, T_minus_t, opts.steps, opts.tol);
    return out;
}

namespace detail {

/// Residuals of the shooting system at (H0, x_T); false when the point is
/// outside the admissible box.
inline bool game_residuals(const TwoPointProblem& tp, double p0, double duration, double h0, double x_t, double tol,
                           double& r1, double& r2) {
    if (!(x_t >= 1e-8 && x_t <= 1.0 - 1e-8) || !(h0 <= 1e6) || x_t == p0) return false;
    const double top = max_on_interval(tp.F_bar, p0, x_t);
    if (!(h0 > top)) return false;
    try {
        r1 = travel_time(tp, p0, x_t, h0, tol) - duration;
    } catch (const Error&) {
        return false;
    }
    r2 = tp.theta(x_t) * tp.pair.H(tp.h * tp.G(x_t)) + tp.F_bar(x_t) - h0;
    return std::isfinite(r1) && std::isfinite(r2);
}

/// Terminal first integral implied by x_T.
inline double terminal_energy(const TwoPointProblem& tp, double x_t) {
    return tp.theta(x_t) * tp.pair.H(tp.h * tp.G(x_t)) + tp.F_bar(x_t);
}

/// One-dimensional form: R(x_T) = travel time at H0(x_T) minus T - t. NaN
/// where the branch is inconsistent (wrong direction or H0 below F_bar).
inline double reduced_shooting(const TwoPointProblem& tp, double p0, double duration, double x_t, double tol) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    if (x_t == p0) return -duration;
    const double g = tp.G(x_t);
    if (g * (x_t - p0) < 0.0) return nan;
    const double h0 = terminal_energy(tp, x_t);
    const double top = max_on_interval(tp.F_bar, p0, x_t);
    if (!(h0 >= top)) return nan;
    try {
        return travel_time(tp, p0, x_t, h0, tol) - duration;
    } catch (const Error&) {
        return nan;
    }
}

/// Roots of reduced_shooting bracketed on a grid on both sides of p0,
/// ordered by distance from p0.
inline std::vector<std::pair<double, double>> shooting_brackets(const TwoPointProblem& tp, double p0, double duration,
                                                                double tol) {
    std::vector<std::pair<double, double>> out;
    const int samples = 120;
    for (double end : {1.0 - 1e-8, 1e-8}) {
        double prev_x = p0, prev_r = -duration;
        for (int k = 1; k <= samples; ++k) {
            const double u = static_cast<double>(k) / samples;
            const double x = p0 + (end - p0) * u * u;
            const double r = reduced_shooting(tp, p0, duration, x, tol);
            if (std::isfinite(r) && std::isfinite(prev_r) && (r >= 0.0) != (prev_r >= 0.0))
                out.emplace_back(prev_x, x);
            prev_x = x;
            prev_r = r;
        }
    }
    std::sort(out.begin(), out.end(),
              [p0](const auto& a, const auto& b) { return std::abs(a.first - p0) < std::abs(b.first - p0); });
    return out;
}

}  // namespace detail

/// Potential game from x = p0 over T - t: solve for (x_T, H0) with
///   int_{p0}^{x_T} dx / |f(x; H0)| = T - t,
///   theta(x_T) H(h G(x_T)) + F_bar(x_T) = H0,
/// by damped Newton with a finite-difference Jacobian; a bracketed search in
/// x_T is the fallback.
inline GameResult solve_potential_game(const TwoPointProblem& tp, double p0, double T_minus_t,
                                       ShootingOptions opts = {}) {
    detail::require(p0 > 0.0 && p0 < 1.0, Errc::OutOfDomain, "p0 must lie in (0, 1)");
    detail::require(T_minus_t > 0.0, Errc::InvalidArgument, "T - t must be positive");
    GameResult out;
    const double tol = opts.tol;
    const double g0 = tp.G(p0);
    const double slope0 = tp.F_bar_prime(p0);
    if (std::abs(g0) <= 1e-14 && std::abs(slope0) <= 1e-14) {
        out.x_T = p0;
        out.H0 = tp.F_bar(p0);
        out.method = "stationary";
        out.trajectory = detail::stationary_trajectory(tp, p0, tp.t0, T_minus_t, opts.steps);
        return out;
    }

    // Initial guess: explicit Euler of the reduced system from y = G(p0).
    double xg = p0, yg = g0;
    {
        const int n = 200;
        const double dt = T_minus_t / n;
        for (int k = 0; k < n; ++k) {
            const auto [fx, fy] = detail::reduced_rhs(tp, xg, yg);
            if (!std::isfinite(fx) || !std::isfinite(fy)) break;
            xg = std::clamp(xg + dt * fx, 1e-6, 1.0 - 1e-6);
            yg += dt * fy;
        }
    }
    double x_t = xg;
    double h0 = detail::terminal_energy(tp, x_t);
    if (x_t != p0) {
        const double top = detail::max_on_interval(tp.F_bar, p0, x_t);
        if (!(h0 > top)) h0 = top + 1e-6 * std::max(1.0, std::abs(top));
    }

    double r1 = 0.0, r2 = 0.0;
    bool ok = detail::game_residuals(tp, p0, T_minus_t, h0, x_t, tol, r1, r2);
    int it = 0;
    bool converged = false;
    for (; ok && it < 100; ++it) {
        if (std::abs(r1) <= tol && std::abs(r2) <= tol) {
            converged = true;
            break;
        }
        const double top = detail::max_on_interval(tp.F_bar, p0, x_t);
        const double dh = 1e-7 * std::max(h0 - top, 1e-12);
        const double dx = -1e-7 * std::max(std::abs(x_t - p0), 1e-12) * (x_t > p0 ? 1.0 : -1.0);
        double a1, a2, b1, b2;
        if (!detail::game_residuals(tp, p0, T_minus_t, h0 + dh, x_t, tol, a1, a2) ||
            !detail::game_residuals(tp, p0, T_minus_t, h0, x_t + dx, tol, b1, b2))
            break;
        const double j11 = (a1 - r1) / dh, j21 = (a2 - r2) / dh;
        const double j12 = (b1 - r1) / dx, j22 = (b2 - r2) / dx;
        const double det = j11 * j22 - j12 * j21;
        if (!std::isfinite(det) || det == 0.0) break;
        const double step_h = -(j22 * r1 - j12 * r2) / det;
        const double step_x = -(-j21 * r1 + j11 * r2) / det;
        const double merit = r1 * r1 + r2 * r2;
        double lambda = 1.0;
        bool accepted = false;
        for (int halving = 0; halving <= 30; ++halving, lambda *= 0.5) {
            double n1, n2;
            const double nh = h0 + lambda * step_h, nx = x_t + lambda * step_x;
            if (detail::game_residuals(tp, p0, T_minus_t, nh, nx, tol, n1, n2) && n1 * n1 + n2 * n2 < merit) {
                h0 = nh, x_t = nx, r1 = n1, r2 = n2;
                accepted = true;
                break;
            }
        }
        if (!accepted) break;
    }
    const bool branch_ok = converged && tp.G(x_t) * (x_t - p0) >= -tol;
    std::vector<std::pair<double, double>> brackets;
    if (opts.scan_roots || !branch_ok) brackets = detail::shooting_brackets(tp, p0, T_minus_t, tol);

    if (branch_ok) {
        out.method = "newton";
    } else {
        detail::require(!brackets.empty(), Errc::NewtonFailure,
                        "shooting failed: Newton stopped at x_T = " + std::to_string(x_t) + ", H0 = " +
                            std::to_string(h0) + " with residuals (" + std::to_string(r1) + ", " +
                            std::to_string(r2) + ") and no bracketed root was found");
        auto [lo, hi] = brackets.front();
        double rlo = detail::reduced_shooting(tp, p0, T_minus_t, lo, tol);
        double mid = 0.5 * (lo + hi);
        double rm = rlo;
        for (int k = 0; k < 200; ++k, ++it) {
            mid = 0.5 * (lo + hi);
            rm = detail::reduced_shooting(tp, p0, T_minus_t, mid, tol);
            if (!std::isfinite(rm)) break;
            if (std::abs(rm) <= tol || std::abs(hi - lo) <= 1e-15) break;
            if ((rm >= 0.0) == (rlo >= 0.0)) lo = mid, rlo = rm;
            else hi = mid;
        }
        detail::require(std::isfinite(rm) && std::abs(rm) <= tol, Errc::NewtonFailure,
                        "bracketed search for x_T stalled with residual " + std::to_string(rm));
        x_t = mid;
        h0 = detail::terminal_energy(tp, x_t);
        r1 = rm;
        r2 = 0.0;
        out.method = "bracket";
    }
    if (!brackets.empty()) out.roots_found = static_cast<int>(brackets.size());
    out.x_T = x_t;
    out.H0 = h0;
    out.iterations = it;
    out.time_residual = r1;
    out.terminal_residual = r2;
    out.trajectory = detail::monotone_trajectory(tp, p0, x_t, h0, tp.t0, T_minus_t, opts.steps, tol);
    return out;
}

/// Phi_1 and Phi_2 along a trajectory: Phi_i(T) = G_i(x_T) and
/// dPhi_i/ds = -(H(h y) d theta / d p_i + F_i), integrated backward by the
/// trapezoid rule.
inline std::pair<std::vector<double>, std::vector<double>> characteristic_potentials(const TwoPointProblem& tp,
                                                                                     const ReducedTrajectory& tr) {
    const std::size_t n = tr.size();
    std::vector<double> phi1(n), phi2(n);
    auto source = [&](std::size_t k) {
        const auto [d1, d2] = tp.theta_partials(tr.x[k]);
        const double hv = tp.pair.H(tp.h * tr.y[k]);
        const Vector f = tp.running(tr.x[k]);
        return std::pair<double, double>{hv * d1 + f(0), hv * d2 + f(1)};
    };
    const Vector g = tp.terminal(tr.x[n - 1]);
    phi1[n - 1] = g(0);
    phi2[n - 1] = g(1);
    auto next = source(n - 1);
    for (std::size_t k = n - 1; k-- > 0;) {
        const auto cur = source(k);
        const double ds = tr.times[k + 1] - tr.times[k];
        phi1[k] = phi1[k + 1] + 0.5 * ds * (cur.first + next.first);
        phi2[k] = phi2[k + 1] + 0.5 * ds * (cur.second + next.second);
        next = cur;
    }
    return {std::move(phi1), std::move(phi2)};
}

/// Lift to the two-state problem: p = (x, 1 - x) and Phi from
/// characteristic_potentials.
inline MFGSolution lift_trajectory(const TwoPointProblem& tp, const ReducedTrajectory& tr) {
    const auto [phi1, phi2] = characteristic_potentials(tp, tr);
    MFGSolution sol;
    sol.times = tr.times;
    for (std::size_t k = 0; k < tr.size(); ++k) {
        sol.p.push_back(detail::two_point_density(tr.x[k]));
        Vector phi(2);
        phi << phi1[k], phi2[k];
        sol.phi.push_back(phi);
    }
    return sol;
}

}  // namespace mfgraph
