#pragma once

#include <cmath>
#include <functional>
#include <string>

#include "mfgraph/error.hpp"

namespace mfgraph {

struct QuadratureOptions {
    double abs_tol = 1e-10;
    long max_intervals = 100000;
};

/// Where an integrand may blow up or lose smoothness.
enum class Singular { none, lower, upper, both };

namespace detail {

struct SimpsonState {
    const std::function<double(double)>* f;
    long intervals = 0;
    long max_intervals = 0;
};

inline double simpson_rec(SimpsonState& st, double a, double b, double fa, double fm, double fb, double whole,
                          double tol, int depth) {
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m);
    const double rm = 0.5 * (m + b);
    const double flm = (*st.f)(lm);
    const double frm = (*st.f)(rm);
    const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    const double delta = left + right - whole;
    ++st.intervals;
    if (!std::isfinite(delta))
        fail(Errc::QuadratureFailure, "integrand is not finite near x = " + std::to_string(m));
    if (std::abs(delta) <= 15.0 * tol || depth <= 0 || m <= a || m >= b) return left + right + delta / 15.0;
    if (st.intervals > st.max_intervals) fail(Errc::QuadratureFailure, "interval cap reached");
    return simpson_rec(st, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
           simpson_rec(st, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

/// Value at an endpoint; a non-finite value is replaced by evaluating a
/// little inside the interval.
inline double endpoint_value(const std::function<double(double)>& f, double at, double toward) {
    double v = f(at);
    double step = 1e-12 * (toward - at);
    for (int k = 0; k < 40 && !std::isfinite(v); ++k, step *= 4.0) v = f(at + step);
    require(std::isfinite(v), Errc::QuadratureFailure, "integrand is not finite at x = " + std::to_string(at));
    return v;
}

}  // namespace detail

/// Adaptive Simpson on [a, b] (any order of a and b).
inline double integrate(const std::function<double(double)>& f, double a, double b, QuadratureOptions opts = {}) {
    if (a == b) return 0.0;
    detail::SimpsonState st{&f, 0, opts.max_intervals};
    const double fa = detail::endpoint_value(f, a, b);
    const double fb = detail::endpoint_value(f, b, a);
    const double fm = f(0.5 * (a + b));
    const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    // The tolerance refers to the absolute error of the final sum.
    return detail::simpson_rec(st, a, b, fa, fm, fb, whole, opts.abs_tol, 200);
}

/// Integral over [a, b] after a change of variables that flattens the
/// integrand near the flagged endpoints: x = a + (b - a) u^2 for a lower
/// singularity, the mirror image for an upper one, and the smoothstep
/// 3u^2 - 2u^3 for both. Where the mapped point rounds onto a singular
/// endpoint, the nearest interior double and its preimage are used instead.
inline double integrate_substituted(const std::function<double(double)>& f, double a, double b, Singular where,
                                    QuadratureOptions opts = {}) {
    if (a == b || where == Singular::none) return integrate(f, a, b, opts);
    const double w = b - a;
    std::function<double(double)> g;
    switch (where) {
        case Singular::lower:
            g = [&](double u) {
                double x = a + w * u * u;
                if (x == a && u > 0.0) {
                    x = std::nextafter(a, b);
                    u = std::sqrt((x - a) / w);
                }
                return f(x) * 2.0 * w * u;
            };
            break;
        case Singular::upper:
            g = [&](double u) {
                double x = b - w * u * u;
                if (x == b && u > 0.0) {
                    x = std::nextafter(b, a);
                    u = std::sqrt((b - x) / w);
                }
                return f(x) * 2.0 * w * u;
            };
            break;
        default:
            g = [&](double u) {
                double x = a + w * u * u * (3.0 - 2.0 * u);
                double v = 1.0 - u;
                if (x == a && u > 0.0) {
                    x = std::nextafter(a, b);
                    u = std::sqrt((x - a) / (3.0 * w));
                    v = 1.0 - u;
                } else if (x == b && u < 1.0) {
                    x = std::nextafter(b, a);
                    v = std::sqrt((b - x) / (3.0 * w));
                    u = 1.0 - v;
                }
                return f(x) * 6.0 * w * u * v;
            };
            break;
    }
    return integrate(g, 0.0, 1.0, opts);
}

}  // namespace mfgraph
