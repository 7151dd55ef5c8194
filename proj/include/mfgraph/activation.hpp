#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <string_view>

#include "mfgraph/error.hpp"
#include "mfgraph/markov_graph.hpp"

namespace mfgraph {

enum class ActivationKind { quadratic, log_mean, arithmetic, geometric, harmonic, phi_induced, psi_phi_induced };

inline constexpr std::string_view kind_name(ActivationKind k) {
    switch (k) {
        case ActivationKind::quadratic: return "quadratic";
        case ActivationKind::log_mean: return "log_mean";
        case ActivationKind::arithmetic: return "arithmetic";
        case ActivationKind::geometric: return "geometric";
        case ActivationKind::harmonic: return "harmonic";
        case ActivationKind::phi_induced: return "phi_induced";
        case ActivationKind::psi_phi_induced: return "psi_phi_induced";
    }
    return "unknown";
}

/// Convex generator phi with its first two derivatives.
struct GeneratorPhi {
    std::function<double(double)> phi;
    std::function<double(double)> phi_prime;
    std::function<double(double)> phi_second;
};

/// Even convex dissipation psi* with psi*(0) = 0. The second derivative is
/// optional; when absent it is taken by central difference of psi*'.
struct DissipationPsiStar {
    std::function<double(double)> psi_star;
    std::function<double(double)> psi_star_prime;
    std::function<double(double)> psi_star_second;

    double second(double xi) const {
        if (psi_star_second) return psi_star_second(xi);
        const double h = 1e-5 * std::max(1.0, std::abs(xi));
        return (psi_star_prime(xi + h) - psi_star_prime(xi - h)) / (2.0 * h);
    }
};

/// phi(x) = x log x - x + 1 (relative entropy generator).
inline GeneratorPhi entropy_generator() {
    return {[](double x) { return x > 0.0 ? x * std::log(x) - x + 1.0 : 1.0; },
            [](double x) { return std::log(x); },
            [](double x) { return 1.0 / x; }};
}

/// phi(x) = x^2 / 2.
inline GeneratorPhi quadratic_generator() {
    return {[](double x) { return 0.5 * x * x; }, [](double x) { return x; }, [](double) { return 1.0; }};
}

/// psi*(xi) = xi^2 / 2, the Onsager (linear response) case.
inline DissipationPsiStar quadratic_dissipation() {
    return {[](double s) { return 0.5 * s * s; }, [](double s) { return s; }, [](double) { return 1.0; }};
}

inline DissipationPsiStar arithmetic_dissipation() {
    return {[](double s) {
                const double a = std::abs(0.5 * s);
                return 4.0 * (a + std::log1p(std::exp(-2.0 * a)) - std::log(2.0));
            },
            [](double s) { return 2.0 * std::tanh(0.5 * s); },
            [](double s) {
                const double c = 1.0 / std::cosh(0.5 * s);
                return c * c;
            }};
}

inline DissipationPsiStar geometric_dissipation() {
    return {[](double s) { return 4.0 * std::cosh(0.5 * s) - 4.0; },
            [](double s) { return 2.0 * std::sinh(0.5 * s); },
            [](double s) { return std::cosh(0.5 * s); }};
}

inline DissipationPsiStar harmonic_dissipation() {
    return {[](double s) { return std::cosh(s) - 1.0; },
            [](double s) { return std::sinh(s); },
            [](double s) { return std::cosh(s); }};
}

namespace detail {

inline constexpr double near_diagonal = 1e-7;
inline constexpr double inf = std::numeric_limits<double>::infinity();

inline bool close_to_diagonal(double x, double y) {
    return std::abs(x - y) < near_diagonal * std::max(std::abs(x), std::abs(y));
}

inline double third_derivative(const GeneratorPhi& g, double x) {
    const double h = 1e-4 * x;
    return (g.phi_second(x + h) - g.phi_second(x - h)) / (2.0 * h);
}

}  // namespace detail

/// Activation theta(x, y) with partial derivatives and, when available, the
/// generating pair (phi, psi*).
class Activation {
public:
    ActivationKind kind() const { return kind_; }
    const std::optional<GeneratorPhi>& phi() const { return phi_; }
    const std::optional<DissipationPsiStar>& psi() const { return psi_; }

    /// Property (iv): theta(x, 0) = 0.
    bool vanishes_on_boundary() const {
        return kind_ != ActivationKind::arithmetic && kind_ != ActivationKind::quadratic;
    }

    /// Kinds whose theta is concave on the positive quadrant.
    bool concave() const { return kind_ != ActivationKind::phi_induced && kind_ != ActivationKind::psi_phi_induced; }

    double operator()(double x, double y) const { return theta(x, y); }

    double theta(double x, double y) const {
        switch (kind_) {
            case ActivationKind::quadratic: return 1.0;
            case ActivationKind::log_mean: return log_mean(x, y);
            case ActivationKind::arithmetic: return 0.5 * (x + y);
            case ActivationKind::geometric: return std::sqrt(x * y);
            case ActivationKind::harmonic: return x + y > 0.0 ? 2.0 * x * y / (x + y) : 0.0;
            case ActivationKind::phi_induced: return induced(x, y);
            case ActivationKind::psi_phi_induced: return induced(x, y);
        }
        return 0.0;
    }

    /// Partial derivative in the first argument.
    double dx(double x, double y) const {
        switch (kind_) {
            case ActivationKind::quadratic: return 0.0;
            case ActivationKind::log_mean: return log_mean_dx(x, y);
            case ActivationKind::arithmetic: return 0.5;
            case ActivationKind::geometric:
                if (x > 0.0) return 0.5 * std::sqrt(y / x);
                return y > 0.0 ? detail::inf : 0.5;
            case ActivationKind::harmonic: {
                const double s = x + y;
                return s > 0.0 ? 2.0 * y * y / (s * s) : 0.5;
            }
            case ActivationKind::phi_induced: return induced_dx(x, y);
            case ActivationKind::psi_phi_induced: return induced_dx(x, y);
        }
        return 0.0;
    }

    /// Partial derivative in the second argument (symmetry of theta).
    double dy(double x, double y) const { return dx(y, x); }

    friend Activation builtin(ActivationKind kind);
    friend Activation from_phi(GeneratorPhi phi);
    friend Activation from_phi_psi(GeneratorPhi phi, DissipationPsiStar psi);

private:
    Activation(ActivationKind k, std::optional<GeneratorPhi> phi, std::optional<DissipationPsiStar> psi)
        : kind_(k), phi_(std::move(phi)), psi_(std::move(psi)) {}

    static double log_mean(double x, double y) {
        if (x <= 0.0 || y <= 0.0) return 0.0;
        if (detail::close_to_diagonal(x, y)) {
            const double m = 0.5 * (x + y);
            const double r = 0.5 * (x - y) / m;
            return m * (1.0 - r * r / 3.0);
        }
        return (x - y) / log_ratio(x, y);
    }

    /// log x - log y, through atanh when the ratio is moderate (no cancellation).
    static double log_ratio(double x, double y) {
        const double r = (x - y) / (x + y);
        return std::abs(r) < 0.5 ? 2.0 * std::atanh(r) : std::log(x) - std::log(y);
    }

    static double log_mean_dx(double x, double y) {
        if (y <= 0.0) return 0.0;
        if (x <= 0.0) return detail::inf;
        if (detail::close_to_diagonal(x, y)) {
            const double m = 0.5 * (x + y);
            const double r = 0.5 * (x - y) / m;
            return 0.5 - r / 3.0;
        }
        const double l = log_ratio(x, y);
        return (l - (x - y) / x) / (l * l);
    }

    double psi_prime(double xi) const { return psi_ ? psi_->psi_star_prime(xi) : xi; }
    double psi_second(double xi) const { return psi_ ? psi_->second(xi) : 1.0; }

    double induced(double x, double y) const {
        const GeneratorPhi& g = *phi_;
        if (detail::close_to_diagonal(x, y)) {
            const double m = 0.5 * (x + y);
            return 1.0 / (g.phi_second(m) * psi_second(0.0));
        }
        const double xi = g.phi_prime(x) - g.phi_prime(y);
        if (!std::isfinite(xi)) return 0.0;
        return (x - y) / psi_prime(xi);
    }

    double induced_dx(double x, double y) const {
        const GeneratorPhi& g = *phi_;
        if (detail::close_to_diagonal(x, y)) {
            const double m = 0.5 * (x + y);
            const double s = g.phi_second(m);
            return -detail::third_derivative(g, m) / (2.0 * s * s * psi_second(0.0));
        }
        const double xi = g.phi_prime(x) - g.phi_prime(y);
        const double pp = psi_prime(xi);
        const double d = (pp - (x - y) * psi_second(xi) * g.phi_second(x)) / (pp * pp);
        if (std::isfinite(d)) return d;
        return (x <= 0.0 && y > 0.0) ? detail::inf : 0.0;
    }

    ActivationKind kind_;
    std::optional<GeneratorPhi> phi_;
    std::optional<DissipationPsiStar> psi_;
};

/// Closed-form activation together with its generating pair.
inline Activation builtin(ActivationKind kind) {
    switch (kind) {
        case ActivationKind::quadratic: return {kind, quadratic_generator(), quadratic_dissipation()};
        case ActivationKind::log_mean: return {kind, entropy_generator(), quadratic_dissipation()};
        case ActivationKind::arithmetic: return {kind, entropy_generator(), arithmetic_dissipation()};
        case ActivationKind::geometric: return {kind, entropy_generator(), geometric_dissipation()};
        case ActivationKind::harmonic: return {kind, entropy_generator(), harmonic_dissipation()};
        default: break;
    }
    detail::fail(Errc::UnknownKind, "no closed form for kind " + std::string(kind_name(kind)));
}

inline Activation builtin(std::string_view name) {
    for (ActivationKind k : {ActivationKind::quadratic, ActivationKind::log_mean, ActivationKind::arithmetic,
                             ActivationKind::geometric, ActivationKind::harmonic})
        if (name == kind_name(k)) return builtin(k);
    detail::fail(Errc::UnknownKind, "unknown activation kind '" + std::string(name) + "'");
}

namespace detail {

inline void check_generator(const GeneratorPhi& g) {
    require(g.phi && g.phi_prime && g.phi_second, Errc::NonConvexGenerator, "generator needs phi, phi', phi''");
    for (int k = 0; k <= 90; ++k) {
        const double x = std::pow(10.0, -6.0 + k / 10.0);
        const double s = g.phi_second(x);
        require(std::isfinite(s) && s > 0.0, Errc::NonConvexGenerator,
                "phi'' is not positive at x = " + std::to_string(x));
    }
}

}  // namespace detail

/// theta(x, y) = (x - y) / (phi'(x) - phi'(y)).
inline Activation from_phi(GeneratorPhi phi) {
    detail::check_generator(phi);
    return {ActivationKind::phi_induced, std::move(phi), std::nullopt};
}

/// theta(x, y) = (x - y) / psi*'(phi'(x) - phi'(y)).
inline Activation from_phi_psi(GeneratorPhi phi, DissipationPsiStar psi) {
    detail::check_generator(phi);
    detail::require(static_cast<bool>(psi.psi_star_prime), Errc::DegenerateDissipation, "psi*' is required");
    for (int k = 0; k <= 80; ++k) {
        const double xi = std::pow(10.0, -6.0 + k / 10.0);
        for (double s : {xi, -xi}) {
            const double d = psi.psi_star_prime(s);
            detail::require(std::isfinite(d) && d * s > 0.0, Errc::DegenerateDissipation,
                            "psi*' vanishes or has the wrong sign at " + std::to_string(s));
        }
    }
    detail::require(psi.second(0.0) > 0.0, Errc::DegenerateDissipation, "psi*''(0) must be positive");
    return {ActivationKind::psi_phi_induced, std::move(phi), std::move(psi)};
}

/// theta_e(p) = theta(p_i / pi_i, p_j / pi_j) on stored edge e.
inline double theta_on_edge(const Activation& a, const MarkovGraph& g, const Vector& p, int e) {
    const Edge& ed = g.edges()[static_cast<std::size_t>(e)];
    return a.theta(p(ed.i) / g.invariant()(ed.i), p(ed.j) / g.invariant()(ed.j));
}

/// Derivatives (d theta_e / d p_i, d theta_e / d p_j) for stored edge e = (i, j).
inline std::pair<double, double> dtheta_on_edge(const Activation& a, const MarkovGraph& g, const Vector& p, int e) {
    const Edge& ed = g.edges()[static_cast<std::size_t>(e)];
    const double pi_i = g.invariant()(ed.i);
    const double pi_j = g.invariant()(ed.j);
    const double x = p(ed.i) / pi_i;
    const double y = p(ed.j) / pi_j;
    return {a.dx(x, y) / pi_i, a.dy(x, y) / pi_j};
}

/// Vector of theta_e(p) over all stored edges.
inline Vector theta_edges(const Activation& a, const MarkovGraph& g, const Vector& p) {
    Vector out(g.edge_count());
    for (int e = 0; e < g.edge_count(); ++e) out(e) = theta_on_edge(a, g, p, e);
    return out;
}

inline double theta_edge(const Activation& a, const MarkovGraph& g, const Vector& p, int i, int j) {
    const int e = g.edge_index(i, j);
    detail::require(e >= 0, Errc::NotAnEdge, "no edge between " + std::to_string(i) + " and " + std::to_string(j));
    detail::check_dim(g.size(), p.size(), "theta_edge");
    return theta_on_edge(a, g, p, e);
}

inline double theta_edge(const Activation& a, const MarkovGraph& g, const Density& p, int i, int j) {
    return theta_edge(a, g, p.values(), i, j);
}

/// d theta_ij / d p_k; zero unless k is an endpoint of the edge.
inline double dtheta_dp(const Activation& a, const MarkovGraph& g, const Vector& p, int i, int j, int k) {
    const int e = g.edge_index(i, j);
    detail::require(e >= 0, Errc::NotAnEdge, "no edge between " + std::to_string(i) + " and " + std::to_string(j));
    detail::check_dim(g.size(), p.size(), "dtheta_dp");
    const Edge& ed = g.edges()[static_cast<std::size_t>(e)];
    const auto [di, dj] = dtheta_on_edge(a, g, p, e);
    if (k == ed.i) return di;
    if (k == ed.j) return dj;
    return 0.0;
}

inline double dtheta_dp(const Activation& a, const MarkovGraph& g, const Density& p, int i, int j, int k) {
    return dtheta_dp(a, g, p.values(), i, j, k);
}

}  // namespace mfgraph
