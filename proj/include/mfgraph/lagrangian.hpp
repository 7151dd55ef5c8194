#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "mfgraph/error.hpp"

namespace mfgraph {

/// Running cost L and its Legendre conjugate H on one edge.
class LagrangianPair {
public:
    LagrangianPair() : LagrangianPair(make_power_impl(2.0)) {}

    double alpha() const { return alpha_; }
    double beta() const { return beta_; }
    /// Degree of homogeneity of H, or 0 for custom pairs.
    double homogeneity_degree() const { return power_ ? beta_ : 0.0; }
    bool is_power() const { return power_; }

    double L(double a) const { return l_(a); }
    double L_prime(double a) const { return lp_(a); }
    double H(double b) const { return h_(b); }
    double H_prime(double b) const { return hp_(b); }
    /// Inverse of H restricted to b >= 0.
    double H_inverse(double c) const { return hinv_(c); }

    /// Custom pair from closures. The contract (L even, strictly convex,
    /// H its conjugate) is checked only by sampling.
    static LagrangianPair custom(std::function<double(double)> l, std::function<double(double)> l_prime,
                                 std::function<double(double)> h, std::function<double(double)> h_prime,
                                 std::function<double(double)> h_inverse) {
        LagrangianPair out(0.0, 0.0, false, std::move(l), std::move(l_prime), std::move(h), std::move(h_prime),
                           std::move(h_inverse));
        for (int k = -20; k <= 20; ++k) {
            const double a = 0.25 * k;
            detail::require(std::abs(out.L(a) - out.L(-a)) <= 1e-12 * (1.0 + std::abs(out.L(a))), Errc::BadExponent,
                            "custom L is not even");
            const double r = std::abs(out.L(a) + out.H(out.L_prime(a)) - a * out.L_prime(a));
            detail::require(r <= 1e-8 * (1.0 + std::abs(out.L(a))), Errc::BadExponent,
                            "custom H is not the conjugate of L");
        }
        return out;
    }

    friend LagrangianPair make_power(double alpha);

private:
    LagrangianPair(double alpha, double beta, bool power, std::function<double(double)> l,
                   std::function<double(double)> lp, std::function<double(double)> h, std::function<double(double)> hp,
                   std::function<double(double)> hinv)
        : alpha_(alpha), beta_(beta), power_(power), l_(std::move(l)), lp_(std::move(lp)), h_(std::move(h)),
          hp_(std::move(hp)), hinv_(std::move(hinv)) {}

    static LagrangianPair make_power_impl(double alpha) {
        const double beta = alpha / (alpha - 1.0);
        auto signed_pow = [](double v, double e) {
            if (v == 0.0) return 0.0;
            return std::copysign(std::pow(std::abs(v), e), v);
        };
        return LagrangianPair(
            alpha, beta, true, [alpha](double a) { return std::pow(std::abs(a), alpha) / alpha; },
            [alpha, signed_pow](double a) { return signed_pow(a, alpha - 1.0); },
            [beta](double b) { return std::pow(std::abs(b), beta) / beta; },
            [beta, signed_pow](double b) { return signed_pow(b, beta - 1.0); },
            [beta](double c) { return c <= 0.0 ? 0.0 : std::pow(beta * c, 1.0 / beta); });
    }

    double alpha_;
    double beta_;
    bool power_;
    std::function<double(double)> l_, lp_, h_, hp_, hinv_;
};

/// L(a) = |a|^alpha / alpha, H(b) = |b|^beta / beta with 1/alpha + 1/beta = 1.
inline LagrangianPair make_power(double alpha) {
    detail::require(std::isfinite(alpha) && alpha > 1.0, Errc::BadExponent,
                    "power exponent must exceed 1, got " + std::to_string(alpha));
    return LagrangianPair::make_power_impl(alpha);
}

/// |L(a) + H(L'(a)) - a L'(a)|.
inline double legendre_residual(const LagrangianPair& pair, double a) {
    const double b = pair.L_prime(a);
    return std::abs(pair.L(a) + pair.H(b) - a * b);
}

/// One pair for every edge, or one pair per stored edge.
class EdgeLagrangians {
public:
    EdgeLagrangians() = default;
    explicit EdgeLagrangians(LagrangianPair uniform) : uniform_(std::move(uniform)) {}
    explicit EdgeLagrangians(std::vector<LagrangianPair> per_edge) : per_edge_(std::move(per_edge)) {
        detail::require(!per_edge_.empty(), Errc::DimensionMismatch, "per-edge pair list is empty");
        uniform_ = per_edge_.front();
    }

    const LagrangianPair& operator[](int e) const {
        return per_edge_.empty() ? uniform_ : per_edge_[static_cast<std::size_t>(e)];
    }
    bool uniform() const { return per_edge_.empty(); }
    std::size_t per_edge_count() const { return per_edge_.size(); }
    /// The pair shared by all edges (the first one when edge-dependent).
    const LagrangianPair& common() const { return uniform_; }

private:
    LagrangianPair uniform_;
    std::vector<LagrangianPair> per_edge_;
};

}  // namespace mfgraph
