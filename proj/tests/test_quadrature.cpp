#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "mfgraph/quadrature.hpp"

using namespace mfgraph;

TEST(Quadrature, PolynomialAndReversedLimits) {
    const auto sq = [](double x) { return x * x; };
    EXPECT_NEAR(integrate(sq, 0.0, 1.0), 1.0 / 3.0, 1e-12);
    EXPECT_NEAR(integrate(sq, 1.0, 0.0), -1.0 / 3.0, 1e-12);
    EXPECT_EQ(integrate(sq, 0.4, 0.4), 0.0);
    EXPECT_NEAR(integrate([](double x) { return std::exp(x); }, 0.0, 2.0), std::exp(2.0) - 1.0, 1e-10);
}

TEST(Quadrature, EndpointSingularities) {
    const auto inv_sqrt = [](double x) { return 1.0 / std::sqrt(x); };
    EXPECT_NEAR(integrate_substituted(inv_sqrt, 0.0, 1.0, Singular::lower), 2.0, 1e-9);
    const auto upper = [](double x) { return 1.0 / std::sqrt(1.0 - x); };
    EXPECT_NEAR(integrate_substituted(upper, 0.0, 1.0, Singular::upper), 2.0, 1e-9);
    const auto arcsine = [](double x) { return 1.0 / std::sqrt(x * (1.0 - x)); };
    EXPECT_NEAR(integrate_substituted(arcsine, 0.0, 1.0, Singular::both), std::numbers::pi, 1e-8);
    EXPECT_NEAR(integrate_substituted([](double) { return 1.0; }, 0.2, 0.8, Singular::both), 0.6, 1e-14);
}

TEST(Quadrature, NonIntegrableFails) {
    try {
        integrate_substituted([](double x) { return 1.0 / x; }, 0.0, 1.0, Singular::lower);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::QuadratureFailure);
    }
}
