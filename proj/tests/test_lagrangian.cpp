#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "mfgraph/lagrangian.hpp"

using namespace mfgraph;

TEST(Lagrangian, QuadraticPair) {
    const LagrangianPair p = make_power(2.0);
    EXPECT_EQ(p.beta(), 2.0);
    EXPECT_NEAR(p.H(3.0), 4.5, 1e-15);
    EXPECT_NEAR(p.H_prime(-1.3), -1.3, 1e-15);
    EXPECT_NEAR(p.H_inverse(2.0), 2.0, 1e-15);
    EXPECT_NEAR(p.L(3.0), 4.5, 1e-15);
    EXPECT_NEAR(p.H_prime(p.L_prime(3.0)), 3.0, 1e-15);
}

TEST(Lagrangian, CubicPairRoundTrip) {
    const LagrangianPair p = make_power(3.0);
    EXPECT_NEAR(p.beta(), 1.5, 1e-15);
    EXPECT_NEAR(p.H_inverse(p.H(2.0)), 2.0, 1e-14);
    EXPECT_EQ(p.H_prime(0.0), 0.0);
}

TEST(Lagrangian, BadExponent) {
    for (double a : {1.0, 0.5, -2.0, std::nan("")}) {
        try {
            make_power(a);
            FAIL();
        } catch (const Error& e) {
            EXPECT_EQ(e.code(), Errc::BadExponent);
        }
    }
}

TEST(Lagrangian, LegendreResidual) {
    EXPECT_EQ(legendre_residual(make_power(2.0), 0.0), 0.0);
    EXPECT_LE(legendre_residual(make_power(2.0), 1.7), 1e-12);
    EXPECT_LE(legendre_residual(make_power(4.0), -2.3), 1e-10);
    std::mt19937 rng(1);
    std::uniform_real_distribution<double> u(-5, 5);
    for (double alpha : {1.5, 2.0, 3.0, 4.0}) {
        const LagrangianPair p = make_power(alpha);
        for (int k = 0; k < 200; ++k) EXPECT_LE(legendre_residual(p, u(rng)), 1e-10 * std::max(1.0, p.L(5.0)));
    }
}

TEST(Lagrangian, FenchelYoungAndDuality) {
    std::mt19937 rng(2);
    std::uniform_real_distribution<double> u(-4, 4);
    for (double alpha : {1.5, 2.0, 3.0}) {
        const LagrangianPair p = make_power(alpha);
        for (int k = 0; k < 1000; ++k) {
            const double a = u(rng), b = u(rng);
            EXPECT_GE(p.L(a) + p.H(b) - a * b, -1e-12);
        }
        // H(b) = sup_a (ab - L(a)) with the maximizer a* = H'(b).
        for (int k = 0; k < 100; ++k) {
            const double b = u(rng);
            const double a = p.H_prime(b);
            EXPECT_LE(std::abs(p.H(b) - (a * b - p.L(a))), 1e-10);
            double brute = -1e300;
            const double reach = std::abs(a) + 1.0;
            for (int s = -20000; s <= 20000; ++s) {
                const double t = reach * s / 20000.0;
                brute = std::max(brute, t * b - p.L(t));
            }
            EXPECT_NEAR(brute, p.H(b), 1e-4);
        }
    }
}

TEST(Lagrangian, ShapeProperties) {
    std::mt19937 rng(4);
    std::uniform_real_distribution<double> u(0, 3);
    for (double alpha : {1.5, 2.0, 3.0}) {
        const LagrangianPair p = make_power(alpha);
        EXPECT_EQ(p.L(0.0), 0.0);
        for (int k = 0; k < 200; ++k) {
            const double b = u(rng), lam = u(rng);
            EXPECT_EQ(p.L(b), p.L(-b));
            EXPECT_EQ(p.H(b), p.H(-b));
            EXPECT_EQ(p.H_prime(b), -p.H_prime(-b));
            EXPECT_LE(p.H(b), p.H(b + 0.1));
            EXPECT_NEAR(p.H(lam * b), std::pow(lam, p.beta()) * p.H(b), 1e-10 * std::max(1.0, p.H(lam * b)));
            EXPECT_GT(0.5 * (p.L(b) + p.L(b + 1)), p.L(b + 0.5));
        }
        EXPECT_GT(p.L(100.0) / 100.0, p.L(10.0) / 10.0);
    }
}

TEST(Lagrangian, CustomPairAndPerEdge) {
    const LagrangianPair c = LagrangianPair::custom([](double a) { return a * a; }, [](double a) { return 2 * a; },
                                                    [](double b) { return b * b / 4; }, [](double b) { return b / 2; },
                                                    [](double c) { return 2 * std::sqrt(c); });
    EXPECT_FALSE(c.is_power());
    EXPECT_NEAR(c.H_inverse(c.H(3.0)), 3.0, 1e-14);
    EXPECT_THROW(LagrangianPair::custom([](double a) { return a * a; }, [](double a) { return 2 * a; },
                                        [](double b) { return b * b; }, [](double b) { return 2 * b; },
                                        [](double c) { return std::sqrt(c); }),
                 Error);
    const EdgeLagrangians per({make_power(2.0), make_power(3.0)});
    EXPECT_FALSE(per.uniform());
    EXPECT_EQ(per[1].alpha(), 3.0);
    const EdgeLagrangians uni(make_power(3.0));
    EXPECT_EQ(uni[7].alpha(), 3.0);
}
