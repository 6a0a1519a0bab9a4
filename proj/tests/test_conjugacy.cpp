#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <vector>

#include "cglmm/conjugacy.hpp"
#include "cglmm/family.hpp"

using namespace cglmm;

TEST_CASE("solution sets per family") {
    SECTION("poisson null transform is the baseline set") {
        auto t = CovariateTransform::linear(Family::poisson, {0.0, 0.0});
        const std::vector<double> x{1.3, -0.7};
        const auto v = solution_set(t).at(x);
        CHECK(v.p == 1.0);
        CHECK(v.q == 0.0);
        CHECK(v.r == 0.0);
        CHECK(v.s == 0.0);
        CHECK(v.t == 1.0);
        CHECK(v.u == 0.0);
    }
    SECTION("gaussian random-intercept set") {
        auto t = CovariateTransform::linear(Family::gaussian, {0.5});
        const std::vector<double> x{2.0};
        const auto v = solution_set(t).at(x);
        CHECK(v.p == 1.0);
        CHECK(v.q == 0.0);
        CHECK(v.r == 1.0);
        CHECK(v.s == 1.0);
        CHECK(v.t == 1.0);
        CHECK(v.u == 0.5);
    }
    SECTION("binomial transforms are impossible") {
        CHECK_THROWS_AS(CovariateTransform::linear(Family::binomial, {0.5}),
                        UnitCovariateError);
        CHECK_THROWS_AS(CovariateTransform::linear(Family::binomial, {}), UnitCovariateError);
    }
}

TEST_CASE("baseline constraints checked for custom transforms") {
    CHECK_THROWS_AS(CovariateTransform::custom(Family::poisson, 1,
                                               [](std::span<const double>) { return 0.4; }),
                    ConfigError);
    CHECK_THROWS_AS(CovariateTransform::custom(Family::gamma, 1,
                                               [](std::span<const double>) { return 0.2; }),
                    ConfigError);
    CHECK_NOTHROW(CovariateTransform::custom(Family::gamma, 1,
                                             [](std::span<const double> x) {
                                                 return std::exp(2.0 * x[0]);
                                             }));
}

TEST_CASE("verify_identity on valid sets") {
    SECTION("poisson exponent law") {
        auto t = CovariateTransform::linear(Family::poisson, {1.3});
        const std::vector<double> x{1.0};
        const double res = verify_identity(FamilyKernel::poisson(), solution_set(t), x, -0.4);
        CHECK(std::abs(res) < 1e-12);
    }
    SECTION("gamma logarithm law") {
        auto t = CovariateTransform::linear(Family::gamma, {std::log(2.0)});
        const std::vector<double> x{1.0};
        const double res = verify_identity(FamilyKernel::gamma(1.0), solution_set(t), x, -1.0);
        CHECK(std::abs(res) < 1e-12);
    }
    SECTION("perturbed binomial candidate has a visible residual") {
        auto cand = SolutionSet::custom(
            [](std::span<const double>) { return 1.0; }, [](std::span<const double>) { return 0.0; },
            [](std::span<const double>) { return 0.7; }, [](std::span<const double>) { return 0.0; },
            [](std::span<const double>) { return 1.0; }, [](std::span<const double>) { return 0.0; });
        const std::vector<double> x{1.0};
        const double res = verify_identity(FamilyKernel::binomial(1), cand, x, 0.0);
        CHECK(res == Catch::Approx(log1pexp(0.7) - std::log(2.0)));
        CHECK(std::abs(res) > 1e-3);
    }
}

TEST_CASE("effective theta and mean maps") {
    const std::vector<double> x{1.0};
    SECTION("poisson multiplicative scaling") {
        auto t = CovariateTransform::linear(Family::poisson, {std::log(3.0)});
        const auto k = FamilyKernel::poisson();
        const double th = effective_theta(k, t, 0.0, x);
        CHECK(th == Catch::Approx(std::log(3.0)));
        CHECK(k.mean(th) == Catch::Approx(3.0));
    }
    SECTION("gamma mu0 / zeta") {
        auto t = CovariateTransform::linear(Family::gamma, {std::log(2.0)});
        const auto k = FamilyKernel::gamma(1.0);
        const double th = effective_theta(k, t, -1.0, x);
        CHECK(th == Catch::Approx(-2.0));
        CHECK(k.mean(th) == Catch::Approx(0.5));
    }
    SECTION("gaussian additive shift") {
        auto t = CovariateTransform::linear(Family::gaussian, {-1.0});
        const auto k = FamilyKernel::gaussian(1.0);
        const double th = effective_theta(k, t, 1.0, x);
        CHECK(th == Catch::Approx(0.0).margin(1e-15));
    }
    SECTION("domain violation of the shifted argument") {
        // gamma: zeta(x) theta_0 must stay negative; a custom zeta crossing
        // zero pushes the argument out of the canonical domain
        auto t = CovariateTransform::custom(Family::gamma, 1, [](std::span<const double> x_) {
            return 1.0 - 2.0 * x_[0];
        });
        CHECK_THROWS_AS(effective_theta(FamilyKernel::gamma(1.0), t, -1.0, x),
                        CanonicalDomainError);
    }
}

TEST_CASE("identity residual vanishes at randomized points") {
    std::mt19937_64 rng(20240612);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (Family f : {Family::gaussian, Family::poisson, Family::gamma}) {
        const FamilyKernel kernel = f == Family::gaussian ? FamilyKernel::gaussian(1.0)
                                    : f == Family::poisson ? FamilyKernel::poisson()
                                                           : FamilyKernel::gamma(1.3);
        for (int rep = 0; rep < 300; ++rep) {
            std::vector<double> beta{u(rng), u(rng)};
            std::vector<double> x{2.0 * u(rng), 2.0 * u(rng)};
            double theta0 = 2.0 * u(rng);
            if (f == Family::gamma) theta0 = -std::abs(theta0) - 0.05;
            auto t = CovariateTransform::linear(f, beta);
            const double res = verify_identity(kernel, solution_set(t), x, theta0);
            INFO(family_name(f) << " rep " << rep);
            CHECK(std::abs(res) < 1e-10);
        }
    }
}

TEST_CASE("baseline property: effective theta at x0 = 0 is exactly theta0") {
    std::mt19937_64 rng(5150);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const std::vector<double> x0{0.0, 0.0};
    for (Family f : {Family::gaussian, Family::poisson, Family::gamma}) {
        const FamilyKernel kernel = f == Family::gaussian ? FamilyKernel::gaussian(1.0)
                                    : f == Family::poisson ? FamilyKernel::poisson()
                                                           : FamilyKernel::gamma(1.0);
        for (int rep = 0; rep < 50; ++rep) {
            std::vector<double> beta{u(rng), u(rng)};
            double theta0 = 2.0 * u(rng);
            if (f == Family::gamma) theta0 = -std::abs(theta0) - 0.05;
            auto t = CovariateTransform::linear(f, beta);
            CHECK(effective_theta(kernel, t, theta0, x0) == theta0);
        }
    }
}

TEST_CASE("binomial falsification: no sampled non-trivial candidate satisfies the identity") {
    std::mt19937_64 rng(321);
    std::uniform_real_distribution<double> u(-1.5, 1.5);
    const auto kernel = FamilyKernel::binomial(1);
    for (int trial = 0; trial < 100; ++trial) {
        // candidates affine in x with the mandatory baseline values; at least
        // one of p, q, r depends on x
        double a = u(rng), b = u(rng), c = u(rng);
        if (std::abs(a) + std::abs(b) + std::abs(c) < 0.3) a += 1.0;
        const double d = u(rng), e = u(rng), g = u(rng);
        auto cand = SolutionSet::custom(
            [a](std::span<const double> x) { return 1.0 + a * x[0]; },
            [b](std::span<const double> x) { return b * x[0]; },
            [c](std::span<const double> x) { return c * x[0]; },
            [d](std::span<const double> x) { return d * x[0]; },
            [e](std::span<const double> x) { return 1.0 + e * x[0]; },
            [g](std::span<const double> x) { return g * x[0]; });
        double worst = 0.0;
        for (double xv : {0.5, 1.0}) {
            const std::vector<double> x{xv};
            for (int k = -10; k <= 10; ++k) {
                const double theta0 = 0.3 * k;
                worst = std::max(worst, std::abs(verify_identity(kernel, cand, x, theta0)));
            }
        }
        INFO("trial " << trial);
        CHECK(worst > 1e-3);
    }
}
