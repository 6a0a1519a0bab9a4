#include <catch_amalgamated.hpp>

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <cmath>
#include <random>
#include <vector>

#include "cglmm/conjugacy.hpp"
#include "cglmm/data.hpp"
#include "cglmm/family.hpp"
#include "cglmm/likelihood.hpp"
#include "cglmm/prior.hpp"

using namespace cglmm;

namespace {

GroupedDataset::Group make_group(std::vector<double> y,
                                 std::vector<std::vector<double>> x = {},
                                 std::vector<double> trials = {}) {
    GroupedDataset::Group g;
    g.y = std::move(y);
    g.x = std::move(x);
    g.trials = std::move(trials);
    return g;
}

}  // namespace

TEST_CASE("group_stats reductions") {
    const auto pois = FamilyKernel::poisson();
    SECTION("no transform: group-level sufficient statistics") {
        auto st = group_stats(pois, nullptr, make_group({1.0, 2.0, 3.0}));
        CHECK(st.n == 3);
        CHECK(st.sum_y == 6.0);
        CHECK(st.sum_carrier == Catch::Approx(-(std::log(2.0) + std::log(6.0))));
        CHECK(st.sum_yp == 6.0);
        CHECK(st.sum_t == 3.0);
    }
    SECTION("poisson null predictor") {
        auto t = CovariateTransform::linear(Family::poisson, {0.0});
        auto st = group_stats(pois, &t,
                              make_group({1.0, 2.0}, {{0.4}, {-1.0}}));
        CHECK(st.sum_exp_zeta == Catch::Approx(2.0));
        CHECK(st.sum_zeta_y == Catch::Approx(0.0).margin(1e-15));
    }
    SECTION("gamma unit transform") {
        auto t = CovariateTransform::linear(Family::gamma, {0.0});
        auto st = group_stats(FamilyKernel::gamma(1.0), &t,
                              make_group({0.5, 2.5}, {{0.4}, {-1.0}}));
        CHECK(st.sum_zy == Catch::Approx(3.0));
        CHECK(st.sum_log_zeta == Catch::Approx(0.0).margin(1e-15));
    }
    SECTION("covariate row mismatch") {
        auto t = CovariateTransform::linear(Family::poisson, {0.5, 0.5});
        CHECK_THROWS_AS(group_stats(pois, &t, make_group({1.0}, {{0.4}})), DataError);
    }
}

TEST_CASE("generic reductions agree with family-specific reductions") {
    std::mt19937_64 rng(88);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int rep = 0; rep < 50; ++rep) {
        std::vector<std::vector<double>> xs;
        for (int j = 0; j < 4; ++j) xs.push_back({u(rng), u(rng)});
        std::vector<double> beta{u(rng), u(rng)};

        auto tp = CovariateTransform::linear(Family::poisson, beta);
        auto stp = group_stats(FamilyKernel::poisson(), &tp,
                               make_group({1.0, 0.0, 3.0, 2.0}, xs));
        CHECK(stp.sum_t == Catch::Approx(stp.sum_exp_zeta).epsilon(1e-13));
        CHECK(stp.sum_ry_minus_u == Catch::Approx(stp.sum_zeta_y).epsilon(1e-13).margin(1e-13));
        CHECK(stp.sum_yp == Catch::Approx(stp.sum_y).epsilon(1e-13));

        auto tg = CovariateTransform::linear(Family::gamma, beta);
        auto stg = group_stats(FamilyKernel::gamma(1.5), &tg,
                               make_group({0.5, 1.5, 2.0, 0.7}, xs));
        CHECK(stg.sum_yp == Catch::Approx(stg.sum_zy).epsilon(1e-13));
        CHECK(stg.sum_ry_minus_u == Catch::Approx(stg.sum_log_zeta).epsilon(1e-13).margin(1e-13));

        auto tn = CovariateTransform::linear(Family::gaussian, beta);
        auto stn = group_stats(FamilyKernel::gaussian(0.7), &tn,
                               make_group({0.5, -1.5, 2.0, 0.7}, xs));
        CHECK(stn.sum_yp == Catch::Approx(stn.sum_z1y).epsilon(1e-13));
        CHECK(stn.sum_s == Catch::Approx(stn.sum_z1z2).epsilon(1e-13).margin(1e-13));
        CHECK(stn.sum_t == Catch::Approx(stn.sum_z1sq).epsilon(1e-13));
        CHECK(stn.sum_ry_minus_u ==
              Catch::Approx(stn.sum_z2y - 0.5 * stn.sum_z2sq).epsilon(1e-13).margin(1e-13));
    }
}

TEST_CASE("group-level log-likelihood closed forms") {
    SECTION("poisson, unit exponential prior, y = 0") {
        const auto st = group_stats(FamilyKernel::poisson(), nullptr, make_group({0.0}));
        const double ll =
            group_loglik(FamilyKernel::poisson(), ConjugatePrior::poisson_gamma(1.0, 1.0), st);
        CHECK(ll == Catch::Approx(-std::log(2.0)));
    }
    SECTION("poisson equals the negative binomial pmf") {
        const auto st = group_stats(FamilyKernel::poisson(), nullptr, make_group({1.0}));
        const double ll =
            group_loglik(FamilyKernel::poisson(), ConjugatePrior::poisson_gamma(2.0, 0.5), st);
        CHECK(ll == Catch::Approx(std::log(8.0 / 27.0)));
    }
    SECTION("gaussian y ~ N(0, sigma^2 + kappa^2)") {
        const auto k = FamilyKernel::gaussian(1.0);
        const auto st = group_stats(k, nullptr, make_group({0.0}));
        const double ll = group_loglik(k, ConjugatePrior::gaussian_mean_var(0.0, 1.0), st);
        CHECK(ll == Catch::Approx(-0.5 * std::log(4.0 * M_PI)));
    }
    SECTION("bernoulli with uniform beta prior") {
        const auto k = FamilyKernel::binomial(1);
        const auto st = group_stats(k, nullptr, make_group({1.0}, {}, {1.0}));
        const double ll = group_loglik(k, ConjugatePrior::binomial_beta(1.0, 1.0), st);
        CHECK(ll == Catch::Approx(-std::log(2.0)));
    }
    SECTION("gamma compound density 2/(1+y)^3 at y = 1") {
        const auto k = FamilyKernel::gamma(1.0);
        const auto st = group_stats(k, nullptr, make_group({1.0}));
        const double ll = group_loglik(k, ConjugatePrior::gamma_inverse_gamma(2.0, 1.0), st);
        CHECK(ll == Catch::Approx(-2.0 * std::log(2.0)));
    }
}

TEST_CASE("group-level closed forms match the printed table forms plus constants") {
    SECTION("poisson") {
        const double a = 1.7, b = 0.6, y = 3.0;
        const auto st = group_stats(FamilyKernel::poisson(), nullptr, make_group({y}));
        const double ll =
            group_loglik(FamilyKernel::poisson(), ConjugatePrior::poisson_gamma(a, b), st);
        const double table = std::lgamma(a + y) - (a + y) * std::log(1.0 / b + 1.0) -
                             std::lgamma(a) - a * std::log(b);
        CHECK(ll == Catch::Approx(table - std::lgamma(y + 1.0)));
    }
    SECTION("binomial (bernoulli row)") {
        const double a = 1.3, b = 2.1, y = 1.0;
        const auto k = FamilyKernel::binomial(1);
        const auto st = group_stats(k, nullptr, make_group({y}, {}, {1.0}));
        const double ll = group_loglik(k, ConjugatePrior::binomial_beta(a, b), st);
        const double table = log_beta(a + y, b + 1.0 - y) - log_beta(a, b);
        CHECK(ll == Catch::Approx(table));
    }
    SECTION("gamma (orientation-repaired row)") {
        const double shape = 1.4, c = 2.2, d = 0.8, y = 1.7;
        const auto k = FamilyKernel::gamma(shape);
        const auto st = group_stats(k, nullptr, make_group({y}));
        const double ll = group_loglik(k, ConjugatePrior::gamma_inverse_gamma(c, d), st);
        const double table = -log_beta(shape, c) + shape * std::log(shape * y / d) -
                             std::log(y) - (shape + c) * std::log(1.0 + shape * y / d);
        CHECK(ll == Catch::Approx(table));
    }
    SECTION("gaussian equals the direct N(lambda, sigma^2 + kappa^2) density") {
        const double lambda = 0.4, kappa2 = 0.9, sigma2 = 1.3, y = -0.8;
        const auto k = FamilyKernel::gaussian(sigma2);
        const auto st = group_stats(k, nullptr, make_group({y}));
        const double ll = group_loglik(k, ConjugatePrior::gaussian_mean_var(lambda, kappa2), st);
        const double v = sigma2 + kappa2;
        const double direct = -0.5 * (std::log(2.0 * M_PI * v) + (y - lambda) * (y - lambda) / v);
        CHECK(ll == Catch::Approx(direct));
    }
}

TEST_CASE("unit-level log-likelihood") {
    SECTION("null transform reduces to the group-level value") {
        std::mt19937_64 rng(41);
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        for (int rep = 0; rep < 30; ++rep) {
            std::vector<std::vector<double>> xs{{u(rng)}, {u(rng)}, {u(rng)}};
            auto t = CovariateTransform::linear(Family::poisson, {0.0});
            const auto prior = ConjugatePrior::poisson_gamma(1.2, 0.8);
            const auto g = make_group({2.0, 0.0, 5.0}, xs);
            const double lu = unit_loglik(FamilyKernel::poisson(), prior,
                                          group_stats(FamilyKernel::poisson(), &t, g));
            const double lg = group_loglik(FamilyKernel::poisson(), prior,
                                           group_stats(FamilyKernel::poisson(), nullptr, g));
            CHECK(lu == Catch::Approx(lg).epsilon(1e-12));
        }
    }
    SECTION("poisson doubled rate, y = 0") {
        auto t = CovariateTransform::linear(Family::poisson, {std::log(2.0)});
        const auto st = group_stats(FamilyKernel::poisson(), &t, make_group({0.0}, {{1.0}}));
        const double ll =
            unit_loglik(FamilyKernel::poisson(), ConjugatePrior::poisson_gamma(1.0, 1.0), st);
        CHECK(ll == Catch::Approx(-std::log(3.0)));
    }
    SECTION("gamma with zeta = 2, y = 1") {
        auto t = CovariateTransform::linear(Family::gamma, {std::log(2.0)});
        const auto st = group_stats(FamilyKernel::gamma(1.0), &t, make_group({1.0}, {{1.0}}));
        const double ll =
            unit_loglik(FamilyKernel::gamma(1.0), ConjugatePrior::gamma_inverse_gamma(2.0, 1.0), st);
        CHECK(ll == Catch::Approx(std::log(4.0) - 3.0 * std::log(3.0)));
    }
    SECTION("binomial impossibility") {
        const auto k = FamilyKernel::binomial(1);
        const auto st = group_stats(k, nullptr, make_group({1.0}, {}, {1.0}));
        CHECK_THROWS_AS(unit_loglik(k, ConjugatePrior::binomial_beta(1.0, 1.0), st),
                        UnitCovariateError);
    }
    SECTION("degenerate posterior is reported") {
        GroupStats st;
        st.n = 1;
        st.sum_t = -2.0;
        CHECK_THROWS_AS(
            unit_loglik(FamilyKernel::poisson(), ConjugatePrior::poisson_gamma(1.0, 1.0), st),
            DegeneratePosteriorError);
    }
}

TEST_CASE("unit-level closed forms match the printed table forms plus constants") {
    std::mt19937_64 rng(6021);
    std::uniform_real_distribution<double> u(-0.8, 0.8);
    SECTION("poisson") {
        for (int rep = 0; rep < 20; ++rep) {
            const double a = 0.6 + 2.0 * std::abs(u(rng)), b = 0.4 + std::abs(u(rng));
            std::vector<double> beta{u(rng), u(rng)};
            std::vector<std::vector<double>> xs{{u(rng), u(rng)}, {u(rng), u(rng)}, {u(rng), u(rng)}};
            std::vector<double> ys{2.0, 0.0, 4.0};
            auto t = CovariateTransform::linear(Family::poisson, beta);
            const auto st = group_stats(FamilyKernel::poisson(), &t, make_group(ys, xs));
            const double ll = unit_loglik(FamilyKernel::poisson(),
                                          ConjugatePrior::poisson_gamma(a, b), st);
            const double table = std::lgamma(a + st.sum_y) -
                                 (a + st.sum_y) * std::log(1.0 / b + st.sum_exp_zeta) -
                                 std::lgamma(a) - a * std::log(b) + st.sum_zeta_y;
            CHECK(ll == Catch::Approx(table + st.sum_carrier).epsilon(1e-12));
        }
    }
    SECTION("gamma (orientation-repaired row)") {
        for (int rep = 0; rep < 20; ++rep) {
            const double shape = 0.8 + std::abs(u(rng));
            const double c = 1.5 + std::abs(u(rng)), d = 0.5 + std::abs(u(rng));
            std::vector<double> beta{u(rng), u(rng)};
            std::vector<std::vector<double>> xs{{u(rng), u(rng)}, {u(rng), u(rng)}};
            std::vector<double> ys{1.3, 0.6};
            auto t = CovariateTransform::linear(Family::gamma, beta);
            const auto k = FamilyKernel::gamma(shape);
            const auto st = group_stats(k, &t, make_group(ys, xs));
            const double ll = unit_loglik(k, ConjugatePrior::gamma_inverse_gamma(c, d), st);
            const double n = static_cast<double>(st.n);
            const double table = std::lgamma(shape * n + c) - n * std::lgamma(shape) -
                                 std::lgamma(c) + shape * n * std::log(shape) +
                                 (shape - 1.0) * st.sum_log_y -
                                 (shape * n + c) * std::log(1.0 + shape * st.sum_zy / d) -
                                 shape * n * std::log(d) + shape * st.sum_log_zeta;
            CHECK(ll == Catch::Approx(table).epsilon(1e-12));
        }
    }
}

TEST_CASE("gaussian closed form equals the multivariate normal density") {
    std::mt19937_64 rng(777);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int rep = 0; rep < 100; ++rep) {
        const double sigma2 = 0.5 + std::abs(u(rng));
        const double kappa2 = 0.3 + std::abs(u(rng));
        const double lambda = u(rng);
        const int n = 2 + (rep % 4);
        std::vector<double> beta{u(rng), u(rng)};
        // non-constant zeta1 exercises the full sigma^2 I + kappa^2 z1 z1' structure
        const double slope = 0.5 * u(rng);
        auto t = CovariateTransform::custom_gaussian(
            2, [slope](std::span<const double> x) { return 1.0 + slope * x[0]; },
            [beta](std::span<const double> x) { return beta[0] * x[0] + beta[1] * x[1]; });

        GroupedDataset::Group g;
        for (int j = 0; j < n; ++j) {
            g.x.push_back({u(rng), u(rng)});
            g.y.push_back(2.0 * u(rng));
        }
        const auto k = FamilyKernel::gaussian(sigma2);
        const double ll = unit_loglik(k, ConjugatePrior::gaussian_mean_var(lambda, kappa2),
                                      group_stats(k, &t, g));

        Eigen::VectorXd y(n), m(n), z1(n);
        for (int j = 0; j < n; ++j) {
            y(j) = g.y[j];
            z1(j) = t.zeta1(g.x[j]);
            m(j) = lambda * z1(j) + t.zeta2(g.x[j]);
        }
        Eigen::MatrixXd cov = sigma2 * Eigen::MatrixXd::Identity(n, n);
        cov += kappa2 * z1 * z1.transpose();
        Eigen::LLT<Eigen::MatrixXd> llt(cov);
        const Eigen::VectorXd r = y - m;
        const double quad = r.dot(llt.solve(r));
        double logdet = 0.0;
        for (int j = 0; j < n; ++j) logdet += 2.0 * std::log(llt.matrixL()(j, j));
        const double direct = -0.5 * (n * std::log(2.0 * M_PI) + logdet + quad);
        CHECK(ll == Catch::Approx(direct).epsilon(1e-10).margin(1e-10));
    }
}

TEST_CASE("total log-likelihood") {
    const auto k = FamilyKernel::poisson();
    const ConjugatePrior prior = ConjugatePrior::poisson_gamma(1.5, 0.7);
    GroupedDataset data;
    data.covariates = {"x"};
    data.groups.push_back(make_group({1.0, 2.0}, {{0.3}, {-0.2}}));
    data.groups.push_back(make_group({1.0, 2.0}, {{0.3}, {-0.2}}));

    SECTION("two identical groups double the value") {
        const std::vector<ConjugatePrior> ps{prior};
        auto t = CovariateTransform::linear(Family::poisson, {0.4});
        const double total = total_loglik(k, ps, &t, data);
        GroupedDataset one;
        one.covariates = data.covariates;
        one.groups.push_back(data.groups[0]);
        CHECK(total == Catch::Approx(2.0 * total_loglik(k, ps, &t, one)).epsilon(1e-14));
    }
    SECTION("null group predictor equals the shared prior") {
        const std::vector<ConjugatePrior> shared{prior};
        const std::vector<ConjugatePrior> per_group{
            prior_with_mean(Family::poisson, prior, std::log(prior.poisson_shape() * prior.poisson_scale())),
            prior_with_mean(Family::poisson, prior, std::log(prior.poisson_shape() * prior.poisson_scale()))};
        // eta = log(A B) reproduces B exactly
        CHECK(per_group[0].nu() == Catch::Approx(prior.nu()).epsilon(1e-14));
        CHECK(total_loglik(k, per_group, nullptr, data) ==
              Catch::Approx(total_loglik(k, shared, nullptr, data)).epsilon(1e-13));
    }
    SECTION("within-group observation order does not matter") {
        GroupedDataset flipped = data;
        std::swap(flipped.groups[0].y[0], flipped.groups[0].y[1]);
        std::swap(flipped.groups[0].x[0], flipped.groups[0].x[1]);
        const std::vector<ConjugatePrior> ps{prior};
        auto t = CovariateTransform::linear(Family::poisson, {0.4});
        CHECK(total_loglik(k, ps, &t, data) ==
              Catch::Approx(total_loglik(k, ps, &t, flipped)).epsilon(1e-12));
    }
    SECTION("empty groups contribute zero and are counted") {
        GroupedDataset with_empty = data;
        with_empty.groups.push_back(make_group({}));
        const std::vector<ConjugatePrior> ps{prior};
        std::size_t empty = 0;
        const double total = total_loglik(k, ps, nullptr, with_empty, &empty);
        CHECK(empty == 1);
        CHECK(total == Catch::Approx(total_loglik(k, ps, nullptr, data)).epsilon(1e-14));
    }
    SECTION("gamma group covariates need C > 1") {
        CHECK_THROWS_AS(prior_with_mean(Family::gamma, ConjugatePrior::gamma_inverse_gamma(0.8, 1.0), 0.3),
                        MeanUndefinedError);
    }
}

TEST_CASE("poisson marginal pmf tail mass") {
    const auto k = FamilyKernel::poisson();
    const ConjugatePrior prior = ConjugatePrior::poisson_gamma(2.0, 1.5);
    double cum = 0.0, prev = 0.0;
    bool monotone_to_one = true;
    for (int y = 0; y <= 200; ++y) {
        const auto st = group_stats(k, nullptr, make_group({static_cast<double>(y)}));
        cum += std::exp(group_loglik(k, prior, st));
        if (cum < prev || cum > 1.0) monotone_to_one = false;
        prev = cum;
    }
    CHECK(monotone_to_one);
    CHECK(1.0 - cum < 1e-8);
}
