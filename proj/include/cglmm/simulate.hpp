#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "cglmm/conjugacy.hpp"
#include "cglmm/data.hpp"
#include "cglmm/errors.hpp"
#include "cglmm/family.hpp"
#include "cglmm/model.hpp"
#include "cglmm/prior.hpp"

namespace cglmm {

// Covariate generator: independent standard-normal or Bernoulli(p) columns,
// plus product interactions of two earlier columns. Group-level columns are
// drawn once per group and repeated across its units.
struct CovariateGen {
    enum class Kind { normal, binary, interaction };
    std::string name;
    Kind kind = Kind::normal;
    double p = 0.5;             // binary success probability
    std::string parent_a, parent_b;  // interaction parents
    bool group_level = false;
};

struct SimulationPlan {
    Family family = Family::poisson;
    std::size_t groups = 10;
    std::vector<std::size_t> units_per_group;  // one entry, or one per group
    std::vector<CovariateGen> covariates;

    bool intercept = false;
    double intercept_value = 0.0;
    std::vector<std::pair<std::string, double>> beta;        // unit-level coefficients
    std::vector<std::pair<std::string, double>> beta_group;  // group-level coefficients

    // hyperparameters (family-relevant subset is used)
    double lambda = 0.0, kappa2 = 1.0, sigma2 = 1.0;  // gaussian
    double prior_a = 1.0, prior_b = 1.0;              // poisson / binomial
    double ig_c = 2.0, ig_d = 1.0, shape = 1.0;       // gamma (+ response shape)
    double trials = 1.0;                              // binomial

    std::uint64_t seed = 1;

    std::size_t units(std::size_t group) const {
        if (units_per_group.empty()) throw ConfigError("units per group not set");
        return units_per_group.size() == 1 ? units_per_group[0]
                                           : units_per_group.at(group);
    }

    void validate() const {
        if (groups == 0) throw ConfigError("need at least one group");
        if (units_per_group.size() != 1 && units_per_group.size() != groups)
            throw ConfigError("units_per_group must have one entry or one per group");
        if (family == Family::binomial && !beta.empty())
            throw UnitCovariateError("binomial plans cannot carry unit-level coefficients");
        switch (family) {
            case Family::gaussian:
                if (!(kappa2 >= 0.0) || !(sigma2 > 0.0))
                    throw ConfigError("gaussian plan needs kappa2 >= 0, sigma2 > 0");
                break;
            case Family::poisson:
            case Family::binomial:
                if (!(prior_a > 0.0) || !(prior_b > 0.0))
                    throw ConfigError("prior shapes must be positive");
                break;
            case Family::gamma:
                if (!(ig_c > 0.0) || !(ig_d > 0.0) || !(shape > 0.0))
                    throw ConfigError("gamma plan needs positive C, D, shape");
                break;
        }
        for (const auto& [name, v] : beta) {
            (void)v;
            bool found = false;
            for (const auto& g : covariates) found = found || g.name == name;
            if (!found) throw ConfigError("beta names unknown covariate '" + name + "'");
        }
        for (const auto& [name, v] : beta_group) {
            (void)v;
            bool found = false;
            for (const auto& g : covariates)
                found = found || (g.name == name && g.group_level);
            if (!found)
                throw ConfigError("beta_group names unknown group covariate '" + name + "'");
        }
    }
};

struct SimulationResult {
    GroupedDataset data;
    // true parameter values in BoundModel naming (Intercept, covariates,
    // hyperparameters), for recovery checks and metadata sidecars
    std::vector<std::pair<std::string, double>> truth;
};

namespace sim_detail {

inline double draw_mu0(const SimulationPlan& plan, const ConjugatePrior& prior,
                       std::mt19937_64& rng) {
    switch (plan.family) {
        case Family::gaussian: {
            std::normal_distribution<double> d(prior.gaussian_mean(),
                                               std::sqrt(prior.gaussian_var()));
            return d(rng);
        }
        case Family::poisson: {
            std::gamma_distribution<double> d(prior.poisson_shape(), prior.poisson_scale());
            return d(rng);
        }
        case Family::binomial: {
            std::gamma_distribution<double> da(prior.beta_a(), 1.0), db(prior.beta_b(), 1.0);
            const double a = da(rng), b = db(rng);
            return a / (a + b);
        }
        case Family::gamma: {
            // mu_0 ~ Inverse-Gamma(C, D): reciprocal of a Gamma(C, rate D)
            std::gamma_distribution<double> d(prior.ig_shape(), 1.0 / prior.ig_scale());
            return 1.0 / d(rng);
        }
    }
    return 0.0;
}

}  // namespace sim_detail

// Draw a two-level dataset from the model: a group effect from the conjugate
// distribution, then conditionally independent responses. Bit-reproducible:
// each group uses a substream derived from (seed, group index).
inline SimulationResult simulate(const SimulationPlan& plan) {
    plan.validate();
    SimulationResult out;

    for (const auto& g : plan.covariates) out.data.covariates.push_back(g.name);
    auto col = [&](const std::string& name) { return out.data.column(name); };

    // base prior in (chi, nu) form; the structured mean shifts it per group
    ConjugatePrior base(1.0, 1.0);
    const bool structured = plan.intercept || !plan.beta_group.empty();
    const bool degenerate_gaussian = plan.family == Family::gaussian && plan.kappa2 == 0.0;
    switch (plan.family) {
        case Family::gaussian:
            base = ConjugatePrior::gaussian_mean_var(plan.lambda,
                                                     degenerate_gaussian ? 1.0 : plan.kappa2);
            break;
        case Family::poisson:
            base = ConjugatePrior::poisson_gamma(plan.prior_a,
                                                 structured ? 1.0 / plan.prior_a : plan.prior_b);
            break;
        case Family::binomial:
            base = ConjugatePrior::binomial_beta(plan.prior_a, plan.prior_b);
            break;
        case Family::gamma:
            base = ConjugatePrior::gamma_inverse_gamma(
                plan.ig_c, structured ? plan.ig_c - 1.0 : plan.ig_d);
            break;
    }

    for (std::size_t i = 0; i < plan.groups; ++i) {
        std::seed_seq seq{plan.seed, static_cast<std::uint64_t>(i)};
        std::mt19937_64 rng(seq);
        std::normal_distribution<double> normal(0.0, 1.0);
        std::uniform_real_distribution<double> unif(0.0, 1.0);

        GroupedDataset::Group g;
        g.id = "g" + std::to_string(i + 1);
        const std::size_t n = plan.units(i);

        // group-level covariates, drawn once
        std::vector<double> group_vals(plan.covariates.size(), 0.0);
        for (std::size_t c = 0; c < plan.covariates.size(); ++c) {
            const auto& gen = plan.covariates[c];
            if (!gen.group_level || gen.kind == CovariateGen::Kind::interaction) continue;
            group_vals[c] = gen.kind == CovariateGen::Kind::normal
                                ? normal(rng)
                                : (unif(rng) < gen.p ? 1.0 : 0.0);
        }

        double eta = plan.intercept ? plan.intercept_value : 0.0;
        for (const auto& [name, b] : plan.beta_group) eta += b * group_vals[col(name)];
        const ConjugatePrior prior = structured ? prior_with_mean(plan.family, base, eta) : base;
        const double mu0 = degenerate_gaussian ? (structured ? eta : plan.lambda)
                                               : sim_detail::draw_mu0(plan, prior, rng);

        for (std::size_t j = 0; j < n; ++j) {
            std::vector<double> row(plan.covariates.size(), 0.0);
            for (std::size_t c = 0; c < plan.covariates.size(); ++c) {
                const auto& gen = plan.covariates[c];
                if (gen.kind == CovariateGen::Kind::interaction) continue;
                row[c] = gen.group_level ? group_vals[c]
                         : gen.kind == CovariateGen::Kind::normal
                             ? normal(rng)
                             : (unif(rng) < gen.p ? 1.0 : 0.0);
            }
            for (std::size_t c = 0; c < plan.covariates.size(); ++c) {
                const auto& gen = plan.covariates[c];
                if (gen.kind == CovariateGen::Kind::interaction)
                    row[c] = row[col(gen.parent_a)] * row[col(gen.parent_b)];
            }

            double zeta_lp = 0.0;
            for (const auto& [name, b] : plan.beta) zeta_lp += b * row[col(name)];

            double y = 0.0;
            switch (plan.family) {
                case Family::gaussian: {
                    const double mu = mu0 + zeta_lp;  // zeta1 = 1 random intercept form
                    std::normal_distribution<double> d(mu, std::sqrt(plan.sigma2));
                    y = d(rng);
                    break;
                }
                case Family::poisson: {
                    const double mu = mu0 * std::exp(zeta_lp);
                    std::poisson_distribution<long> d(mu);
                    y = static_cast<double>(d(rng));
                    break;
                }
                case Family::binomial: {
                    std::binomial_distribution<long> d(static_cast<long>(plan.trials), mu0);
                    y = static_cast<double>(d(rng));
                    g.trials.push_back(plan.trials);
                    break;
                }
                case Family::gamma: {
                    const double mu = mu0 / std::exp(zeta_lp);
                    std::gamma_distribution<double> d(plan.shape, mu / plan.shape);
                    y = d(rng);
                    break;
                }
            }
            g.y.push_back(y);
            g.x.push_back(std::move(row));
        }
        out.data.groups.push_back(std::move(g));
    }

    // truth in fit naming
    if (plan.intercept) out.truth.emplace_back("Intercept", plan.intercept_value);
    for (const auto& kv : plan.beta) out.truth.push_back(kv);
    for (const auto& kv : plan.beta_group) out.truth.push_back(kv);
    switch (plan.family) {
        case Family::gaussian:
            if (!structured) out.truth.emplace_back("lambda", plan.lambda);
            out.truth.emplace_back("kappa2", plan.kappa2);
            break;
        case Family::poisson:
            out.truth.emplace_back("A", plan.prior_a);
            if (!structured) out.truth.emplace_back("B", plan.prior_b);
            break;
        case Family::binomial:
            if (structured) {
                out.truth.emplace_back("precision", plan.prior_a + plan.prior_b);
            } else {
                out.truth.emplace_back("A", plan.prior_a);
                out.truth.emplace_back("B", plan.prior_b);
            }
            break;
        case Family::gamma:
            out.truth.emplace_back("C", plan.ig_c);
            if (!structured) out.truth.emplace_back("D", plan.ig_d);
            break;
    }
    return out;
}

}  // namespace cglmm
