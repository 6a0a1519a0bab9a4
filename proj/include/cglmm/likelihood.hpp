#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "cglmm/conjugacy.hpp"
#include "cglmm/data.hpp"
#include "cglmm/errors.hpp"
#include "cglmm/family.hpp"
#include "cglmm/prior.hpp"

namespace cglmm {

// Per-group sufficient reductions. The generic sums drive the closed-form
// likelihood; the family-specific sums are kept for the table-form
// cross-checks (the two routes must agree when built from the same
// transform).
struct GroupStats {
    std::size_t n = 0;
    double sum_y = 0.0;
    double sum_carrier = 0.0;
    double sum_trials = 0.0;  // binomial: total trials in the group

    // generic reductions over the solution set
    double sum_yp = 0.0;          // sum y p(x)
    double sum_s = 0.0;           // sum s(x)
    double sum_t = 0.0;           // sum t(x)  (group level: n, or total trials)
    double sum_yq = 0.0;          // sum y q(x)
    double sum_ry_minus_u = 0.0;  // sum (r(x) y - u(x))

    // poisson
    double sum_exp_zeta = 0.0;
    double sum_zeta_y = 0.0;
    // gamma
    double sum_zy = 0.0;
    double sum_log_zeta = 0.0;
    double sum_log_y = 0.0;
    // gaussian
    double sum_z1sq = 0.0;
    double sum_z1y = 0.0;
    double sum_z1z2 = 0.0;
    double sum_z2y = 0.0;
    double sum_z2sq = 0.0;
    double sum_ysq = 0.0;
};

// One pass over a group's units. With no transform the reductions collapse
// to the group-level sufficient statistics.
inline GroupStats group_stats(const FamilyKernel& kernel, const CovariateTransform* transform,
                              const GroupedDataset::Group& g) {
    GroupStats st;
    st.n = g.size();
    const bool binom = kernel.family() == Family::binomial;
    for (std::size_t j = 0; j < g.size(); ++j) {
        const double y = g.y[j];
        const FamilyKernel unit_kernel =
            binom && !g.trials.empty() ? kernel.with_trials(g.trials[j]) : kernel;
        unit_kernel.check_support(y);
        st.sum_y += y;
        st.sum_carrier += unit_kernel.carrier(y);
        const double w = binom ? unit_kernel.trials() : 1.0;
        st.sum_trials += binom ? unit_kernel.trials() : 0.0;

        if (transform == nullptr) {
            st.sum_yp += y;
            st.sum_t += w;
            continue;
        }

        std::span<const double> x = g.x.empty() ? std::span<const double>() : g.x[j];
        const auto v = SolutionSet::for_transform(*transform).at(x);
        st.sum_yp += y * v.p;
        st.sum_s += v.s;
        st.sum_t += v.t;
        st.sum_yq += y * v.q;
        st.sum_ry_minus_u += v.r * y - v.u;

        switch (kernel.family()) {
            case Family::poisson: {
                const double z = transform->zeta(x);
                st.sum_exp_zeta += std::exp(z);
                st.sum_zeta_y += z * y;
                break;
            }
            case Family::gamma: {
                const double z = transform->zeta(x);
                st.sum_zy += z * y;
                st.sum_log_zeta += std::log(z);
                st.sum_log_y += std::log(y);
                break;
            }
            case Family::gaussian: {
                const double z1 = transform->zeta1(x);
                const double z2 = transform->zeta2(x);
                st.sum_z1sq += z1 * z1;
                st.sum_z1y += z1 * y;
                st.sum_z1z2 += z1 * z2;
                st.sum_z2y += z2 * y;
                st.sum_z2sq += z2 * z2;
                st.sum_ysq += y * y;
                break;
            }
            case Family::binomial:
                break;  // unreachable: transform construction rejects binomial
        }
    }
    return st;
}

namespace detail {
// log g(chi, nu) - log g(chi + dchi, nu + dnu), arranged so that huge
// hyperparameters (e.g. a heterogeneity parameter pushed towards the
// degenerate limit) do not cancel catastrophically.
inline double normalizer_difference(const FamilyKernel& kernel, const ConjugatePrior& prior,
                                    double dchi, double dnu) {
    prior.check_integrable(kernel.family());
    const ConjugatePrior post = prior.updated_by(dchi, dnu);
    if (!post.integrable(kernel.family()))
        throw DegeneratePosteriorError(std::string("posterior not integrable for ") +
                                       family_name(kernel.family()) + ": chi=" +
                                       std::to_string(post.chi()) + " nu=" +
                                       std::to_string(post.nu()));
    const double chi = prior.chi(), nu = prior.nu();
    switch (kernel.family()) {
        case Family::gaussian:
            return -0.5 * std::log1p(dnu / nu) - chi * chi / (2.0 * nu) +
                   post.chi() * post.chi() / (2.0 * post.nu());
        case Family::poisson:
            return -chi * std::log1p(dnu / nu) - dchi * std::log(nu + dnu) +
                   lgamma_diff(chi, dchi);
        case Family::binomial:
            return -lgamma_diff(nu, dnu) + lgamma_diff(chi, dchi) +
                   lgamma_diff(nu - chi, dnu - dchi);
        case Family::gamma:
            return -(nu + 1.0) * std::log1p(dchi / chi) - dnu * std::log(chi + dchi) +
                   lgamma_diff(nu + 1.0, dnu);
    }
    return 0.0;
}
}  // namespace detail

// Group-level marginal log-likelihood of one group:
//   sum_j c(y_j, phi) + log g(chi, nu) - log g(chi + sum y/phi, nu + n/phi)
// (for binomial the posterior nu grows by the group's total trials).
inline double group_loglik(const FamilyKernel& kernel, const ConjugatePrior& prior,
                           const GroupStats& st) {
    const double phi = kernel.dispersion();
    const double weight = kernel.family() == Family::binomial ? st.sum_trials
                                                              : static_cast<double>(st.n);
    return st.sum_carrier +
           detail::normalizer_difference(kernel, prior, st.sum_y / phi, weight / phi);
}

// Unit-level marginal log-likelihood of one group:
//   sum_j c + log g(chi, nu) + sum_j (r y - u)/phi
//     - log g(chi + sum (y p - s)/phi, nu + sum (t - y q)/phi).
inline double unit_loglik(const FamilyKernel& kernel, const ConjugatePrior& prior,
                          const GroupStats& st) {
    if (kernel.family() == Family::binomial)
        throw UnitCovariateError("binomial has no unit-level closed form");
    const double phi = kernel.dispersion();
    return st.sum_carrier + st.sum_ry_minus_u / phi +
           detail::normalizer_difference(kernel, prior, (st.sum_yp - st.sum_s) / phi,
                                         (st.sum_t - st.sum_yq) / phi);
}

// Total marginal log-likelihood: sum over groups in index order. `priors`
// holds either one shared prior or one prior per group (group covariates
// entering through the mean). Empty groups contribute zero and are counted.
inline double total_loglik(const FamilyKernel& kernel, std::span<const ConjugatePrior> priors,
                           const CovariateTransform* transform, const GroupedDataset& data,
                           std::size_t* empty_groups = nullptr) {
    if (priors.size() != 1 && priors.size() != data.n_groups())
        throw DataError("need one prior or one prior per group");
    if (empty_groups) *empty_groups = 0;
    std::vector<double> contributions;
    contributions.reserve(data.n_groups());
    for (std::size_t i = 0; i < data.n_groups(); ++i) {
        const auto& g = data.groups[i];
        if (g.size() == 0) {
            if (empty_groups) ++*empty_groups;
            continue;
        }
        const ConjugatePrior& prior = priors.size() == 1 ? priors[0] : priors[i];
        const GroupStats st = group_stats(kernel, transform, g);
        contributions.push_back(transform ? unit_loglik(kernel, prior, st)
                                          : group_loglik(kernel, prior, st));
    }
    // order-independent accumulation: permuting the groups cannot move the
    // total (and hence any estimate) by even an ulp
    return stable_sum(std::move(contributions));
}

}  // namespace cglmm
