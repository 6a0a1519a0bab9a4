#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <span>
#include <vector>

#include "cglmm/conjugacy.hpp"
#include "cglmm/data.hpp"
#include "cglmm/errors.hpp"
#include "cglmm/family.hpp"
#include "cglmm/likelihood.hpp"
#include "cglmm/math.hpp"
#include "cglmm/prior.hpp"

namespace cglmm {

struct QuadratureConfig {
    int nodes = 201;          // >= 31
    bool recenter = true;     // Newton re-centering at the integrand mode
    int mc_samples = 10000;   // >= 1e4 when the MC path is used
    std::uint64_t seed = 1;

    void validate() const {
        if (nodes < 31) throw ConfigError("quadrature needs at least 31 nodes");
        if (mc_samples < 10000) throw ConfigError("monte carlo needs at least 10^4 samples");
    }
};

namespace quad_detail {

// 16-point Gauss-Legendre rule on [-1, 1].
inline constexpr double kGlNode[16] = {
    -0.9894009349916499, -0.9445750230732326, -0.8656312023878318, -0.7554044083550030,
    -0.6178762444026438, -0.4580167776572274, -0.2816035507792589, -0.0950125098376374,
    0.0950125098376374,  0.2816035507792589,  0.4580167776572274,  0.6178762444026438,
    0.7554044083550030,  0.8656312023878318,  0.9445750230732326,  0.9894009349916499};
inline constexpr double kGlWeight[16] = {
    0.0271524594117541, 0.0622535239386479, 0.0951585116824928, 0.1246289712555339,
    0.1495959888165767, 0.1691565193950025, 0.1826034150449236, 0.1894506104550685,
    0.1894506104550685, 0.1826034150449236, 0.1691565193950025, 0.1495959888165767,
    0.1246289712555339, 0.0951585116824928, 0.0622535239386479, 0.0271524594117541};

// The random effect is integrated on a mapped real line:
// theta_0 = w for gaussian/poisson/binomial, theta_0 = -e^w for gamma
// (log-Jacobian w).
inline double theta_from_w(Family f, double w) {
    return f == Family::gamma ? -std::exp(w) : w;
}
inline double log_jacobian(Family f, double w) {
    return f == Family::gamma ? w : 0.0;
}

// Starting point for the mode search: the prior's own mode in w.
inline double prior_mode_w(Family f, const ConjugatePrior& p) {
    switch (f) {
        case Family::gaussian: return p.chi() / p.nu();
        case Family::poisson: return std::log(p.chi() / p.nu());
        case Family::binomial: return std::log(p.chi() / (p.nu() - p.chi()));
        case Family::gamma: return std::log((p.nu() + 1.0) / p.chi());
    }
    return 0.0;
}

struct LogIntegral {
    double value;
    double mode;
    double scale;
};

// log of integral exp{h(w)} dw by mode re-centering and composite
// Gauss-Legendre panels with log-sum-exp accumulation.
template <typename H>
LogIntegral integrate_log(const H& h, double w_start, const QuadratureConfig& cfg) {
    cfg.validate();

    // coarse scan around the start, then safeguarded Newton refinement
    double w = w_start;
    double hw = h(w);
    for (int k = -12; k <= 12; ++k) {
        const double cand = w_start + 4.0 * k;
        const double hc = h(cand);
        if (hc > hw) {
            hw = hc;
            w = cand;
        }
    }
    double curv = 1.0;
    {
        const int max_newton = cfg.recenter ? 50 : 0;
        for (int it = 0; it < max_newton; ++it) {
            const double d = 1e-5 * std::max(1.0, std::abs(w));
            const double hp = h(w + d), hm = h(w - d), h0 = h(w);
            const double g = (hp - hm) / (2.0 * d);
            const double H2 = (hp - 2.0 * h0 + hm) / (d * d);
            double step;
            if (H2 < -1e-12) {
                step = -g / H2;
            } else {
                step = (g > 0 ? 1.0 : -1.0) * std::max(1.0, std::abs(w));
            }
            const double cap = 8.0 * std::max(1.0, std::abs(w));
            step = std::clamp(step, -cap, cap);
            double wn = w + step;
            double hn = h(wn);
            int halvings = 0;
            while (!(hn >= h0) && halvings++ < 30) {
                step *= 0.5;
                wn = w + step;
                hn = h(wn);
            }
            w = wn;
            if (std::abs(step) < 1e-11 * std::max(1.0, std::abs(w))) break;
        }
        const double d = 1e-4 * std::max(1.0, std::abs(w));
        const double H2 = (h(w + d) - 2.0 * h(w) + h(w - d)) / (d * d);
        curv = std::max(-H2, 1e-12);
    }
    const double s = std::min(1.0 / std::sqrt(curv), 1e4 * std::max(1.0, std::abs(w)));
    const double hmode = h(w);
    if (!std::isfinite(hmode))
        throw Error("non-finite quadrature integrand at mode w=" + std::to_string(w));

    // expand until the integrand has dropped ~46 nats on each side
    const double drop = 46.0;
    auto expand = [&](double dir) {
        double step = 4.0 * s;
        while (step < 1e7 * s) {
            const double hv = h(w + dir * step);
            if (!std::isfinite(hv) || hmode - hv > drop) return step;
            step *= 1.5;
        }
        return step;
    };
    const double left = w - expand(-1.0);
    const double right = w + expand(+1.0);

    // panel count follows both the node budget and the window width in
    // curvature units, so slowly decaying tails stay resolved
    const int by_width = static_cast<int>(std::ceil((right - left) / (3.0 * s)));
    const int panels = std::min(2000, std::max({4, (cfg.nodes + 15) / 16, by_width}));
    const double width = (right - left) / panels;
    std::vector<double> terms;
    terms.reserve(static_cast<std::size_t>(panels) * 16);
    for (int pnl = 0; pnl < panels; ++pnl) {
        const double a = left + pnl * width;
        const double mid = a + 0.5 * width, half = 0.5 * width;
        for (int i = 0; i < 16; ++i) {
            const double wi = mid + half * kGlNode[i];
            const double hv = h(wi);
            if (std::isfinite(hv)) terms.push_back(hv + std::log(half * kGlWeight[i]));
        }
    }
    if (terms.empty()) throw Error("quadrature integrand vanished everywhere");
    return {log_sum_exp(terms), w, s};
}

// Group log-likelihood at random-effect value theta0; -inf off the domain.
inline double group_log_density(const FamilyKernel& kernel, const CovariateTransform* transform,
                                const GroupedDataset::Group& g, double theta0) {
    double acc = 0.0;
    for (std::size_t j = 0; j < g.size(); ++j) {
        double theta = theta0;
        if (transform) {
            std::span<const double> x = g.x.empty() ? std::span<const double>() : g.x[j];
            const auto v = SolutionSet::for_transform(*transform).at(x);
            theta = v.p * theta0 + v.q * kernel.cumulant(theta0) + v.r;
        }
        const FamilyKernel uk = kernel.family() == Family::binomial && !g.trials.empty()
                                    ? kernel.with_trials(g.trials[j])
                                    : kernel;
        if (!uk.in_canonical_domain(theta)) return -std::numeric_limits<double>::infinity();
        acc += uk.log_density(g.y[j], theta);
    }
    return acc;
}

}  // namespace quad_detail

// log integral of the bare prior kernel exp{chi theta - nu b(theta)}; equals
// -log g(chi, nu). Exposed for the normalization checks.
inline double quad_log_kernel_mass(Family f, const ConjugatePrior& prior,
                                   const QuadratureConfig& cfg = {}) {
    prior.check_integrable(f);
    auto h = [&](double w) {
        const double theta = quad_detail::theta_from_w(f, w);
        return prior.log_kernel(f, theta) + quad_detail::log_jacobian(f, w);
    };
    return quad_detail::integrate_log(h, quad_detail::prior_mode_w(f, prior), cfg).value;
}

// Brute-force group marginal log-likelihood
//   log integral prod_j f(y_ij | theta(x_ij; theta_0), phi) f(theta_0|chi,nu) dtheta_0
// by adaptive re-centered quadrature. Shares only the family definitions
// with the closed-form path; the prior normalizer itself is also obtained
// by quadrature, never from log_normalizer.
inline double quad_group_loglik(const FamilyKernel& kernel, const ConjugatePrior& prior,
                                const CovariateTransform* transform,
                                const GroupedDataset::Group& g,
                                const QuadratureConfig& cfg = {}) {
    prior.check_integrable(kernel.family());
    const Family f = kernel.family();
    auto h_prior = [&](double w) {
        const double theta = quad_detail::theta_from_w(f, w);
        return prior.log_kernel(f, theta) + quad_detail::log_jacobian(f, w);
    };
    auto h_joint = [&](double w) {
        const double theta = quad_detail::theta_from_w(f, w);
        return quad_detail::group_log_density(kernel, transform, g, theta) +
               prior.log_kernel(f, theta) + quad_detail::log_jacobian(f, w);
    };
    const double start = quad_detail::prior_mode_w(f, prior);
    const double log_joint = quad_detail::integrate_log(h_joint, start, cfg).value;
    const double log_mass = quad_detail::integrate_log(h_prior, start, cfg).value;
    return log_joint - log_mass;
}

// Draw theta_0 from the conjugate prior.
inline double sample_theta0(Family f, const ConjugatePrior& prior, std::mt19937_64& rng) {
    switch (f) {
        case Family::gaussian: {
            std::normal_distribution<double> d(prior.gaussian_mean(),
                                               std::sqrt(prior.gaussian_var()));
            return d(rng);
        }
        case Family::poisson: {
            std::gamma_distribution<double> d(prior.poisson_shape(), prior.poisson_scale());
            return std::log(d(rng));
        }
        case Family::binomial: {
            std::gamma_distribution<double> da(prior.beta_a(), 1.0), db(prior.beta_b(), 1.0);
            const double a = da(rng), b = db(rng);
            return std::log(a) - std::log(b);
        }
        case Family::gamma: {
            // 1/mu_0 ~ Gamma(shape C, rate D)
            std::gamma_distribution<double> d(prior.ig_shape(), 1.0 / prior.ig_scale());
            return -d(rng);
        }
    }
    return 0.0;
}

struct McEstimate {
    double estimate;
    double std_error;
};

// Second, independent oracle: simple Monte Carlo over prior draws,
// log of the sample mean of the conditional likelihood, with a delta-method
// standard error for the log.
inline McEstimate mc_group_loglik(const FamilyKernel& kernel, const ConjugatePrior& prior,
                                  const CovariateTransform* transform,
                                  const GroupedDataset::Group& g, const QuadratureConfig& cfg) {
    cfg.validate();
    prior.check_integrable(kernel.family());
    std::mt19937_64 rng(cfg.seed);
    const int m = cfg.mc_samples;
    std::vector<double> logw(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i) {
        const double theta0 = sample_theta0(kernel.family(), prior, rng);
        logw[static_cast<std::size_t>(i)] =
            quad_detail::group_log_density(kernel, transform, g, theta0);
    }
    const double lse = log_sum_exp(logw);
    if (!std::isfinite(lse))
        throw Error("all monte carlo weights vanished");
    const double log_mean = lse - std::log(static_cast<double>(m));
    double sum = 0.0, sumsq = 0.0;
    for (double lw : logw) {
        const double w = std::exp(lw - log_mean);  // scaled weights, mean ~ 1
        sum += w;
        sumsq += w * w;
    }
    const double mean = sum / m;
    const double var = std::max(0.0, sumsq / m - mean * mean);
    const double se = std::sqrt(var / m) / mean;
    return {log_mean, se};
}

}  // namespace cglmm
