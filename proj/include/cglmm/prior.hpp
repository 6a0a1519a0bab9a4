#pragma once

#include <cmath>
#include <span>
#include <string>

#include "cglmm/errors.hpp"
#include "cglmm/family.hpp"
#include "cglmm/math.hpp"

namespace cglmm {

// Conjugate distribution on the canonical parameter,
//   f(theta | chi, nu) = g(chi, nu) exp{ chi*theta - nu*b(theta) },
// stored in natural (chi, nu) form; the per-family parameterizations
// (lambda/kappa^2, A/B, C/D) are derived views. For the binomial family the
// reference cumulant of the prior is the single-trial b_1(theta) =
// log(1 + e^theta), so a response with n trials updates nu by n.
class ConjugatePrior {
  public:
    ConjugatePrior(double chi, double nu) : chi_(chi), nu_(nu) {}

    // Gaussian: theta_0 = mu_0 ~ N(lambda, kappa^2).
    static ConjugatePrior gaussian_mean_var(double lambda, double kappa2) {
        if (!(kappa2 > 0.0)) throw PriorParameterError("kappa^2 must be positive");
        return {lambda / kappa2, 1.0 / kappa2};
    }
    // Poisson: mu_0 = e^{theta_0} ~ Gamma(shape A, scale B).
    static ConjugatePrior poisson_gamma(double a, double b) {
        if (!(a > 0.0 && b > 0.0)) throw PriorParameterError("gamma shape/scale must be positive");
        return {a, 1.0 / b};
    }
    // Binomial: mu_0 = logistic(theta_0) ~ Beta(A, B).
    static ConjugatePrior binomial_beta(double a, double b) {
        if (!(a > 0.0 && b > 0.0)) throw PriorParameterError("beta shapes must be positive");
        return {a, a + b};
    }
    // Gamma: mu_0 = -1/theta_0 ~ Inverse-Gamma(shape C, scale D), E(mu_0) = D/(C-1).
    static ConjugatePrior gamma_inverse_gamma(double c, double d) {
        if (!(c > 0.0 && d > 0.0)) throw PriorParameterError("inverse-gamma C, D must be positive");
        return {d, c - 1.0};
    }

    double chi() const { return chi_; }
    double nu() const { return nu_; }

    // Per-family views of (chi, nu).
    double gaussian_mean() const { return chi_ / nu_; }
    double gaussian_var() const { return 1.0 / nu_; }
    double poisson_shape() const { return chi_; }
    double poisson_scale() const { return 1.0 / nu_; }
    double beta_a() const { return chi_; }
    double beta_b() const { return nu_ - chi_; }
    double ig_shape() const { return nu_ + 1.0; }
    double ig_scale() const { return chi_; }

    bool integrable(Family f) const {
        switch (f) {
            case Family::gaussian: return nu_ > 0.0;
            case Family::poisson: return chi_ > 0.0 && nu_ > 0.0;
            case Family::binomial: return chi_ > 0.0 && nu_ - chi_ > 0.0;
            case Family::gamma: return chi_ > 0.0 && nu_ > -1.0;
        }
        return false;
    }

    void check_integrable(Family f) const {
        if (!integrable(f))
            throw PriorParameterError(std::string(family_name(f)) + " prior not integrable: chi=" +
                                      std::to_string(chi_) + " nu=" + std::to_string(nu_));
    }

    // log g(chi, nu).
    double log_normalizer(Family f) const {
        check_integrable(f);
        switch (f) {
            case Family::gaussian:
                return 0.5 * (std::log(nu_) - kLogTwoPi) - chi_ * chi_ / (2.0 * nu_);
            case Family::poisson:
                return chi_ * std::log(nu_) - std::lgamma(chi_);
            case Family::binomial:
                return -log_beta(chi_, nu_ - chi_);
            case Family::gamma:
                return (nu_ + 1.0) * std::log(chi_) - std::lgamma(nu_ + 1.0);
        }
        return 0.0;
    }

    // Unnormalized log prior density at theta (reference cumulant; binomial
    // uses the single-trial b_1).
    double log_kernel(Family f, double theta) const {
        switch (f) {
            case Family::gaussian: return chi_ * theta - nu_ * 0.5 * theta * theta;
            case Family::poisson: return chi_ * theta - nu_ * std::exp(theta);
            case Family::binomial: return chi_ * theta - nu_ * log1pexp(theta);
            case Family::gamma:
                if (!(theta < 0.0)) throw CanonicalDomainError("gamma prior kernel needs theta < 0");
                return chi_ * theta + nu_ * std::log(-theta);
        }
        return 0.0;
    }

    ConjugatePrior updated_by(double dchi, double dnu) const {
        return {chi_ + dchi, nu_ + dnu};
    }

  private:
    double chi_;
    double nu_;
};

inline double log_normalizer(const ConjugatePrior& p, Family f) { return p.log_normalizer(f); }

// Posterior update for i.i.d. observations under the kernel: chi grows by
// sum(y)/phi and nu by the per-observation weight (binomial trial count, 1
// otherwise) summed over observations and divided by phi.
inline ConjugatePrior posterior_update(const ConjugatePrior& prior, const FamilyKernel& kernel,
                                       std::span<const double> ys) {
    double sum_y = 0.0;
    double sum_w = 0.0;
    for (double y : ys) {
        kernel.check_support(y);
        sum_y += y;
        sum_w += kernel.family() == Family::binomial ? kernel.trials() : 1.0;
    }
    const double phi = kernel.dispersion();
    return prior.updated_by(sum_y / phi, sum_w / phi);
}

// Group-level covariates enter through the prior mean: given the linear
// predictor eta_i, replace the mean-linked hyperparameter and keep the
// family's heterogeneity parameter.
inline ConjugatePrior prior_with_mean(Family f, const ConjugatePrior& base, double eta) {
    switch (f) {
        case Family::gaussian:
            // lambda_i = eta, kappa^2 unchanged
            return {eta * base.nu(), base.nu()};
        case Family::poisson:
            // B_i = e^eta / A, A unchanged
            return {base.chi(), base.chi() * std::exp(-eta)};
        case Family::binomial: {
            // mean logistic(eta), precision A+B = nu unchanged
            return {logistic(eta) * base.nu(), base.nu()};
        }
        case Family::gamma: {
            // D_i = (C-1) e^eta, C unchanged; the mean D/(C-1) needs C > 1
            if (!(base.nu() > 0.0))
                throw MeanUndefinedError("inverse-gamma mean undefined for C <= 1");
            return {base.nu() * std::exp(eta), base.nu()};
        }
    }
    return base;
}

}  // namespace cglmm
