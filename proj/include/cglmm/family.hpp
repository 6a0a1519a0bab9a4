#pragma once

#include <cmath>
#include <string>

#include "cglmm/errors.hpp"
#include "cglmm/math.hpp"

namespace cglmm {

enum class Family { gaussian, poisson, binomial, gamma };

inline const char* family_name(Family f) {
    switch (f) {
        case Family::gaussian: return "gaussian";
        case Family::poisson: return "poisson";
        case Family::binomial: return "binomial";
        case Family::gamma: return "gamma";
    }
    return "?";
}

inline Family family_from_name(const std::string& s) {
    if (s == "gaussian" || s == "normal") return Family::gaussian;
    if (s == "poisson") return Family::poisson;
    if (s == "binomial") return Family::binomial;
    if (s == "gamma") return Family::gamma;
    throw ConfigError("unknown family '" + s + "'");
}

// One-parameter exponential family with dispersion,
//   f(y | theta, phi) = exp{ (y*theta - b(theta)) / phi + c(y, phi) },
// carrying the canonical map theta(mu), the cumulant b, the carrier c and
// the structural constants (binomial trials, gamma shape).
class FamilyKernel {
  public:
    static FamilyKernel gaussian(double sigma2) {
        if (!(sigma2 > 0.0)) throw PriorParameterError("gaussian variance must be positive");
        return FamilyKernel(Family::gaussian, sigma2, 1.0, 0.0);
    }
    static FamilyKernel poisson() { return FamilyKernel(Family::poisson, 1.0, 1.0, 0.0); }
    static FamilyKernel binomial(double trials = 1.0) {
        if (!(trials >= 1.0) || std::floor(trials) != trials)
            throw PriorParameterError("binomial trials must be a positive integer");
        return FamilyKernel(Family::binomial, 1.0, trials, 0.0);
    }
    static FamilyKernel gamma(double shape) {
        if (!(shape > 0.0)) throw PriorParameterError("gamma shape must be positive");
        return FamilyKernel(Family::gamma, 1.0 / shape, 1.0, shape);
    }

    Family family() const { return family_; }
    double dispersion() const { return dispersion_; }
    double trials() const { return trials_; }
    double shape() const { return shape_; }

    // Copy of this kernel bound to a different per-observation trial count.
    FamilyKernel with_trials(double trials) const {
        FamilyKernel k = *this;
        if (family_ == Family::binomial) {
            if (!(trials >= 1.0) || std::floor(trials) != trials)
                throw SupportError("binomial trials must be a positive integer");
            k.trials_ = trials;
        }
        return k;
    }

    bool in_mean_domain(double mu) const {
        if (!std::isfinite(mu)) return false;
        switch (family_) {
            case Family::gaussian: return true;
            case Family::poisson: return mu > 0.0;
            case Family::binomial: return mu > 0.0 && mu < 1.0;
            case Family::gamma: return mu > 0.0;
        }
        return false;
    }

    bool in_canonical_domain(double theta) const {
        if (!std::isfinite(theta)) return false;
        return family_ != Family::gamma || theta < 0.0;
    }

    // theta(mu): identity / log / logit / -1/mu.
    double theta(double mu) const {
        if (!in_mean_domain(mu))
            throw MeanDomainError(std::string("mean ") + std::to_string(mu) +
                                  " outside the " + family_name(family_) + " mean domain");
        switch (family_) {
            case Family::gaussian: return mu;
            case Family::poisson: return std::log(mu);
            case Family::binomial: return logit(mu);
            case Family::gamma: return -1.0 / mu;
        }
        return 0.0;
    }

    // Inverse of theta(mu).
    double mean(double theta) const {
        check_canonical(theta);
        switch (family_) {
            case Family::gaussian: return theta;
            case Family::poisson: return std::exp(theta);
            case Family::binomial: return logistic(theta);
            case Family::gamma: return -1.0 / theta;
        }
        return 0.0;
    }

    // Cumulant b(theta).
    double cumulant(double theta) const {
        check_canonical(theta);
        switch (family_) {
            case Family::gaussian: return 0.5 * theta * theta;
            case Family::poisson: return std::exp(theta);
            case Family::binomial: return trials_ * log1pexp(theta);
            case Family::gamma: return -std::log(-theta);
        }
        return 0.0;
    }

    // Carrier c(y, phi), with all normalizing constants kept so log-likelihood
    // values are absolute.
    double carrier(double y) const {
        check_support(y);
        switch (family_) {
            case Family::gaussian:
                return -0.5 * (std::log(2.0 * M_PI * dispersion_) + y * y / dispersion_);
            case Family::poisson:
                return -std::lgamma(y + 1.0);
            case Family::binomial:
                return log_choose(trials_, y);
            case Family::gamma: {
                const double a = shape_;
                return a * std::log(a * y) - std::log(y) - std::lgamma(a);
            }
        }
        return 0.0;
    }

    void check_support(double y) const {
        switch (family_) {
            case Family::gaussian:
                if (std::isfinite(y)) return;
                break;
            case Family::poisson:
                if (is_nonneg_integer(y)) return;
                break;
            case Family::binomial:
                if (is_nonneg_integer(y) && y <= trials_) return;
                break;
            case Family::gamma:
                if (std::isfinite(y) && y > 0.0) return;
                break;
        }
        throw SupportError(std::string("response ") + std::to_string(y) +
                           " outside the " + family_name(family_) + " support");
    }

    void check_canonical(double theta) const {
        if (!in_canonical_domain(theta))
            throw CanonicalDomainError(std::string("theta ") + std::to_string(theta) +
                                       " outside the " + family_name(family_) +
                                       " canonical domain");
    }

    // Log density of one observation at canonical parameter theta.
    double log_density(double y, double theta) const {
        return (y * theta - cumulant(theta)) / dispersion_ + carrier(y);
    }

  private:
    FamilyKernel(Family f, double dispersion, double trials, double shape)
        : family_(f), dispersion_(dispersion), trials_(trials), shape_(shape) {}

    Family family_;
    double dispersion_;  // sigma^2, 1, 1, 1/shape
    double trials_;      // binomial only
    double shape_;       // gamma only
};

inline double canonical_theta(const FamilyKernel& k, double mu) { return k.theta(mu); }
inline double cumulant(const FamilyKernel& k, double theta) { return k.cumulant(theta); }
inline double carrier(const FamilyKernel& k, double y) { return k.carrier(y); }

}  // namespace cglmm
