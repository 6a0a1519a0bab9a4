#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "cglmm/errors.hpp"
#include "cglmm/family.hpp"

namespace cglmm {

namespace detail {
inline double dot(std::span<const double> beta, std::span<const double> x) {
    if (beta.size() != x.size())
        throw DataError("covariate vector length " + std::to_string(x.size()) +
                        " does not match coefficient length " + std::to_string(beta.size()));
    double acc = 0.0;
    for (std::size_t i = 0; i < beta.size(); ++i) acc += beta[i] * x[i];
    return acc;
}
}  // namespace detail

// User-specified covariate transform entering the unit-level model:
//   gaussian: mu(x) = zeta1(x) mu_0 + zeta2(x), with zeta1(0)=1, zeta2(0)=0
//   poisson:  mu(x) = mu_0 e^{zeta(x)},         with zeta(0)=0
//   gamma:    mu(x) = mu_0 / zeta(x),           with zeta(0)=1
// The linear factory instantiates the standard forms zeta(x) = x'beta
// (e^{x'beta} for gamma); x must not contain a constant column, so the
// baseline constraints hold by construction. Arbitrary evaluators are
// accepted through the custom factories and checked at x = 0.
class CovariateTransform {
  public:
    using Fn = std::function<double(std::span<const double>)>;

    static CovariateTransform linear(Family f, std::vector<double> beta) {
        require_unit_level(f);
        CovariateTransform t(f, beta.size());
        t.beta_ = std::move(beta);
        return t;
    }

    static CovariateTransform custom(Family f, std::size_t dim, Fn zeta) {
        require_unit_level(f);
        if (f == Family::gaussian)
            throw ConfigError("gaussian transform needs the (zeta1, zeta2) pair");
        CovariateTransform t(f, dim);
        t.zeta_ = std::move(zeta);
        const std::vector<double> x0(dim, 0.0);
        const double z0 = t.zeta_(x0);
        const double want = f == Family::gamma ? 1.0 : 0.0;
        if (std::abs(z0 - want) > 1e-12)
            throw ConfigError("custom zeta violates the baseline constraint zeta(0) = " +
                              std::to_string(want));
        return t;
    }

    static CovariateTransform custom_gaussian(std::size_t dim, Fn zeta1, Fn zeta2) {
        CovariateTransform t(Family::gaussian, dim);
        t.zeta_ = std::move(zeta2);
        t.zeta1_ = std::move(zeta1);
        const std::vector<double> x0(dim, 0.0);
        if (std::abs(t.zeta1_(x0) - 1.0) > 1e-12 || std::abs(t.zeta_(x0)) > 1e-12)
            throw ConfigError("custom gaussian transform violates zeta1(0)=1 or zeta2(0)=0");
        return t;
    }

    Family family() const { return family_; }
    std::size_t dim() const { return dim_; }
    bool is_linear() const { return !zeta_; }
    const std::vector<double>& coefficients() const { return beta_; }

    // Poisson: x'beta.  Gamma: e^{x'beta}.  Gaussian: zeta2 = x'beta.
    double zeta(std::span<const double> x) const {
        if (zeta_) return zeta_(x);
        const double lp = detail::dot(beta_, x);
        return family_ == Family::gamma ? std::exp(lp) : lp;
    }

    double zeta1(std::span<const double> x) const {
        if (family_ != Family::gaussian) throw ConfigError("zeta1 is gaussian-only");
        return zeta1_ ? zeta1_(x) : 1.0;
    }
    double zeta2(std::span<const double> x) const {
        if (family_ != Family::gaussian) throw ConfigError("zeta2 is gaussian-only");
        return zeta(x);
    }

  private:
    static void require_unit_level(Family f) {
        if (f == Family::binomial)
            throw UnitCovariateError(
                "binomial admits only the trivial solution set: unit-level covariates cannot "
                "be incorporated while keeping the marginal likelihood closed-form");
    }

    CovariateTransform(Family f, std::size_t dim) : family_(f), dim_(dim) {}

    Family family_;
    std::size_t dim_;
    std::vector<double> beta_;
    Fn zeta_;
    Fn zeta1_;
};

// The six covariate functions (p, q, r, s, t, u) making theta(x) and
// b(theta(x)) affine in (theta_0, b(theta_0)):
//   theta(x)    = p(x) theta_0 + q(x) b(theta_0) + r(x)
//   b(theta(x)) = s(x) theta_0 + t(x) b(theta_0) + u(x)
class SolutionSet {
  public:
    struct Values {
        double p, q, r, s, t, u;
    };

    static SolutionSet for_transform(const CovariateTransform& t) {
        SolutionSet s;
        s.family_ = t.family();
        s.transform_ = &t;
        return s;
    }

    // Arbitrary candidate functions; used to probe equation-(7)-style
    // residuals for sets that are not known solutions.
    using Fn = std::function<double(std::span<const double>)>;
    static SolutionSet custom(Fn p, Fn q, Fn r, Fn s, Fn t, Fn u) {
        SolutionSet out;
        out.custom_ = {std::move(p), std::move(q), std::move(r),
                       std::move(s), std::move(t), std::move(u)};
        return out;
    }

    Values at(std::span<const double> x) const {
        if (custom_) {
            const auto& f = *custom_;
            return {f.p(x), f.q(x), f.r(x), f.s(x), f.t(x), f.u(x)};
        }
        switch (family_) {
            case Family::gaussian: {
                const double z1 = transform_->zeta1(x);
                const double z2 = transform_->zeta2(x);
                return {z1, 0.0, z2, z1 * z2, z1 * z1, 0.5 * z2 * z2};
            }
            case Family::poisson: {
                const double z = transform_->zeta(x);
                return {1.0, 0.0, z, 0.0, std::exp(z), 0.0};
            }
            case Family::gamma: {
                const double z = transform_->zeta(x);
                return {z, 0.0, 0.0, 0.0, 1.0, -std::log(z)};
            }
            case Family::binomial:
                break;
        }
        throw UnitCovariateError("no solution set for the binomial family");
    }

    double p(std::span<const double> x) const { return at(x).p; }
    double q(std::span<const double> x) const { return at(x).q; }
    double r(std::span<const double> x) const { return at(x).r; }
    double s(std::span<const double> x) const { return at(x).s; }
    double t(std::span<const double> x) const { return at(x).t; }
    double u(std::span<const double> x) const { return at(x).u; }

  private:
    SolutionSet() = default;

    struct CustomFns {
        Fn p, q, r, s, t, u;
    };

    Family family_ = Family::binomial;
    const CovariateTransform* transform_ = nullptr;
    std::optional<CustomFns> custom_;
};

inline SolutionSet solution_set(const CovariateTransform& t) {
    return SolutionSet::for_transform(t);
}

// theta(x) = p(x) theta_0 + q(x) b(theta_0) + r(x), checked against the
// canonical domain.
inline double shifted_theta(const FamilyKernel& kernel, const SolutionSet::Values& v,
                            double theta0) {
    kernel.check_canonical(theta0);
    const double arg = v.p * theta0 + v.q * kernel.cumulant(theta0) + v.r;
    kernel.check_canonical(arg);
    return arg;
}

// Residual of the key affine-closure identity
//   b{p theta_0 + q b(theta_0) + r} - {s theta_0 + t b(theta_0) + u};
// zero (to rounding) exactly when (p,..,u) is a valid solution set.
inline double verify_identity(const FamilyKernel& kernel, const SolutionSet& sol,
                              std::span<const double> x, double theta0) {
    const auto v = sol.at(x);
    const double arg = shifted_theta(kernel, v, theta0);
    return kernel.cumulant(arg) -
           (v.s * theta0 + v.t * kernel.cumulant(theta0) + v.u);
}

inline double effective_theta(const FamilyKernel& kernel, const CovariateTransform& t,
                              double theta0, std::span<const double> x) {
    return shifted_theta(kernel, SolutionSet::for_transform(t).at(x), theta0);
}

}  // namespace cglmm
