#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "cglmm/errors.hpp"
#include "cglmm/model.hpp"
#include "cglmm/optim.hpp"

namespace cglmm {

// Plain fixed-effects fits used for initialization and as degenerate-limit
// references.

inline Eigen::VectorXd ols(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
    return X.colPivHouseholderQr().solve(y);
}

inline Eigen::VectorXd poisson_irls(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                    int max_iter = 50) {
    const Eigen::Index n = X.rows(), p = X.cols();
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
    Eigen::VectorXd mu = (y.array() + 0.5).matrix();
    Eigen::VectorXd eta = mu.array().log().matrix();
    for (int it = 0; it < max_iter; ++it) {
        Eigen::VectorXd z = eta + ((y - mu).array() / mu.array()).matrix();
        Eigen::MatrixXd Xw = X;
        for (Eigen::Index i = 0; i < n; ++i) Xw.row(i) *= std::sqrt(mu(i));
        Eigen::VectorXd zw = z;
        for (Eigen::Index i = 0; i < n; ++i) zw(i) *= std::sqrt(mu(i));
        const Eigen::VectorXd next = Xw.colPivHouseholderQr().solve(zw);
        const double delta = (next - beta).norm();
        beta = next;
        eta = X * beta;
        mu = eta.array().exp().matrix();
        if (delta < 1e-12) break;
    }
    return beta;
}

struct FitOptions {
    MinimizeOptions optim;  // defaults: 500 iterations, rel 1e-10, grad 1e-5
    int restarts = 0;
    std::uint64_t seed = 1;
    bool compute_se = true;
};

struct FitResult {
    std::vector<std::string> names;
    std::vector<double> estimates;   // natural scale
    std::vector<double> std_errors;  // natural scale; NaN when unavailable
    bool se_available = false;
    double loglik = -std::numeric_limits<double>::infinity();
    double grad_norm = std::numeric_limits<double>::infinity();
    int iterations = 0;
    bool converged = false;
    bool used_fallback = false;
    double info_rcond = std::numeric_limits<double>::quiet_NaN();
    std::vector<std::string> warnings;
    Eigen::VectorXd packed;

    double estimate(const std::string& name) const {
        for (std::size_t k = 0; k < names.size(); ++k)
            if (names[k] == name) return estimates[k];
        throw ConfigError("no parameter '" + name + "' in the fit");
    }
    double std_error(const std::string& name) const {
        for (std::size_t k = 0; k < names.size(); ++k)
            if (names[k] == name) return std_errors[k];
        throw ConfigError("no parameter '" + name + "' in the fit");
    }
};

namespace estimate_detail {

// Pooled design [1 | unit covariates | group covariates] ignoring grouping.
inline void pooled_design(const BoundModel& bound, Eigen::MatrixXd& X, Eigen::VectorXd& y) {
    const auto& data = bound.likelihood_data();
    const std::size_t nu = bound.unit_beta_count();
    const std::size_t ng = bound.group_beta_count();
    const std::size_t rows = bound.n_units();
    X.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(1 + nu + ng));
    y.resize(static_cast<Eigen::Index>(rows));
    Eigen::Index r = 0;
    for (std::size_t i = 0; i < data.n_groups(); ++i) {
        const auto& g = data.groups[i];
        for (std::size_t j = 0; j < g.size(); ++j, ++r) {
            y(r) = g.y[j];
            X(r, 0) = 1.0;
            for (std::size_t k = 0; k < nu; ++k) X(r, 1 + static_cast<Eigen::Index>(k)) = g.x[j][k];
            for (std::size_t k = 0; k < ng; ++k)
                X(r, 1 + static_cast<Eigen::Index>(nu + k)) = bound.group_designs()[i][k];
        }
    }
}

inline void set_if(std::vector<double>& nat, const BoundModel& bound, const std::string& name,
                   double value) {
    if (auto k = bound.find_param(name)) nat[*k] = value;
}

inline double group_mean_dispersion(const BoundModel& bound, const Eigen::VectorXd& fitted,
                                    std::vector<double>& ratios) {
    // per-group ratio of observed to fitted totals; its spread carries the
    // heterogeneity signal, its sampling noise is subtracted by the caller
    const auto& data = bound.likelihood_data();
    ratios.clear();
    double noise = 0.0;
    Eigen::Index r = 0;
    for (const auto& g : data.groups) {
        double sy = 0.0, sm = 0.0;
        for (std::size_t j = 0; j < g.size(); ++j, ++r) {
            sy += g.y[j];
            sm += fitted(r);
        }
        if (sm > 0.0) {
            ratios.push_back(sy / sm);
            noise += 1.0 / sm;
        }
    }
    return ratios.empty() ? 0.0 : noise / static_cast<double>(ratios.size());
}

inline double variance(std::vector<double> v) {
    if (v.size() < 2) return 0.0;
    std::sort(v.begin(), v.end());  // order-stable accumulation
    double m = 0.0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return s / static_cast<double>(v.size());
}

}  // namespace estimate_detail

// Deterministic method-of-moments initialization: a fixed-effects fit
// ignoring grouping seeds the regression block, group-mean dispersion seeds
// the heterogeneity parameters.
inline std::vector<double> default_init(const BoundModel& bound) {
    using namespace estimate_detail;
    const ModelSpec& spec = bound.spec();
    std::vector<double> nat(bound.n_params(), 0.0);

    Eigen::MatrixXd X;
    Eigen::VectorXd y;
    pooled_design(bound, X, y);
    const std::size_t nu = bound.unit_beta_count(), ng = bound.group_beta_count();

    auto assign_linear = [&](const Eigen::VectorXd& coef, double unit_sign) {
        if (bound.intercept_index() != BoundModel::npos) nat[bound.intercept_index()] = coef(0);
        for (std::size_t k = 0; k < nu; ++k)
            nat[bound.unit_beta_index() + k] = unit_sign * coef(1 + static_cast<Eigen::Index>(k));
        for (std::size_t k = 0; k < ng; ++k)
            nat[bound.group_beta_index() + k] = coef(1 + static_cast<Eigen::Index>(nu + k));
    };

    switch (spec.family) {
        case Family::poisson: {
            const Eigen::VectorXd coef = poisson_irls(X, y);
            assign_linear(coef, 1.0);
            const Eigen::VectorXd fitted = (X * coef).array().exp().matrix();
            std::vector<double> ratios;
            const double noise = group_mean_dispersion(bound, fitted, ratios);
            const double v = std::max(variance(ratios) - noise, 1e-3);
            const double a = std::clamp(1.0 / v, 0.05, 1e4);
            set_if(nat, bound, "A", a);
            set_if(nat, bound, "B", std::exp(coef(0)) / a);
            break;
        }
        case Family::gaussian: {
            const Eigen::VectorXd coef = ols(X, y);
            assign_linear(coef, 1.0);
            const Eigen::VectorXd resid = y - X * coef;
            const auto& data = bound.likelihood_data();
            std::vector<double> gmeans;
            double mean_inv_n = 0.0;
            Eigen::Index r = 0;
            double ss_within = 0.0;
            std::size_t n_within = 0;
            for (const auto& g : data.groups) {
                double m = 0.0;
                for (std::size_t j = 0; j < g.size(); ++j) m += resid(r + static_cast<Eigen::Index>(j));
                m /= static_cast<double>(g.size());
                for (std::size_t j = 0; j < g.size(); ++j) {
                    const double d = resid(r + static_cast<Eigen::Index>(j)) - m;
                    ss_within += d * d;
                }
                n_within += g.size();
                r += static_cast<Eigen::Index>(g.size());
                gmeans.push_back(m);
                mean_inv_n += 1.0 / static_cast<double>(g.size());
            }
            mean_inv_n /= static_cast<double>(data.n_groups());
            const double sigma2 = spec.estimate_sigma2
                                      ? std::max(ss_within / std::max<std::size_t>(n_within, 1), 1e-3)
                                      : spec.sigma2;
            set_if(nat, bound, "sigma2", sigma2);
            const double kappa2 =
                std::max(variance(gmeans) - sigma2 * mean_inv_n, 1e-2 * sigma2);
            set_if(nat, bound, "kappa2", kappa2);
            set_if(nat, bound, "lambda", coef(0));
            break;
        }
        case Family::binomial: {
            const auto& data = bound.likelihood_data();
            std::vector<double> props;
            double sy = 0.0, sn = 0.0, mean_inv_tr = 0.0;
            for (const auto& g : data.groups) {
                double gy = 0.0, gn = 0.0;
                for (std::size_t j = 0; j < g.size(); ++j) {
                    gy += g.y[j];
                    gn += g.trials.empty() ? 1.0 : g.trials[j];
                }
                props.push_back(gy / gn);
                mean_inv_tr += 1.0 / gn;
                sy += gy;
                sn += gn;
            }
            mean_inv_tr /= static_cast<double>(data.n_groups());
            const double pbar = std::clamp(sy / sn, 1e-3, 1.0 - 1e-3);
            const double v = variance(props);
            const double excess = std::max(v - pbar * (1.0 - pbar) * mean_inv_tr, 1e-4);
            const double prec = std::clamp(pbar * (1.0 - pbar) / excess - 1.0, 0.5, 1e4);
            if (bound.intercept_index() != BoundModel::npos)
                nat[bound.intercept_index()] = logit(pbar);
            set_if(nat, bound, "precision", prec);
            set_if(nat, bound, "A", pbar * prec);
            set_if(nat, bound, "B", (1.0 - pbar) * prec);
            break;
        }
        case Family::gamma: {
            const Eigen::VectorXd logy = y.array().log().matrix();
            const Eigen::VectorXd coef = ols(X, logy);
            // mu(x) = mu_0 e^{-x'beta}: the unit block flips sign
            assign_linear(coef, -1.0);
            const double c = 3.0;
            set_if(nat, bound, "C", c);
            set_if(nat, bound, "D", (c - 1.0) * std::exp(coef(0)));
            set_if(nat, bound, "A", spec.gamma_shape);
            break;
        }
    }
    return nat;
}

struct StandardErrors {
    std::vector<double> natural;  // NaN when unavailable
    bool available = false;
    double rcond = std::numeric_limits<double>::quiet_NaN();
    std::string warning;
};

// Delta-method standard errors from the observed information: central
// finite-difference Hessian of the negative log-likelihood on the packed
// scale, inverted through its Cholesky factor.
inline StandardErrors standard_errors(const BoundModel& bound, const Eigen::VectorXd& packed) {
    const auto negloglik = [&](const Eigen::VectorXd& u) { return -bound.loglik_packed(u); };
    const Eigen::MatrixXd H = fd_hessian(negloglik, packed);
    const Eigen::Index p = H.rows();

    StandardErrors out;
    out.natural.assign(static_cast<std::size_t>(p), std::numeric_limits<double>::quiet_NaN());

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(H);
    const double lmin = eig.eigenvalues().minCoeff();
    const double lmax = eig.eigenvalues().maxCoeff();
    out.rcond = lmax > 0.0 ? lmin / lmax : 0.0;
    if (!(lmin > 0.0)) {
        out.warning = "observed information is not positive definite; standard errors withheld";
        return out;
    }

    Eigen::LLT<Eigen::MatrixXd> llt(H);
    if (llt.info() != Eigen::Success) {
        out.warning = "observed information failed to factorize; standard errors withheld";
        return out;
    }
    const Eigen::MatrixXd cov = llt.solve(Eigen::MatrixXd::Identity(p, p));
    for (Eigen::Index k = 0; k < p; ++k) {
        const double se_packed = std::sqrt(std::max(cov(k, k), 0.0));
        out.natural[static_cast<std::size_t>(k)] =
            bound.jacobian_entry(packed, static_cast<std::size_t>(k)) * se_packed;
    }
    out.available = true;
    if (out.rcond < 1e-12)
        out.warning = "observed information is nearly singular; standard errors are unreliable";
    return out;
}

// Maximize the closed-form marginal log-likelihood over the packed vector.
inline FitResult fit(const BoundModel& bound, const std::vector<double>* init_natural = nullptr,
                     const FitOptions& opts = {}) {
    const auto objective = [&](const Eigen::VectorXd& u) -> double {
        try {
            const double ll = bound.loglik_packed(u);
            return std::isfinite(ll) ? -ll : 1e30;
        } catch (const Error&) {
            return 1e30;
        }
    };

    const std::vector<double> start_nat = init_natural ? *init_natural : default_init(bound);
    const Eigen::VectorXd start = bound.pack(start_nat);

    MinimizeResult best = minimize_bfgs(objective, start, opts.optim);
    if (opts.restarts > 0) {
        std::mt19937_64 rng(opts.seed);
        std::normal_distribution<double> jitter(0.0, 0.25);
        for (int r = 0; r < opts.restarts; ++r) {
            Eigen::VectorXd s2 = start;
            for (Eigen::Index k = 0; k < s2.size(); ++k) s2(k) += jitter(rng);
            const MinimizeResult alt = minimize_bfgs(objective, s2, opts.optim);
            if (alt.f < best.f) best = alt;
        }
    }

    // Newton polish: park the result on the critical point of a low-noise
    // five-point gradient, a fixpoint determined by the objective alone
    for (int polish = 0; polish < 3; ++polish) {
        const Eigen::VectorXd g = fd_gradient4(objective, best.x, 1e-2);
        const Eigen::MatrixXd H = fd_hessian(objective, best.x);
        const Eigen::LLT<Eigen::MatrixXd> llt(H);
        if (llt.info() != Eigen::Success) break;
        const Eigen::VectorXd step = -llt.solve(g);
        if (!step.allFinite() || step.norm() > 0.05 * (1.0 + best.x.norm())) break;
        const Eigen::VectorXd xn = best.x + step;
        const double fn = objective(xn);
        if (fn > best.f + 1e-11 * std::max(1.0, std::abs(best.f))) break;
        best.x = xn;
        best.f = std::min(fn, best.f);
        if (step.norm() < 1e-12 * (1.0 + best.x.norm())) break;
    }
    best.gradient = fd_gradient(objective, best.x, opts.optim.grad_step);
    best.grad_norm = best.gradient.norm();
    best.converged = best.grad_norm < opts.optim.grad_tol;

    FitResult res;
    for (const auto& p : bound.params()) res.names.push_back(p.name);
    res.packed = best.x;
    res.estimates = bound.unpack(best.x);
    res.loglik = -best.f;
    res.grad_norm = best.grad_norm;
    res.iterations = best.iterations;
    res.converged = best.converged;
    res.used_fallback = best.used_fallback;
    res.std_errors.assign(bound.n_params(), std::numeric_limits<double>::quiet_NaN());
    if (!best.converged)
        res.warnings.push_back("optimizer did not reach the convergence criteria: " +
                               best.message);

    if (opts.compute_se) {
        const StandardErrors se = standard_errors(bound, best.x);
        res.se_available = se.available;
        res.info_rcond = se.rcond;
        if (se.available) res.std_errors = se.natural;
        if (!se.warning.empty()) res.warnings.push_back(se.warning);
    }
    return res;
}

struct ProfilePoint {
    double value = 0.0;
    double loglik = -std::numeric_limits<double>::infinity();
    bool converged = false;
};

// Log-likelihood maximized over the remaining parameters at each grid value
// of one named parameter.
inline std::vector<ProfilePoint> profile_loglik(const BoundModel& bound, const std::string& name,
                                                const std::vector<double>& grid,
                                                const FitOptions& opts = {}) {
    const std::size_t fixed = bound.param_index(name);
    const std::size_t p = bound.n_params();
    if (p == 1) {
        std::vector<ProfilePoint> out;
        for (double v : grid) {
            std::vector<double> nat{v};
            out.push_back({v, bound.loglik_natural(nat), true});
        }
        return out;
    }

    std::vector<double> start_nat = default_init(bound);
    std::vector<ProfilePoint> out;
    for (double v : grid) {
        start_nat[fixed] = v;
        const Eigen::VectorXd full = bound.pack(start_nat);
        const double fixed_packed = full(static_cast<Eigen::Index>(fixed));

        auto expand = [&](const Eigen::VectorXd& u_red) {
            Eigen::VectorXd u(p);
            Eigen::Index r = 0;
            for (std::size_t k = 0; k < p; ++k)
                u(static_cast<Eigen::Index>(k)) =
                    k == fixed ? fixed_packed : u_red(r++);
            return u;
        };
        const auto objective = [&](const Eigen::VectorXd& u_red) -> double {
            try {
                const double ll = bound.loglik_packed(expand(u_red));
                return std::isfinite(ll) ? -ll : 1e30;
            } catch (const Error&) {
                return 1e30;
            }
        };

        Eigen::VectorXd red(p - 1);
        Eigen::Index r = 0;
        for (std::size_t k = 0; k < p; ++k)
            if (k != fixed) red(r++) = full(static_cast<Eigen::Index>(k));
        const MinimizeResult m = minimize_bfgs(objective, red, opts.optim);
        out.push_back({v, -m.f, m.converged});

        // warm start the next grid point
        const std::vector<double> warm = bound.unpack(expand(m.x));
        start_nat = warm;
    }
    return out;
}

}  // namespace cglmm
