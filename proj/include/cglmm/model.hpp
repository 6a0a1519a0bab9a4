#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "cglmm/conjugacy.hpp"
#include "cglmm/data.hpp"
#include "cglmm/errors.hpp"
#include "cglmm/family.hpp"
#include "cglmm/likelihood.hpp"
#include "cglmm/prior.hpp"

namespace cglmm {

// Model specification: family, structural constants, covariate roles and
// the identifiability convention. An intercept (flag or a constant-1 unit
// covariate column) enters the prior mean with the random-effect mean
// pinned: Poisson B = e^{eta}/A, Gamma D = (C-1)e^{eta}, Gaussian lambda =
// eta.
struct ModelSpec {
    Family family = Family::poisson;
    std::string group_column = "group";
    std::string response_column = "y";
    std::string trials_column;  // optional, binomial only

    bool intercept = false;
    std::vector<std::string> unit_covariates;
    std::vector<std::string> group_covariates;

    double sigma2 = 1.0;  // gaussian dispersion
    bool estimate_sigma2 = false;
    double gamma_shape = 1.0;  // gamma response shape A
    bool estimate_gamma_shape = false;
    std::optional<double> fixed_poisson_shape;  // fixes the poisson prior shape A

    bool structured_mean() const { return intercept || !group_covariates.empty(); }

    void validate() const {
        if (family == Family::binomial && !unit_covariates.empty())
            throw UnitCovariateError(
                "binomial models cannot carry unit-level covariates: no non-trivial "
                "solution set exists");
        if (!(sigma2 > 0.0)) throw ConfigError("sigma2 must be positive");
        if (!(gamma_shape > 0.0)) throw ConfigError("gamma shape must be positive");
        if (fixed_poisson_shape && !(*fixed_poisson_shape > 0.0))
            throw ConfigError("fixed poisson shape must be positive");
        if (family != Family::gaussian && estimate_sigma2)
            throw ConfigError("sigma2 is a gaussian parameter");
        if (family != Family::gamma && estimate_gamma_shape)
            throw ConfigError("the response shape is a gamma parameter");
    }
};

enum class ParamScale { identity, log_pos, log_above_one };

struct ParamInfo {
    std::string name;
    ParamScale scale;
};

// A validated, immutable pairing of a ModelSpec with a dataset: design
// vectors are precomputed per unit and per group, and the free parameters
// are mapped onto an unconstrained vector.
class BoundModel {
  public:
    static constexpr std::size_t npos = static_cast<std::size_t>(-1);

    BoundModel(ModelSpec spec, const GroupedDataset& data) : spec_(std::move(spec)) {
        spec_.validate();
        build(data);
    }

    const ModelSpec& spec() const { return spec_; }
    const std::vector<ParamInfo>& params() const { return params_; }
    std::size_t n_params() const { return params_.size(); }
    std::size_t n_groups() const { return lik_data_.n_groups(); }
    std::size_t n_units() const { return lik_data_.n_units(); }
    const GroupedDataset& likelihood_data() const { return lik_data_; }
    const std::vector<std::vector<double>>& group_designs() const { return group_design_; }

    std::size_t param_index(const std::string& name) const {
        for (std::size_t k = 0; k < params_.size(); ++k)
            if (params_[k].name == name) return k;
        throw ConfigError("unknown parameter '" + name + "'");
    }

    std::optional<std::size_t> find_param(const std::string& name) const {
        for (std::size_t k = 0; k < params_.size(); ++k)
            if (params_[k].name == name) return k;
        return std::nullopt;
    }

    Eigen::VectorXd pack(const std::vector<double>& natural) const {
        if (natural.size() != params_.size())
            throw ConfigError("parameter vector length mismatch");
        Eigen::VectorXd u(static_cast<Eigen::Index>(natural.size()));
        for (std::size_t k = 0; k < natural.size(); ++k) {
            const double v = natural[k];
            if (!std::isfinite(v)) throw ConfigError("non-finite parameter " + params_[k].name);
            switch (params_[k].scale) {
                case ParamScale::identity: u(k) = v; break;
                case ParamScale::log_pos:
                    if (!(v > 0.0))
                        throw ConfigError(params_[k].name + " must be positive");
                    u(k) = std::log(v);
                    break;
                case ParamScale::log_above_one:
                    if (!(v > 1.0))
                        throw ConfigError(params_[k].name + " must exceed 1");
                    u(k) = std::log(v - 1.0);
                    break;
            }
        }
        return u;
    }

    std::vector<double> unpack(const Eigen::VectorXd& u) const {
        if (static_cast<std::size_t>(u.size()) != params_.size())
            throw ConfigError("parameter vector length mismatch");
        std::vector<double> natural(params_.size());
        for (std::size_t k = 0; k < params_.size(); ++k) {
            switch (params_[k].scale) {
                case ParamScale::identity: natural[k] = u(k); break;
                case ParamScale::log_pos: natural[k] = std::exp(u(k)); break;
                case ParamScale::log_above_one: natural[k] = 1.0 + std::exp(u(k)); break;
            }
        }
        return natural;
    }

    // d(natural_k) / d(packed_k); the packing is coordinatewise so the
    // jacobian is diagonal.
    double jacobian_entry(const Eigen::VectorXd& u, std::size_t k) const {
        switch (params_[k].scale) {
            case ParamScale::identity: return 1.0;
            case ParamScale::log_pos: return std::exp(u(k));
            case ParamScale::log_above_one: return std::exp(u(k));
        }
        return 1.0;
    }

    FamilyKernel kernel(const std::vector<double>& nat) const {
        switch (spec_.family) {
            case Family::gaussian:
                return FamilyKernel::gaussian(idx_sigma2_ != npos ? nat[idx_sigma2_]
                                                                  : spec_.sigma2);
            case Family::poisson: return FamilyKernel::poisson();
            case Family::binomial: return FamilyKernel::binomial(1);
            case Family::gamma:
                return FamilyKernel::gamma(idx_shape_ != npos ? nat[idx_shape_]
                                                              : spec_.gamma_shape);
        }
        return FamilyKernel::poisson();
    }

    // One prior per group when the mean is structured, else a single shared
    // prior.
    std::vector<ConjugatePrior> group_priors(const std::vector<double>& nat) const {
        std::vector<ConjugatePrior> out;
        const ConjugatePrior base = base_prior(nat);
        if (!spec_.structured_mean()) {
            out.push_back(base);
            return out;
        }
        out.reserve(n_groups());
        for (std::size_t i = 0; i < n_groups(); ++i)
            out.push_back(prior_with_mean(spec_.family, base, eta(nat, i)));
        return out;
    }

    std::optional<CovariateTransform> transform(const std::vector<double>& nat) const {
        if (n_unit_beta_ == 0) return std::nullopt;
        std::vector<double> beta(nat.begin() + static_cast<long>(idx_unit_beta_),
                                 nat.begin() + static_cast<long>(idx_unit_beta_ + n_unit_beta_));
        return CovariateTransform::linear(spec_.family, std::move(beta));
    }

    double loglik_natural(const std::vector<double>& nat, std::size_t* empty = nullptr) const {
        const FamilyKernel k = kernel(nat);
        const auto priors = group_priors(nat);
        const auto t = transform(nat);
        return total_loglik(k, priors, t ? &*t : nullptr, lik_data_, empty);
    }

    double loglik_packed(const Eigen::VectorXd& u) const {
        return loglik_natural(unpack(u));
    }

    // Group-level linear predictor eta_i = b0 + x_i' beta_g.
    double eta(const std::vector<double>& nat, std::size_t group) const {
        double e = idx_intercept_ != npos ? nat[idx_intercept_] : 0.0;
        for (std::size_t k = 0; k < n_group_beta_; ++k)
            e += nat[idx_group_beta_ + k] * group_design_[group][k];
        return e;
    }

    std::size_t intercept_index() const { return idx_intercept_; }
    std::size_t unit_beta_index() const { return idx_unit_beta_; }
    std::size_t unit_beta_count() const { return n_unit_beta_; }
    std::size_t group_beta_index() const { return idx_group_beta_; }
    std::size_t group_beta_count() const { return n_group_beta_; }

  private:
    ConjugatePrior base_prior(const std::vector<double>& nat) const {
        switch (spec_.family) {
            case Family::gaussian: {
                const double kappa2 = nat[idx_kappa2_];
                const double lambda = idx_lambda_ != npos ? nat[idx_lambda_] : 0.0;
                return ConjugatePrior::gaussian_mean_var(lambda, kappa2);
            }
            case Family::poisson: {
                const double a = idx_prior_a_ != npos ? nat[idx_prior_a_]
                                                      : *spec_.fixed_poisson_shape;
                const double b = idx_prior_b_ != npos ? nat[idx_prior_b_] : 1.0 / a;
                return ConjugatePrior::poisson_gamma(a, b);
            }
            case Family::binomial: {
                if (idx_precision_ != npos) {
                    const double prec = nat[idx_precision_];
                    return {0.5 * prec, prec};  // mean rewritten per group
                }
                return ConjugatePrior::binomial_beta(nat[idx_prior_a_], nat[idx_prior_b_]);
            }
            case Family::gamma: {
                const double c = nat[idx_prior_c_];
                const double d = idx_prior_d_ != npos ? nat[idx_prior_d_] : c - 1.0;
                return ConjugatePrior::gamma_inverse_gamma(c, d);
            }
        }
        return {1.0, 1.0};
    }

    void build(const GroupedDataset& data) {
        // resolve columns
        std::vector<std::size_t> unit_cols, group_cols;
        std::string absorbed_intercept;
        for (const auto& name : spec_.unit_covariates) {
            const std::size_t c = data.column(name);
            if (column_is_constant_one(data, c)) {
                if (!absorbed_intercept.empty())
                    throw DataError("more than one constant unit covariate column");
                if (spec_.intercept)
                    throw DataError("both model.intercept and a constant covariate column '" +
                                    name + "' were given");
                absorbed_intercept = name;
                continue;
            }
            unit_cols.push_back(c);
            unit_names_.push_back(name);
        }
        for (const auto& name : spec_.group_covariates) {
            group_cols.push_back(data.column(name));
            group_names_.push_back(name);
        }
        if (!absorbed_intercept.empty()) spec_.intercept = true;

        check_interactions(data);

        // support and constancy validation, and the reduced likelihood view
        const FamilyKernel support_kernel =
            spec_.family == Family::binomial ? FamilyKernel::binomial(1)
            : spec_.family == Family::gamma  ? FamilyKernel::gamma(spec_.gamma_shape)
            : spec_.family == Family::gaussian ? FamilyKernel::gaussian(spec_.sigma2)
                                               : FamilyKernel::poisson();
        lik_data_.covariates = unit_names_;
        for (const auto& g : data.groups) {
            GroupedDataset::Group lg;
            lg.id = g.id;
            for (std::size_t j = 0; j < g.size(); ++j) {
                const double y = g.y[j];
                double trials = 1.0;
                if (spec_.family == Family::binomial) {
                    trials = g.trials.empty() ? 1.0 : g.trials[j];
                    try {
                        support_kernel.with_trials(trials).check_support(y);
                    } catch (const Error& e) {
                        throw DataError("group '" + g.id + "', unit " + std::to_string(j + 1) +
                                        ": " + e.what());
                    }
                    lg.trials.push_back(trials);
                } else {
                    try {
                        support_kernel.check_support(y);
                    } catch (const Error& e) {
                        throw DataError("group '" + g.id + "', unit " + std::to_string(j + 1) +
                                        ": " + e.what());
                    }
                }
                lg.y.push_back(y);
                std::vector<double> row;
                row.reserve(unit_cols.size());
                for (std::size_t c : unit_cols) row.push_back(g.x[j][c]);
                lg.x.push_back(std::move(row));
            }
            lik_data_.groups.push_back(std::move(lg));

            // group covariates must be constant within the group
            std::vector<double> gdes;
            for (std::size_t k = 0; k < group_cols.size(); ++k) {
                const std::size_t c = group_cols[k];
                const double v0 = g.x.empty() ? 0.0 : g.x[0][c];
                for (std::size_t j = 1; j < g.size(); ++j)
                    if (g.x[j][c] != v0)
                        throw DataError("group covariate '" + group_names_[k] +
                                        "' is not constant within group '" + g.id + "'");
                gdes.push_back(v0);
            }
            group_design_.push_back(std::move(gdes));
        }

        layout_parameters(absorbed_intercept);
    }

    static bool column_is_constant_one(const GroupedDataset& data, std::size_t c) {
        bool any = false;
        for (const auto& g : data.groups)
            for (const auto& row : g.x) {
                if (row[c] != 1.0) return false;
                any = true;
            }
        return any;
    }

    void check_interactions(const GroupedDataset& data) const {
        for (const auto& name : data.covariates) {
            const auto colon = name.find(':');
            if (colon == std::string::npos) continue;
            const std::string a = name.substr(0, colon), b = name.substr(colon + 1);
            if (!data.has_column(a) || !data.has_column(b)) continue;
            const std::size_t ci = data.column(name), ca = data.column(a), cb = data.column(b);
            for (const auto& g : data.groups)
                for (std::size_t j = 0; j < g.size(); ++j) {
                    const double prod = g.x[j][ca] * g.x[j][cb];
                    if (std::abs(g.x[j][ci] - prod) > 1e-9 * std::max(1.0, std::abs(prod)))
                        throw DataError("interaction column '" + name +
                                        "' is not the product of its parents in group '" + g.id +
                                        "'");
                }
        }
    }

    void layout_parameters(const std::string& absorbed_intercept) {
        auto add = [&](const std::string& name, ParamScale s) {
            params_.push_back({name, s});
            return params_.size() - 1;
        };
        if (spec_.intercept)
            idx_intercept_ = add(absorbed_intercept.empty() ? "Intercept" : absorbed_intercept,
                                 ParamScale::identity);
        idx_unit_beta_ = params_.size();
        n_unit_beta_ = unit_names_.size();
        for (const auto& n : unit_names_) add(n, ParamScale::identity);
        idx_group_beta_ = params_.size();
        n_group_beta_ = group_names_.size();
        for (const auto& n : group_names_) add(n, ParamScale::identity);

        switch (spec_.family) {
            case Family::gaussian:
                if (!spec_.structured_mean()) idx_lambda_ = add("lambda", ParamScale::identity);
                idx_kappa2_ = add("kappa2", ParamScale::log_pos);
                if (spec_.estimate_sigma2) idx_sigma2_ = add("sigma2", ParamScale::log_pos);
                break;
            case Family::poisson:
                if (!spec_.fixed_poisson_shape) idx_prior_a_ = add("A", ParamScale::log_pos);
                if (!spec_.structured_mean()) idx_prior_b_ = add("B", ParamScale::log_pos);
                break;
            case Family::binomial:
                if (spec_.structured_mean()) {
                    idx_precision_ = add("precision", ParamScale::log_pos);
                } else {
                    idx_prior_a_ = add("A", ParamScale::log_pos);
                    idx_prior_b_ = add("B", ParamScale::log_pos);
                }
                break;
            case Family::gamma:
                idx_prior_c_ = add("C", spec_.structured_mean() ? ParamScale::log_above_one
                                                                : ParamScale::log_pos);
                if (!spec_.structured_mean()) idx_prior_d_ = add("D", ParamScale::log_pos);
                if (spec_.estimate_gamma_shape) idx_shape_ = add("A", ParamScale::log_pos);
                break;
        }
    }

    ModelSpec spec_;
    GroupedDataset lik_data_;  // x rows reduced to the unit covariates
    std::vector<std::string> unit_names_, group_names_;
    std::vector<std::vector<double>> group_design_;
    std::vector<ParamInfo> params_;

    std::size_t idx_intercept_ = npos;
    std::size_t idx_unit_beta_ = 0, n_unit_beta_ = 0;
    std::size_t idx_group_beta_ = 0, n_group_beta_ = 0;
    std::size_t idx_lambda_ = npos, idx_kappa2_ = npos, idx_sigma2_ = npos;
    std::size_t idx_prior_a_ = npos, idx_prior_b_ = npos;
    std::size_t idx_precision_ = npos;
    std::size_t idx_prior_c_ = npos, idx_prior_d_ = npos, idx_shape_ = npos;
};

inline BoundModel bind(ModelSpec spec, const GroupedDataset& data) {
    return BoundModel(std::move(spec), data);
}

}  // namespace cglmm
