#pragma once

#include <cmath>
#include <fstream>
#include <json.hpp>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "cglmm/config.hpp"
#include "cglmm/csv.hpp"
#include "cglmm/errors.hpp"
#include "cglmm/estimate.hpp"
#include "cglmm/model.hpp"
#include "cglmm/oracle.hpp"
#include "cglmm/simulate.hpp"

namespace cglmm {

// Builders mapping the flat key-value configuration onto the library types.

inline ModelSpec spec_from_config(const Config& cfg) {
    ModelSpec spec;
    spec.family = family_from_name(cfg.require("model.family"));
    spec.group_column = cfg.get("model.group", "group");
    spec.response_column = cfg.get("model.response", "y");
    spec.trials_column = cfg.get("model.trials", "");
    spec.intercept = cfg.get_bool("model.intercept", false);
    spec.unit_covariates = cfg.get_list("model.unit_covariates");
    spec.group_covariates = cfg.get_list("model.group_covariates");
    spec.sigma2 = cfg.get_double("model.sigma2", 1.0);
    spec.estimate_sigma2 = cfg.get_bool("model.estimate_sigma2", false);
    spec.gamma_shape = cfg.get_double("model.gamma_shape", 1.0);
    spec.estimate_gamma_shape = cfg.get_bool("model.estimate_gamma_shape", false);
    if (cfg.has("model.fix_A"))
        spec.fixed_poisson_shape = cfg.get_double("model.fix_A", 0.0);
    spec.validate();
    return spec;
}

inline FitOptions fit_options_from_config(const Config& cfg) {
    FitOptions opts;
    opts.optim.max_iter = static_cast<int>(cfg.get_int("fit.max_iter", 500));
    opts.optim.rel_f_tol = cfg.get_double("fit.rel_tol", 1e-10);
    opts.optim.grad_tol = cfg.get_double("fit.grad_tol", 1e-5);
    opts.restarts = static_cast<int>(cfg.get_int("fit.restarts", 0));
    opts.seed = static_cast<std::uint64_t>(cfg.get_int("fit.seed", 1));
    opts.compute_se = cfg.get_bool("fit.se", true);
    return opts;
}

inline QuadratureConfig quad_config_from_config(const Config& cfg) {
    QuadratureConfig qc;
    qc.nodes = static_cast<int>(cfg.get_int("oracle.nodes", 201));
    qc.recenter = cfg.get_bool("oracle.recenter", true);
    qc.mc_samples = static_cast<int>(cfg.get_int("oracle.mc_samples", 10000));
    qc.seed = static_cast<std::uint64_t>(cfg.get_int("oracle.seed", 1));
    return qc;
}

namespace run_detail {

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, sep)) {
        item = config_detail::trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

// "name=value" pairs
inline std::vector<std::pair<std::string, double>> parse_assignments(const std::string& s,
                                                                     const std::string& key) {
    std::vector<std::pair<std::string, double>> out;
    for (const auto& entry : split(s, ',')) {
        const auto eq = entry.find('=');
        if (eq == std::string::npos)
            throw ConfigError("key '" + key + "': expected name=value, got '" + entry + "'");
        const std::string name = config_detail::trim(entry.substr(0, eq));
        try {
            out.emplace_back(name, std::stod(entry.substr(eq + 1)));
        } catch (const std::exception&) {
            throw ConfigError("key '" + key + "': cannot parse '" + entry + "'");
        }
    }
    return out;
}

// comma split that ignores commas inside parentheses
inline std::vector<std::string> split_entries(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    int depth = 0;
    for (char ch : s) {
        if (ch == '(') ++depth;
        if (ch == ')') --depth;
        if (ch == ',' && depth == 0) {
            cur = config_detail::trim(cur);
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else {
            cur += ch;
        }
    }
    cur = config_detail::trim(cur);
    if (!cur.empty()) out.push_back(cur);
    return out;
}

// covariate generator entries: name:normal | name:binary(p) |
// name:group_normal | name:group_binary(p) | name:interaction(a,b);
// the generator kind follows the last ':'.
inline std::vector<CovariateGen> parse_covariate_gens(const std::string& s) {
    std::vector<CovariateGen> out;
    for (const auto& entry : split_entries(s)) {
        const auto colon = entry.rfind(':');
        if (colon == std::string::npos)
            throw ConfigError("sim.covariates: expected name:kind, got '" + entry + "'");
        CovariateGen gen;
        gen.name = config_detail::trim(entry.substr(0, colon));
        std::string kind = config_detail::trim(entry.substr(colon + 1));
        std::string arg;
        const auto paren = kind.find('(');
        if (paren != std::string::npos) {
            if (kind.back() != ')')
                throw ConfigError("sim.covariates: malformed '" + entry + "'");
            arg = kind.substr(paren + 1, kind.size() - paren - 2);
            kind = kind.substr(0, paren);
        }
        if (kind == "group_normal" || kind == "group_binary") {
            gen.group_level = true;
            kind = kind.substr(6);
        }
        if (kind == "normal") {
            gen.kind = CovariateGen::Kind::normal;
        } else if (kind == "binary") {
            gen.kind = CovariateGen::Kind::binary;
            gen.p = arg.empty() ? 0.5 : std::stod(arg);
        } else if (kind == "interaction") {
            gen.kind = CovariateGen::Kind::interaction;
            const auto ab = split(arg, ',');
            if (ab.size() != 2)
                throw ConfigError("sim.covariates: interaction needs two parents in '" + entry +
                                  "'");
            gen.parent_a = ab[0];
            gen.parent_b = ab[1];
        } else {
            throw ConfigError("sim.covariates: unknown kind '" + kind + "'");
        }
        out.push_back(std::move(gen));
    }
    return out;
}

}  // namespace run_detail

inline SimulationPlan plan_from_config(const Config& cfg) {
    SimulationPlan plan;
    plan.family = family_from_name(cfg.require("model.family"));
    plan.groups = static_cast<std::size_t>(cfg.get_int("sim.groups", 50));
    for (const auto& tok : run_detail::split(cfg.get("sim.units", "4"), ','))
        plan.units_per_group.push_back(static_cast<std::size_t>(std::stoul(tok)));
    plan.covariates = run_detail::parse_covariate_gens(cfg.get("sim.covariates", ""));
    if (cfg.has("sim.intercept")) {
        plan.intercept = true;
        plan.intercept_value = cfg.get_double("sim.intercept", 0.0);
    }
    plan.beta = run_detail::parse_assignments(cfg.get("sim.beta", ""), "sim.beta");
    plan.beta_group =
        run_detail::parse_assignments(cfg.get("sim.beta_group", ""), "sim.beta_group");
    plan.lambda = cfg.get_double("sim.lambda", 0.0);
    plan.kappa2 = cfg.get_double("sim.kappa2", 1.0);
    plan.sigma2 = cfg.get_double("sim.sigma2", 1.0);
    plan.prior_a = cfg.get_double("sim.A", 1.0);
    plan.prior_b = cfg.get_double("sim.B", 1.0);
    plan.ig_c = cfg.get_double("sim.C", 2.0);
    plan.ig_d = cfg.get_double("sim.D", 1.0);
    plan.shape = cfg.get_double("sim.shape", 1.0);
    plan.trials = cfg.get_double("sim.trials", 1.0);
    plan.seed = static_cast<std::uint64_t>(cfg.get_int("sim.seed", 1));
    return plan;
}

// Natural parameter vector from params.* keys; every free parameter must be
// supplied.
inline std::vector<double> params_from_config(const Config& cfg, const BoundModel& bound) {
    std::vector<double> nat(bound.n_params());
    std::vector<bool> seen(bound.n_params(), false);
    for (const auto& [name, value] : cfg.with_prefix("params.")) {
        const std::size_t k = bound.param_index(name);
        try {
            nat[k] = std::stod(value);
        } catch (const std::exception&) {
            throw ConfigError("params." + name + ": cannot parse '" + value + "'");
        }
        seen[k] = true;
    }
    std::string missing;
    for (std::size_t k = 0; k < bound.n_params(); ++k)
        if (!seen[k]) missing += (missing.empty() ? "" : ", ") + bound.params()[k].name;
    if (!missing.empty())
        throw ConfigError("missing parameter values: set params.{" + missing + "}");
    return nat;
}

inline nlohmann::json config_to_json(const Config& cfg) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [k, v] : cfg.entries()) j[k] = v;
    return j;
}

struct ValidateReport {
    double max_rel_discrepancy = 0.0;
    std::string worst_group;
    std::size_t groups_checked = 0;
    bool pass = false;
    double threshold = 1e-6;
};

// Closed form versus quadrature oracle over every group of a bound model at
// the given natural parameters.
inline ValidateReport validate_against_oracle(const BoundModel& bound,
                                              const std::vector<double>& nat,
                                              const QuadratureConfig& qc, double threshold) {
    ValidateReport rep;
    rep.threshold = threshold;
    const FamilyKernel kernel = bound.kernel(nat);
    const auto priors = bound.group_priors(nat);
    const auto t = bound.transform(nat);
    const auto& data = bound.likelihood_data();
    for (std::size_t i = 0; i < data.n_groups(); ++i) {
        const auto& g = data.groups[i];
        if (g.size() == 0) continue;
        const ConjugatePrior& prior = priors.size() == 1 ? priors[0] : priors[i];
        const GroupStats st = group_stats(kernel, t ? &*t : nullptr, g);
        const double closed =
            t ? unit_loglik(kernel, prior, st) : group_loglik(kernel, prior, st);
        const double quad = quad_group_loglik(kernel, prior, t ? &*t : nullptr, g, qc);
        const double rel = std::abs(closed - quad) / std::max(1.0, std::abs(quad));
        if (rel > rep.max_rel_discrepancy) {
            rep.max_rel_discrepancy = rel;
            rep.worst_group = g.id;
        }
        ++rep.groups_checked;
    }
    rep.pass = rep.max_rel_discrepancy < threshold;
    return rep;
}

inline void write_json(const nlohmann::json& j, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write '" + path + "'");
    out << j.dump(2) << '\n';
    if (!out) throw IoError("failed while writing '" + path + "'");
}

inline nlohmann::json fit_to_json(const BoundModel& bound, const FitResult& res,
                                  const IngestResult& ingested, const Config& cfg) {
    nlohmann::json params = nlohmann::json::array();
    for (std::size_t k = 0; k < res.names.size(); ++k) {
        nlohmann::json p;
        p["name"] = res.names[k];
        p["estimate"] = res.estimates[k];
        if (std::isfinite(res.std_errors[k]))
            p["std_error"] = res.std_errors[k];
        else
            p["std_error"] = nullptr;
        params.push_back(p);
    }
    nlohmann::json j;
    j["verb"] = "fit";
    j["model"]["family"] = family_name(bound.spec().family);
    j["data"]["groups"] = bound.n_groups();
    j["data"]["units"] = bound.n_units();
    j["data"]["dropped_rows"] = ingested.dropped_rows;
    j["parameters"] = params;
    j["loglik"] = res.loglik;
    j["convergence"]["converged"] = res.converged;
    j["convergence"]["iterations"] = res.iterations;
    j["convergence"]["grad_norm"] = res.grad_norm;
    j["convergence"]["used_fallback"] = res.used_fallback;
    if (std::isfinite(res.info_rcond)) j["convergence"]["info_rcond"] = res.info_rcond;
    j["warnings"] = res.warnings;
    j["config"] = config_to_json(cfg);
    return j;
}

}  // namespace cglmm
