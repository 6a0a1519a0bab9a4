// Command-line front end: fit, loglik, simulate, validate.

#include <CLI11.hpp>
#include <cstdio>
#include <exception>
#include <json.hpp>
#include <map>
#include <string>
#include <vector>

#include "cglmm/config.hpp"
#include "cglmm/csv.hpp"
#include "cglmm/errors.hpp"
#include "cglmm/estimate.hpp"
#include "cglmm/model.hpp"
#include "cglmm/run.hpp"
#include "cglmm/simulate.hpp"

namespace {

using cglmm::Config;

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitConvergence = 3;
constexpr int kExitIo = 4;

const std::vector<std::string> kKnownKeys = {
    "data.path", "out.path",
    "model.family", "model.group", "model.response", "model.trials", "model.intercept",
    "model.unit_covariates", "model.group_covariates", "model.sigma2", "model.estimate_sigma2",
    "model.gamma_shape", "model.estimate_gamma_shape", "model.fix_A",
    "fit.max_iter", "fit.rel_tol", "fit.grad_tol", "fit.restarts", "fit.seed", "fit.se",
    "oracle.nodes", "oracle.recenter", "oracle.mc_samples", "oracle.seed", "oracle.tol",
    "sim.groups", "sim.units", "sim.seed", "sim.covariates", "sim.beta", "sim.beta_group",
    "sim.intercept", "sim.lambda", "sim.kappa2", "sim.sigma2", "sim.A", "sim.B", "sim.C",
    "sim.D", "sim.shape", "sim.trials"};

struct VerbIo {
    std::string config_path;
    std::string data_path;
    std::string out_path;
    std::vector<std::string> sets;                   // KEY=VALUE extras
    std::map<std::string, std::string> flag_values;  // registered key flags
};

void add_common(CLI::App* sub, VerbIo& io) {
    sub->add_option("--config", io.config_path, "flat key = value configuration file");
    sub->add_option("--data", io.data_path, "input CSV (same as data.path)");
    sub->add_option("--out", io.out_path, "output path (same as out.path)");
    sub->add_option("--set", io.sets, "extra KEY=VALUE entries (repeatable)")->take_all();
    for (const auto& key : kKnownKeys)
        sub->add_option_function<std::string>(
            "--" + key, [&io, key](const std::string& v) { io.flag_values[key] = v; },
            "config key " + key);
}

Config assemble(const VerbIo& io) {
    Config cfg;
    if (!io.config_path.empty()) cfg = Config::load(io.config_path);
    for (const auto& kv : io.sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos)
            throw cglmm::ConfigError("--set expects KEY=VALUE, got '" + kv + "'");
        cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    for (const auto& [k, v] : io.flag_values) cfg.set(k, v);  // flags win
    if (!io.data_path.empty()) cfg.set("data.path", io.data_path);
    if (!io.out_path.empty()) cfg.set("out.path", io.out_path);
    return cfg;
}

void print_parameter_table(const cglmm::FitResult& res) {
    std::printf("%-18s %12s %12s\n", "parameter", "estimate", "std.error");
    for (std::size_t k = 0; k < res.names.size(); ++k) {
        if (std::isfinite(res.std_errors[k]))
            std::printf("%-18s %12.4f %12.4f\n", res.names[k].c_str(), res.estimates[k],
                        res.std_errors[k]);
        else
            std::printf("%-18s %12.4f %12s\n", res.names[k].c_str(), res.estimates[k], "--");
    }
    std::printf("\nlog-likelihood  %.6f\n", res.loglik);
    std::printf("converged       %s (%d iterations, gradient norm %.2e)\n",
                res.converged ? "yes" : "NO", res.iterations, res.grad_norm);
    for (const auto& w : res.warnings) std::printf("warning: %s\n", w.c_str());
}

int run_fit(const Config& cfg) {
    const cglmm::ModelSpec spec = cglmm::spec_from_config(cfg);
    const auto ingested = cglmm::ingest(cfg.require("data.path"), spec);
    if (ingested.dropped_rows > 0)
        std::printf("note: dropped %zu rows with missing values\n", ingested.dropped_rows);
    const cglmm::BoundModel bound(spec, ingested.data);
    const cglmm::FitResult res = cglmm::fit(bound, nullptr, cglmm::fit_options_from_config(cfg));
    print_parameter_table(res);
    if (cfg.has("out.path"))
        cglmm::write_json(cglmm::fit_to_json(bound, res, ingested, cfg), cfg.get("out.path"));
    return res.converged ? kExitOk : kExitConvergence;
}

int run_loglik(const Config& cfg) {
    const cglmm::ModelSpec spec = cglmm::spec_from_config(cfg);
    const auto ingested = cglmm::ingest(cfg.require("data.path"), spec);
    const cglmm::BoundModel bound(spec, ingested.data);
    const std::vector<double> nat = cglmm::params_from_config(cfg, bound);
    std::size_t empty = 0;
    const double ll = bound.loglik_natural(nat, &empty);
    std::printf("log-likelihood  %.10f\n", ll);
    if (empty > 0) std::printf("warning: %zu empty groups contributed zero\n", empty);
    if (cfg.has("out.path")) {
        nlohmann::json j;
        j["verb"] = "loglik";
        j["loglik"] = ll;
        nlohmann::json params = nlohmann::json::object();
        for (std::size_t k = 0; k < bound.n_params(); ++k)
            params[bound.params()[k].name] = nat[k];
        j["parameters"] = params;
        j["config"] = cglmm::config_to_json(cfg);
        cglmm::write_json(j, cfg.get("out.path"));
    }
    return kExitOk;
}

int run_validate(const Config& cfg) {
    const cglmm::ModelSpec spec = cglmm::spec_from_config(cfg);
    const auto ingested = cglmm::ingest(cfg.require("data.path"), spec);
    const cglmm::BoundModel bound(spec, ingested.data);
    const bool have_params = !cfg.with_prefix("params.").empty();
    const std::vector<double> nat =
        have_params ? cglmm::params_from_config(cfg, bound) : cglmm::default_init(bound);
    const double threshold = cfg.get_double("oracle.tol", 1e-6);
    const auto rep = cglmm::validate_against_oracle(
        bound, nat, cglmm::quad_config_from_config(cfg), threshold);
    std::printf("groups checked        %zu\n", rep.groups_checked);
    if (rep.worst_group.empty())
        std::printf("max rel discrepancy   %.3e\n", rep.max_rel_discrepancy);
    else
        std::printf("max rel discrepancy   %.3e (group %s)\n", rep.max_rel_discrepancy,
                    rep.worst_group.c_str());
    std::printf("threshold             %.3e -> %s\n", rep.threshold, rep.pass ? "pass" : "FAIL");
    if (cfg.has("out.path")) {
        nlohmann::json j;
        j["verb"] = "validate";
        j["groups_checked"] = rep.groups_checked;
        j["max_rel_discrepancy"] = rep.max_rel_discrepancy;
        j["worst_group"] = rep.worst_group;
        j["threshold"] = rep.threshold;
        j["pass"] = rep.pass;
        j["config"] = cglmm::config_to_json(cfg);
        cglmm::write_json(j, cfg.get("out.path"));
    }
    return rep.pass ? kExitOk : kExitValidation;
}

int run_simulate(const Config& cfg) {
    const cglmm::SimulationPlan plan = cglmm::plan_from_config(cfg);
    const cglmm::SimulationResult sim = cglmm::simulate(plan);
    const std::string out = cfg.require("out.path");
    cglmm::write_csv(sim.data, out);
    nlohmann::json meta;
    meta["verb"] = "simulate";
    meta["family"] = cglmm::family_name(plan.family);
    meta["groups"] = sim.data.n_groups();
    meta["units"] = sim.data.n_units();
    meta["seed"] = plan.seed;
    nlohmann::json truth = nlohmann::json::object();
    for (const auto& [name, value] : sim.truth) truth[name] = value;
    meta["truth"] = truth;
    meta["config"] = cglmm::config_to_json(cfg);
    cglmm::write_json(meta, out + ".meta.json");
    std::printf("wrote %zu rows (%zu groups) to %s\n", sim.data.n_units(), sim.data.n_groups(),
                out.c_str());
    return kExitOk;
}

nlohmann::json error_block(const std::string& type, const std::string& message) {
    nlohmann::json j;
    j["error"]["type"] = type;
    j["error"]["message"] = message;
    return j;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"closed-form maximum likelihood for conjugate generalized linear mixed models"};
    app.require_subcommand(1);

    VerbIo io_fit, io_loglik, io_sim, io_val;
    CLI::App* fit_cmd = app.add_subcommand("fit", "maximize the marginal likelihood");
    add_common(fit_cmd, io_fit);
    CLI::App* ll_cmd = app.add_subcommand("loglik", "evaluate the log-likelihood at parameters");
    add_common(ll_cmd, io_loglik);
    CLI::App* sim_cmd = app.add_subcommand("simulate", "draw a dataset from a model");
    add_common(sim_cmd, io_sim);
    CLI::App* val_cmd = app.add_subcommand("validate", "closed form versus quadrature oracle");
    add_common(val_cmd, io_val);

    CLI11_PARSE(app, argc, argv);

    try {
        if (fit_cmd->parsed()) return run_fit(assemble(io_fit));
        if (ll_cmd->parsed()) return run_loglik(assemble(io_loglik));
        if (sim_cmd->parsed()) return run_simulate(assemble(io_sim));
        if (val_cmd->parsed()) return run_validate(assemble(io_val));
    } catch (const cglmm::IoError& e) {
        std::printf("%s\n", error_block("io", e.what()).dump(2).c_str());
        return kExitIo;
    } catch (const cglmm::ConvergenceError& e) {
        std::printf("%s\n", error_block("convergence", e.what()).dump(2).c_str());
        return kExitConvergence;
    } catch (const cglmm::Error& e) {
        std::printf("%s\n", error_block("validation", e.what()).dump(2).c_str());
        return kExitValidation;
    } catch (const std::exception& e) {
        std::printf("%s\n", error_block("internal", e.what()).dump(2).c_str());
        return kExitValidation;
    }
    return kExitOk;
}
