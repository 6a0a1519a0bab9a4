#include <catch_amalgamated.hpp>

#include <cstdio>
#include <fstream>
#include <string>

#include "cglmm/config.hpp"
#include "cglmm/csv.hpp"
#include "cglmm/model.hpp"
#include "cglmm/run.hpp"
#include "cglmm/simulate.hpp"

using namespace cglmm;

namespace {

const std::string kDataDir = CGLMM_DATA_DIR;

ModelSpec epil_spec() {
    ModelSpec spec;
    spec.family = Family::poisson;
    spec.group_column = "subject";
    spec.response_column = "y";
    spec.intercept = true;
    spec.unit_covariates = {"lbase", "trt", "lage", "V4", "lbase:trt"};
    return spec;
}

std::string write_temp(const std::string& name, const std::string& content) {
    const std::string path = std::string("/tmp/cglmm_test_") + name;
    std::ofstream out(path);
    out << content;
    return path;
}

}  // namespace

TEST_CASE("epileptic-seizure fixture ingests into 59 groups of 4") {
    const auto res = ingest(kDataDir + "/epil.csv", epil_spec());
    CHECK(res.dropped_rows == 0);
    CHECK(res.data.n_groups() == 59);
    CHECK(res.data.n_units() == 236);
    for (const auto& g : res.data.groups) CHECK(g.size() == 4);
    const BoundModel bound(epil_spec(), res.data);
    CHECK(bound.n_groups() == 59);
    CHECK(bound.n_units() == 236);
    CHECK(bound.params().size() == 7);
}

TEST_CASE("ingest error paths") {
    SECTION("missing file") {
        CHECK_THROWS_AS(ingest("/nonexistent/nowhere.csv", epil_spec()), IoError);
    }
    SECTION("missing column") {
        const auto path = write_temp("cols.csv", "subject,y\n1,2\n");
        ModelSpec spec = epil_spec();
        CHECK_THROWS_AS(ingest(path, spec), DataError);
    }
    SECTION("non-numeric referenced covariate carries line/column diagnostics") {
        const auto path = write_temp("bad.csv", "g,y,x\n1,2,0.5\n1,3,oops\n");
        ModelSpec spec;
        spec.family = Family::poisson;
        spec.group_column = "g";
        spec.unit_covariates = {"x"};
        try {
            ingest(path, spec);
            FAIL("expected DataError");
        } catch (const DataError& e) {
            const std::string msg = e.what();
            CHECK(msg.find("line 3") != std::string::npos);
            CHECK(msg.find("'x'") != std::string::npos);
        }
    }
    SECTION("missing referenced values are dropped and counted") {
        const auto path = write_temp("na.csv", "g,y,x\n1,2,0.5\n1,NA,1.0\n1,3,\n2,1,0.25\n");
        ModelSpec spec;
        spec.family = Family::poisson;
        spec.group_column = "g";
        spec.unit_covariates = {"x"};
        const auto res = ingest(path, spec);
        CHECK(res.dropped_rows == 2);
        CHECK(res.data.n_units() == 2);
    }
    SECTION("non-constant group covariate") {
        const auto path = write_temp("gc.csv", "g,y,w\n1,2,0.5\n1,3,0.6\n");
        ModelSpec spec;
        spec.family = Family::poisson;
        spec.group_column = "g";
        spec.group_covariates = {"w"};
        CHECK_THROWS_AS(ingest(path, spec), DataError);
    }
    SECTION("single group is valid") {
        const auto path = write_temp("one.csv", "g,y\n7,2\n7,3\n7,1\n");
        ModelSpec spec;
        spec.family = Family::poisson;
        spec.group_column = "g";
        const auto res = ingest(path, spec);
        CHECK(res.data.n_groups() == 1);
        CHECK(res.data.groups[0].size() == 3);
    }
}

TEST_CASE("csv round trip preserves the dataset") {
    SimulationPlan plan;
    plan.family = Family::poisson;
    plan.groups = 7;
    plan.units_per_group = {3};
    plan.covariates = {{"x1", CovariateGen::Kind::normal},
                       {"x2", CovariateGen::Kind::binary, 0.4}};
    plan.beta = {{"x1", 0.3}};
    plan.intercept = true;
    plan.seed = 99;
    const auto sim = simulate(plan);
    const std::string path = "/tmp/cglmm_test_roundtrip.csv";
    write_csv(sim.data, path);

    ModelSpec spec;
    spec.family = Family::poisson;
    spec.group_column = "group";
    spec.unit_covariates = {"x1", "x2"};
    const auto back = ingest(path, spec);
    REQUIRE(back.data.n_groups() == sim.data.n_groups());
    for (std::size_t i = 0; i < sim.data.n_groups(); ++i) {
        CHECK(back.data.groups[i].y == sim.data.groups[i].y);
        CHECK(back.data.groups[i].x == sim.data.groups[i].x);
    }
}

TEST_CASE("config files parse with comments and overlays") {
    const auto path = write_temp("conf.cfg",
                                 "# a comment\n"
                                 "model.family = poisson\n"
                                 "model.unit_covariates = x1, x2\n"
                                 "fit.max_iter = 200   # trailing comment\n"
                                 "\n"
                                 "model.intercept = true\n");
    Config cfg = Config::load(path);
    CHECK(cfg.get("model.family") == "poisson");
    CHECK(cfg.get_list("model.unit_covariates") == std::vector<std::string>{"x1", "x2"});
    CHECK(cfg.get_int("fit.max_iter", 0) == 200);
    CHECK(cfg.get_bool("model.intercept", false));

    cfg.set("fit.max_iter", "77");  // flag overlay wins
    CHECK(cfg.get_int("fit.max_iter", 0) == 77);

    CHECK_THROWS_AS(cfg.get_double("model.family", 0.0), ConfigError);
    CHECK_THROWS_AS(Config::load(write_temp("broken.cfg", "no equals sign\n")), ConfigError);
    CHECK_THROWS_AS(Config::load("/nonexistent/none.cfg"), IoError);
}

TEST_CASE("spec and options builders") {
    Config cfg;
    cfg.set("model.family", "poisson");
    cfg.set("model.group", "subject");
    cfg.set("model.intercept", "true");
    cfg.set("model.unit_covariates", "lbase,trt");
    cfg.set("fit.max_iter", "123");
    cfg.set("oracle.nodes", "301");

    const ModelSpec spec = spec_from_config(cfg);
    CHECK(spec.family == Family::poisson);
    CHECK(spec.group_column == "subject");
    CHECK(spec.intercept);
    CHECK(spec.unit_covariates.size() == 2);

    CHECK(fit_options_from_config(cfg).optim.max_iter == 123);
    CHECK(quad_config_from_config(cfg).nodes == 301);

    cfg.set("model.family", "martian");
    CHECK_THROWS_AS(spec_from_config(cfg), ConfigError);
}

TEST_CASE("simulation plans parse from config") {
    Config cfg;
    cfg.set("model.family", "poisson");
    cfg.set("sim.groups", "12");
    cfg.set("sim.units", "3,4,3,4,3,4,3,4,3,4,3,4");
    cfg.set("sim.covariates", "x1:normal,x2:binary(0.3),w:group_normal,x1:x2:interaction(x1,x2)");
    cfg.set("sim.beta", "x1=0.5,x2=-0.25");
    cfg.set("sim.beta_group", "w=0.2");
    cfg.set("sim.intercept", "0.4");
    cfg.set("sim.A", "4");
    cfg.set("sim.seed", "31");

    const SimulationPlan plan = plan_from_config(cfg);
    CHECK(plan.groups == 12);
    CHECK(plan.units_per_group.size() == 12);
    REQUIRE(plan.covariates.size() == 4);
    CHECK(plan.covariates[1].kind == CovariateGen::Kind::binary);
    CHECK(plan.covariates[1].p == Catch::Approx(0.3));
    CHECK(plan.covariates[2].group_level);
    CHECK(plan.covariates[3].kind == CovariateGen::Kind::interaction);
    CHECK(plan.covariates[3].name == "x1:x2");
    CHECK(plan.covariates[3].parent_a == "x1");
    CHECK(plan.intercept);
    CHECK(plan.intercept_value == Catch::Approx(0.4));
    REQUIRE(plan.beta.size() == 2);
    CHECK(plan.beta[1].second == Catch::Approx(-0.25));

    const auto sim = simulate(plan);
    CHECK(sim.data.n_groups() == 12);
    CHECK(sim.data.n_units() == 42);

    cfg.set("sim.covariates", "x1:martian");
    CHECK_THROWS_AS(plan_from_config(cfg), ConfigError);
}

TEST_CASE("parameter vectors from params.* keys") {
    const auto res = ingest(kDataDir + "/epil.csv", epil_spec());
    const BoundModel bound(epil_spec(), res.data);

    Config cfg;
    cfg.set("params.Intercept", "1.9");
    cfg.set("params.lbase", "0.88");
    cfg.set("params.trt", "-0.28");
    cfg.set("params.lage", "0.5");
    cfg.set("params.V4", "-0.16");
    cfg.set("params.lbase:trt", "0.34");
    SECTION("missing names are reported") {
        CHECK_THROWS_WITH(params_from_config(cfg, bound),
                          Catch::Matchers::ContainsSubstring("A"));
    }
    SECTION("full set evaluates") {
        cfg.set("params.A", "3.9");
        const auto nat = params_from_config(cfg, bound);
        CHECK(nat.size() == 7);
        const double ll = bound.loglik_natural(nat);
        CHECK(std::isfinite(ll));
    }
}

TEST_CASE("oracle validation report on a small simulated model") {
    SimulationPlan plan;
    plan.family = Family::gamma;
    plan.groups = 5;
    plan.units_per_group = {4};
    plan.covariates = {{"x", CovariateGen::Kind::normal}};
    plan.beta = {{"x", 0.4}};
    plan.intercept = true;
    plan.intercept_value = 0.2;
    plan.ig_c = 3.0;
    plan.shape = 1.5;
    plan.seed = 61;
    const auto sim = simulate(plan);

    ModelSpec spec;
    spec.family = Family::gamma;
    spec.intercept = true;
    spec.unit_covariates = {"x"};
    spec.gamma_shape = 1.5;
    const BoundModel bound(spec, sim.data);
    const std::vector<double> nat = default_init(bound);
    const auto rep = validate_against_oracle(bound, nat, {}, 1e-6);
    CHECK(rep.groups_checked == 5);
    CHECK(rep.pass);
    CHECK(rep.max_rel_discrepancy < 1e-6);
}
