#include "lhb/errors.hpp"
#include "lhb/experiment.hpp"
#include "lhb/report.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace lhb;
namespace fs = std::filesystem;

namespace {

const char* kSmall = R"(environment:
  type: synthetic
  d: 20
  d_z: 5
  s: 3
  theta_nnz: 5
  L_bar: 3.0
  sigma: 0.5
policies: [hetero, single_lasso, separate_oracle, regular_oracle, strong_oracle, uniform]
horizon: 700
n0: 100
replications: 2
base_seed: 42
jobs: 1
misclass_samples: 200
)";

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("lhb_test_" + name);
    fs::remove_all(dir);
    return dir;
}

int config_error_line(const std::string& text) {
    try {
        (void)parse_config_text(text);
    } catch (const ConfigError& e) {
        return e.line();
    }
    return -1;
}

}  // namespace

TEST_CASE("config parsing") {
    SUBCASE("minimal config takes the defaults") {
        const ExperimentConfig c = parse_config_text(
            "environment: {type: synthetic}\npolicies: [hetero]\nhorizon: 400\nn0: 200\n");
        CHECK(c.environment.kind == EnvironmentKind::synthetic);
        CHECK(c.environment.synthetic.d == 500);
        CHECK(c.replications == 1);
        CHECK(c.jobs == 1);
        REQUIRE(c.policies.size() == 1);
        CHECK(c.policies[0].config.n0 == 200);
        CHECK(c.policies[0].config.em.t_max == 1);
        CHECK(c.policies[0].config.em.lambda.mode == LambdaMode::cross_validation);
    }
    SUBCASE("full example") {
        const ExperimentConfig c = parse_config_text(kSmall);
        CHECK(c.policies.size() == 6);
        CHECK(c.policies[4].config.kind == PolicyKind::strong_oracle);
        CHECK(c.environment.synthetic.L_bar == 3.0);
        CHECK(c.base_seed == 42);
    }
    SUBCASE("per-policy overrides") {
        const ExperimentConfig c = parse_config_text(R"(environment: {type: lower_bound, theta: [0.5, -1]}
policies:
  - hetero
  - {name: fixed_hetero, kind: hetero, lambda: {mode: fixed, value: 0.05}, t_max: [1, 2, 3]}
horizon: 400
n0: 100
)");
        REQUIRE(c.policies.size() == 2);
        CHECK(c.policies[1].name == "fixed_hetero");
        CHECK(c.policies[1].config.em.lambda.mode == LambdaMode::fixed);
        CHECK(c.policies[1].config.em.lambda.fixed_value == 0.05);
        CHECK(c.policies[1].config.t_max_schedule == std::vector<int>{1, 2, 3});
        CHECK(c.environment.lower_bound.theta.size() == 2);
    }
    SUBCASE("horizon below n0") {
        CHECK_THROWS_AS(parse_config_text("environment: {type: synthetic}\npolicies: [hetero]\nhorizon: 100\nn0: 200\n"),
                        ConfigError);
    }
    SUBCASE("duplicate policy names") {
        CHECK(config_error_line("environment: {type: synthetic}\npolicies:\n  - hetero\n  - hetero\nhorizon: 400\nn0: 200\n") ==
              4);
    }
    SUBCASE("unknown keys name their line") {
        CHECK(config_error_line("environment:\n  type: synthetic\n  dd: 3\npolicies: [hetero]\nhorizon: 400\nn0: 200\n") == 3);
        CHECK(config_error_line("environment: {type: synthetic}\npolicies: [hetero]\nhorizon: 400\nn0: 200\nseeds: 3\n") == 5);
        try {
            (void)parse_config_text("environment: {type: synthetic}\npolicies: [hetero]\nhorizon: 400\nn0: 200\nseeds: 3\n");
        } catch (const ConfigError& e) {
            CHECK(e.key() == "seeds");
        }
    }
    SUBCASE("bad values") {
        CHECK(config_error_line("environment: {type: synthetic}\npolicies: [greedy]\nhorizon: 400\nn0: 200\n") == 2);
        CHECK(config_error_line("environment: {type: synthetic}\npolicies: [hetero]\nhorizon: lots\nn0: 200\n") == 3);
        CHECK(config_error_line("environment: {type: planet}\npolicies: [hetero]\nhorizon: 400\nn0: 200\n") == 1);
        CHECK_THROWS_AS(parse_config_text("environment: {type: synthetic}\npolicies: [hetero]\n"), ConfigError);
        CHECK_THROWS_AS(parse_config_text("environment: [\n"), ConfigError);
        CHECK_THROWS_AS(parse_config("/nonexistent/config.yaml"), ConfigError);
    }
}

TEST_CASE("run_experiment on a small synthetic problem") {
    const ExperimentConfig config = parse_config_text(kSmall);
    const ResultTable table = run_experiment(config);

    SUBCASE("shape and oracle columns") {
        REQUIRE(table.rows.size() == 6 * 2 * 700);
        REQUIRE(table.cells.size() == 12);
        for (const auto& row : table.rows) {
            if (row.policy == "strong_oracle") REQUIRE(row.strong_instant == 0.0);
            if (row.policy == "regular_oracle") REQUIRE(row.regular_instant == 0.0);
            REQUIRE(row.strong_instant >= 0.0);
        }
        CHECK(table.rows.front().policy == "hetero");
        CHECK(table.rows.front().rep == 0);
        CHECK(table.rows.front().round == 1);
        CHECK(table.rows[700].rep == 1);
        // Error columns appear on the first round of episodes that hold a model.
        std::size_t with_error = 0;
        for (std::size_t i = 0; i < 700; ++i) with_error += table.rows[i].err_l2.has_value();
        CHECK(with_error == 2);
        CHECK(table.rows[100].err_l2.has_value());
        CHECK(table.rows[300].excess_misclass.has_value());
        CHECK(table.rows[100 + 700 * 8].err_l2.value() == 0.0);
    }
    SUBCASE("every policy in a replication sees the same draws") {
        for (int rep = 0; rep < 2; ++rep) {
            std::uint64_t first = 0;
            for (const auto& cell : table.cells) {
                if (cell.rep != rep) continue;
                CHECK(cell.seed == (42u ^ static_cast<unsigned>(rep)));
                if (first == 0) first = cell.checksum;
                CHECK(cell.checksum == first);
            }
        }
        CHECK(table.cells[0].checksum != table.cells[1].checksum);
    }
    SUBCASE("results.csv round trip gives identical summaries") {
        std::stringstream csv;
        write_results_csv(table, csv);
        const ResultTable back = read_results_csv(csv);
        REQUIRE(back.rows.size() == table.rows.size());
        const auto a = summarize(table);
        const auto b = summarize(back);
        REQUIRE(a.size() == b.size());
        for (std::size_t i = 0; i < a.size(); ++i) {
            REQUIRE(a[i].strong_mean == b[i].strong_mean);
            REQUIRE(a[i].strong_se == b[i].strong_se);
            REQUIRE(a[i].regular_mean == b[i].regular_mean);
        }
        std::stringstream again;
        write_results_csv(back, again);
        CHECK(again.str() == csv.str());
    }
    SUBCASE("episode summaries") {
        const auto episodes = summarize_episodes(table);
        std::size_t hetero = 0;
        for (const auto& e : episodes) {
            if (e.policy != "hetero") continue;
            ++hetero;
            if (e.episode == 0) CHECK(std::isnan(e.err_l2_mean));
            if (e.episode == 1) CHECK(e.err_l2_mean >= 0.0);
        }
        // 700 rounds with n0 = 100: episodes 0, 1 and 2 exactly fill the horizon.
        CHECK(hetero == 3);
    }
}

TEST_CASE("summaries") {
    ResultTable t;
    SUBCASE("a single replication has zero standard error") {
        for (std::uint64_t i = 1; i <= 3; ++i) {
            ResultRow r;
            r.policy = "p";
            r.round = i;
            r.strong_instant = 1.0;
            r.strong_cum = static_cast<double>(i);
            t.rows.push_back(r);
        }
        const auto s = summarize(t);
        REQUIRE(s.size() == 3);
        CHECK(s[2].strong_mean == 1.0);
        CHECK(s[2].strong_se == 0.0);
    }
    SUBCASE("two replications") {
        for (int rep = 0; rep < 2; ++rep) {
            ResultRow r;
            r.policy = "p";
            r.rep = rep;
            r.round = 1;
            r.strong_cum = rep == 0 ? 1.0 : 3.0;
            t.rows.push_back(r);
        }
        const auto s = summarize(t);
        REQUIRE(s.size() == 1);
        CHECK(s[0].strong_mean == 2.0);
        CHECK(s[0].strong_se == doctest::Approx(1.0));
    }
    SUBCASE("an empty table is rejected") {
        CHECK_THROWS_AS(summarize(t), ArgumentError);
        CHECK_THROWS_AS(summarize_episodes(t), ArgumentError);
    }
    CHECK(format_double(0.1) == "0.1");
    CHECK(std::stod(format_double(1.0 / 3.0)) == 1.0 / 3.0);
}

TEST_CASE("outputs are bitwise deterministic") {
    ExperimentConfig config = parse_config_text(kSmall);
    config.policies.resize(2);
    const fs::path a = scratch("det_a");
    const fs::path b = scratch("det_b");
    emit_outputs(run_experiment(config), a.string());
    config.jobs = 3;
    emit_outputs(run_experiment(config), b.string());
    for (const char* name : {"results.csv", "summary.csv", "episodes.csv", "checksums.csv", "regret.svg", "error.svg"}) {
        INFO(name);
        REQUIRE(fs::exists(a / name));
        CHECK(slurp(a / name) == slurp(b / name));
    }
    CHECK(slurp(a / "regret.svg").find("<svg") != std::string::npos);
    fs::remove_all(a);
    fs::remove_all(b);
}

TEST_CASE("semi-synthetic experiment from a logged table") {
    const std::string text = R"(environment:
  type: semi_synthetic
  path: logged_small.csv
  reward: reward
  group: segment
  group_one: north
  action: arm
  z: [z0, z1, z2]
  arms:
    - [a0_x0, a0_x1, a0_x2, a0_x3]
    - [a1_x0, a1_x1, a1_x2, a1_x3]
policies: [hetero, regular_oracle]
horizon: 300
n0: 100
replications: 1
base_seed: 5
misclass_samples: 100
)";
    const ExperimentConfig config = parse_config_text(text, LHB_TEST_DATA_DIR);
    CHECK(config.environment.kind == EnvironmentKind::semi_synthetic);
    const auto semi = prepare_semi_synthetic(config.environment, config.base_seed);
    REQUIRE(semi);
    const ModelParams& p = semi->ground.params;
    CHECK(p.reward_dim() == 4);
    CHECK(p.gating_dim() == 3);
    CHECK(p.beta1()[0] == doctest::Approx(1.5).epsilon(0.15));
    CHECK(p.beta2()[3] == doctest::Approx(1.5).epsilon(0.15));
    CHECK(p.sigma() == doctest::Approx(0.5).epsilon(0.2));

    const ResultTable table = run_experiment(config);
    CHECK(table.rows.size() == 600);
    CHECK(table.cells[0].checksum == table.cells[1].checksum);

    ExperimentConfig missing = config;
    missing.environment.semi.path = std::string(LHB_TEST_DATA_DIR) + "/absent.csv";
    CHECK_THROWS(run_experiment(missing));
}
