#include "lhb/environment.hpp"
#include "lhb/errors.hpp"
#include "lhb/metrics.hpp"

#include "../support/fixtures.hpp"

#include <doctest.h>

#include <cmath>
#include <sstream>

using namespace lhb;

namespace {

SyntheticConfig small_config() {
    SyntheticConfig c;
    c.d = 20;
    c.d_z = 5;
    c.s = 3;
    c.theta_nnz = 5;
    c.L_bar = 3.0;
    c.sigma = 3.0 * std::sqrt(2.0 / 3.0) / 10.0;
    return c;
}

// Logged table from a synthetic environment: the arm is chosen uniformly and the
// group is written as "A" (group one) or "B".
std::string logged_table(const SyntheticEnvironment& env, std::size_t n) {
    const auto d = env.truth().reward_dim();
    const auto dz = env.truth().gating_dim();
    std::ostringstream out;
    out.precision(17);
    out << "reward,group,action";
    for (Eigen::Index j = 0; j < dz; ++j) out << ",z" << j;
    for (std::size_t k = 0; k < env.num_arms(); ++k) {
        for (Eigen::Index j = 0; j < d; ++j) out << ",x" << k << '_' << j;
    }
    out << '\n';
    for (std::size_t i = 0; i < n; ++i) {
        const Round r = env.sample_round(i);
        CounterRng pick(99, Stream::explore, i);
        const auto a = static_cast<std::size_t>(pick.uniform() * static_cast<double>(env.num_arms()));
        out << r.rewards[static_cast<Eigen::Index>(a)] << ',' << (r.group == Group::one ? "A" : "B") << ',' << a;
        for (Eigen::Index j = 0; j < dz; ++j) out << ',' << r.context.z()[j];
        for (std::size_t k = 0; k < env.num_arms(); ++k) {
            for (Eigen::Index j = 0; j < d; ++j) out << ',' << r.context.arm(k)[j];
        }
        out << '\n';
    }
    return out.str();
}

TableRoles roles_for(Eigen::Index d, Eigen::Index dz, std::size_t K) {
    TableRoles roles;
    roles.reward_column = "reward";
    roles.group_column = "group";
    roles.action_column = "action";
    for (Eigen::Index j = 0; j < dz; ++j) roles.z_columns.push_back("z" + std::to_string(j));
    roles.arm_columns.resize(K);
    for (std::size_t k = 0; k < K; ++k) {
        for (Eigen::Index j = 0; j < d; ++j) {
            roles.arm_columns[k].push_back("x" + std::to_string(k) + "_" + std::to_string(j));
        }
    }
    return roles;
}

}  // namespace

TEST_CASE("synthetic_truth layout") {
    SyntheticConfig c;
    c.d = 100;
    c.s = 20;
    c.L_bar = 2.5;
    const GroundTruth t = synthetic_truth(c, 1);
    CHECK(t.params.beta1().lpNorm<1>() == 2.5);
    CHECK(t.params.beta2().lpNorm<1>() == 2.5);
    for (int j = 0; j < 20; ++j) {
        CHECK(t.params.beta1()[j] == 0.125);
        CHECK(t.params.beta2()[50 + j] == -0.125);
    }
    CHECK(t.params.nnz_beta1() == 20);
    CHECK(t.params.nnz_beta2() == 20);
    CHECK(t.params.nnz_theta() == 10);
    CHECK(t.params.theta().cwiseAbs().maxCoeff() <= 1.0);
    const Matrix cov = t.arm_cov_chol * t.arm_cov_chol.transpose();
    CHECK((cov.diagonal().array() - 1.0).abs().maxCoeff() <= 1e-12);
    CHECK(cov(0, 1) == doctest::Approx(0.5));
    CHECK(cov(0, 2) == doctest::Approx(0.25));
    REQUIRE(t.arm_means.size() == 2);
    CHECK(t.arm_means[0].mean() > 0.5);
    CHECK(t.arm_means[1].mean() < -0.5);

    SUBCASE("random sparsity levels keep the l1 norm") {
        for (int s : {1, 3, 7, 13}) {
            c.s = s;
            c.L_bar = 4.7;
            const GroundTruth u = synthetic_truth(c, 2);
            CHECK(u.params.beta1().lpNorm<1>() == doctest::Approx(4.7).epsilon(1e-14));
            CHECK(u.params.beta1().dot(u.params.beta2()) == 0.0);
        }
    }
    SUBCASE("invalid configurations") {
        c.d = 10;
        c.s = 6;
        CHECK_THROWS_AS(synthetic_truth(c, 1), ArgumentError);
        c = SyntheticConfig{};
        c.L_bar = 0.0;
        CHECK_THROWS_AS(synthetic_truth(c, 1), ArgumentError);
        c = SyntheticConfig{};
        c.rho = 1.0;
        CHECK_THROWS_AS(synthetic_truth(c, 1), ArgumentError);
        c = SyntheticConfig{};
        c.theta_nnz = c.d_z + 1;
        CHECK_THROWS_AS(synthetic_truth(c, 1), ArgumentError);
    }
}

TEST_CASE("sample_round: zero gating vector splits groups evenly") {
    SyntheticConfig c = small_config();
    GroundTruth t = synthetic_truth(c, 3);
    t.params = t.params.with_theta(Vector::Zero(c.d_z));
    const SyntheticEnvironment env(std::move(t), c.rho, 3);
    const std::size_t n = 100000;
    std::size_t ones = 0;
    for (std::size_t i = 0; i < n; ++i) {
        ones += env.sample_round(i).group == Group::one;
    }
    CHECK(static_cast<double>(ones) / n == doctest::Approx(0.5).epsilon(0.02));
}

TEST_CASE("sample_round: noiseless identical groups give the mean reward") {
    SyntheticConfig c = small_config();
    c.sigma = 0.0;
    GroundTruth t = synthetic_truth(c, 4);
    t.params = ModelParams(t.params.theta(), t.params.beta1(), t.params.beta1(), 1.0);
    const SyntheticEnvironment env(std::move(t), c.rho, 4);
    for (std::uint64_t i = 0; i < 200; ++i) {
        const Round r = env.sample_round(i);
        CHECK(r.noise == 0.0);
        for (std::size_t k = 0; k < env.num_arms(); ++k) {
            CHECK(r.rewards[static_cast<Eigen::Index>(k)] == mean_reward(r.context.arm(k), env.truth().beta1()));
        }
    }
}

TEST_CASE("sample_round: shared noise and counterfactual rewards") {
    const SyntheticEnvironment env(small_config(), 5);
    for (std::uint64_t i = 0; i < 100; ++i) {
        const Round r = env.sample_round(i);
        const Vector& beta = env.truth().beta(r.group);
        for (std::size_t k = 0; k < env.num_arms(); ++k) {
            CHECK(r.rewards[static_cast<Eigen::Index>(k)] - r.context.arm(k).dot(beta) ==
                  doctest::Approx(r.noise).epsilon(1e-12));
        }
    }
}

TEST_CASE("sample_round: deterministic and order independent") {
    const SyntheticEnvironment a(small_config(), 6);
    const SyntheticEnvironment b(small_config(), 6);
    const SyntheticEnvironment other(small_config(), 7);
    const Round late = b.sample_round(999);
    for (std::uint64_t i : {0u, 17u, 999u}) {
        const Round ra = a.sample_round(i);
        const Round rb = b.sample_round(i);
        CHECK(ra.context.z() == rb.context.z());
        CHECK(ra.context.arm(1) == rb.context.arm(1));
        CHECK(ra.group == rb.group);
        CHECK(ra.rewards == rb.rewards);
    }
    CHECK(a.sample_round(999).rewards == late.rewards);
    CHECK(a.sample_round(0).context.z() != other.sample_round(0).context.z());
}

TEST_CASE("sample_round: arm count does not perturb the group stream") {
    SyntheticConfig c2 = small_config();
    SyntheticConfig c3 = c2;
    c3.K = 3;
    const SyntheticEnvironment two(c2, 8);
    const SyntheticEnvironment three(c3, 8);
    REQUIRE(three.num_arms() == 3);
    CHECK(two.truth().theta() == three.truth().theta());
    for (std::uint64_t i = 0; i < 500; ++i) {
        const Round a = two.sample_round(i);
        const Round b = three.sample_round(i);
        CHECK(a.context.z() == b.context.z());
        CHECK(a.group == b.group);
        CHECK(a.noise == b.noise);
    }
}

TEST_CASE("sample_round: AR(1) arm features") {
    SyntheticConfig c = small_config();
    c.rho = 0.5;
    const SyntheticEnvironment env(c, 9);
    const Vector& mu = env.ground_truth().arm_means[0];
    const std::size_t n = 100000;
    double s01 = 0.0, s00 = 0.0, s11 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const Vector x = env.sample_round(i).context.arm(0) - mu;
        s01 += x[4] * x[5];
        s00 += x[4] * x[4];
        s11 += x[5] * x[5];
    }
    CHECK(std::abs(s01 / std::sqrt(s00 * s11) - 0.5) <= 0.02);
    CHECK(s00 / n == doctest::Approx(1.0).epsilon(0.03));
}

TEST_CASE("lower-bound construction") {
    const double L = 2.0;
    const double xbar = 1.5;
    Vector theta(2);
    theta << 0.7, -1.1;
    const auto env = lower_bound_env(L, xbar, theta, 10);
    REQUIRE(env->num_arms() == 2);
    CHECK(env->truth().beta1()[0] == L);
    CHECK(env->truth().beta2()[0] == -L);
    bool saw_two = false;
    for (std::uint64_t i = 0; i < 2000; ++i) {
        const Round r = env->sample_round(i);
        const double u = r.context.arm(0)[0] - xbar / 2.0;
        REQUIRE(std::abs(u) <= xbar / 2.0);
        CHECK(r.context.arm(0)[0] - r.context.arm(1)[0] == doctest::Approx(xbar));
        const double sign = r.group == Group::one ? 1.0 : -1.0;
        CHECK(strong_oracle_value(r.context, r.group, env->truth()) ==
              doctest::Approx(L * u * sign + L * xbar / 2.0).epsilon(1e-12));
        if (r.group == Group::two) {
            saw_two = true;
            CHECK(instant_strong_regret(r.context, r.group, 0, env->truth()) == doctest::Approx(L * xbar));
            CHECK(instant_strong_regret(r.context, r.group, 1, env->truth()) == 0.0);
        }
    }
    CHECK(saw_two);
    CHECK_THROWS_AS(lower_bound_env(0.0, 1.0, theta, 1), ArgumentError);
    CHECK_THROWS_AS(lower_bound_env(1.0, -1.0, theta, 1), ArgumentError);
}

TEST_CASE("parse_table") {
    SUBCASE("header, BOM, whitespace and line endings") {
        const DataTable t = parse_table("\xEF\xBB\xBF" "a, b ,c\r\n1,2,3\r\n\n 4 ,5,6\n");
        REQUIRE(t.header == std::vector<std::string>{"a", "b", "c"});
        REQUIRE(t.rows.size() == 2);
        CHECK(t.rows[1][0] == "4");
        CHECK(t.column_index("c") == 2);
    }
    SUBCASE("other delimiters") {
        const DataTable t = parse_table("a\tb\n1\t2\n", '\t');
        CHECK(t.rows[0][1] == "2");
    }
    SUBCASE("errors name the column or row") {
        CHECK_THROWS_AS(parse_table(""), IngestionError);
        CHECK_THROWS_AS(parse_table("a,a\n1,2\n"), IngestionError);
        try {
            parse_table("a,b\n1,2\n3\n");
            FAIL("expected an ingestion error");
        } catch (const IngestionError& e) {
            CHECK(e.row() == 2);
        }
        const DataTable t = parse_table("a,b\n1,2\n");
        try {
            (void)t.column_index("missing");
            FAIL("expected an ingestion error");
        } catch (const IngestionError& e) {
            CHECK(e.column() == "missing");
        }
    }
}

TEST_CASE("semi_synthetic_truth: ingestion errors") {
    const SyntheticEnvironment env(small_config(), 11);
    const std::string text = logged_table(env, 400);
    const TableRoles roles = roles_for(20, 5, 2);

    SUBCASE("a single group label") {
        DataTable t = parse_table(text);
        for (auto& row : t.rows) row[1] = "A";
        CHECK_THROWS_AS(semi_synthetic_truth(t, roles), IngestionError);
    }
    SUBCASE("a constant reward") {
        DataTable t = parse_table(text);
        for (auto& row : t.rows) row[0] = "1.5";
        CHECK_THROWS_AS(semi_synthetic_truth(t, roles), DegenerateProblemError);
    }
    SUBCASE("a non-numeric cell") {
        DataTable t = parse_table(text);
        t.rows[6][3] = "n/a";
        try {
            (void)semi_synthetic_truth(t, roles);
            FAIL("expected an ingestion error");
        } catch (const IngestionError& e) {
            CHECK(e.column() == "z0");
            CHECK(e.row() == 7);
        }
    }
    SUBCASE("too few rows in a group") {
        TableRoles strict = roles;
        strict.min_rows_per_group = 300;
        CHECK_THROWS_AS(semi_synthetic_truth(parse_table(text), strict), IngestionError);
    }
    SUBCASE("a missing column") {
        TableRoles wrong = roles;
        wrong.z_columns.push_back("z99");
        CHECK_THROWS_AS(semi_synthetic_truth(parse_table(text), wrong), IngestionError);
    }
    SUBCASE("several arms without an action column") {
        TableRoles wrong = roles;
        wrong.action_column.clear();
        CHECK_THROWS_AS(semi_synthetic_truth(parse_table(text), wrong), ArgumentError);
    }
}

TEST_CASE("semi_synthetic_truth: recovers a known synthetic truth") {
    const SyntheticConfig c = small_config();
    const SyntheticEnvironment env(c, 12);
    const DataTable table = parse_table(logged_table(env, 5000));
    const auto fitted = std::make_shared<const SemiSyntheticTruth>(semi_synthetic_truth(table, roles_for(20, 5, 2), {}, 3));
    const ModelParams& p = fitted->ground.params;
    const double beta_error = (p.beta1() - env.truth().beta1()).norm() + (p.beta2() - env.truth().beta2()).norm();
    INFO("beta error " << beta_error);
    CHECK(beta_error <= 0.2);
    CHECK(p.sigma() == doctest::Approx(c.sigma).epsilon(0.2));
    // The gating fit agrees with the truth in sign on the active coordinates.
    CHECK(p.theta().dot(env.truth().theta()) > 0.0);

    const SemiSyntheticEnvironment sim(fitted, 4);
    REQUIRE(sim.num_arms() == 2);
    const Round r = sim.sample_round(10);
    bool found = false;
    for (Eigen::Index i = 0; i < fitted->z_rows.rows() && !found; ++i) {
        found = fitted->z_rows.row(i).transpose() == r.context.z() &&
                fitted->arm_rows[1].row(i).transpose() == r.context.arm(1);
    }
    CHECK(found);
    CHECK(sim.sample_round(10).rewards == r.rewards);
}
