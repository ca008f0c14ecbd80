// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero if any fails. Arguments select a subset of criteria (default: all).

#include "lhb/em.hpp"
#include "lhb/environment.hpp"
#include "lhb/experiment.hpp"
#include "lhb/metrics.hpp"
#include "lhb/model.hpp"
#include "lhb/policy.hpp"
#include "lhb/report.hpp"
#include "lhb/sparse.hpp"
#include "lhb/theory.hpp"

#include "../support/fixtures.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

using namespace lhb;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* format, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, format, args...);
    return buf;
}

// ---------------------------------------------------------------------------
// 1. Solver correctness

Outcome solver_correctness() {
    CounterRng rng(101, Stream::probe);
    SolverControl control;
    control.tol = 1e-6;

    double worst_kkt = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const Matrix x = test::gaussian_matrix(rng, 50, 20);
        Vector beta = Vector::Zero(20);
        beta.head(3) << 1.5, 0.5, -0.5;
        const Vector y = x * beta + test::gaussian_vector(rng, 50, 0.5);
        Vector w(50);
        for (Eigen::Index i = 0; i < 50; ++i) w[i] = rng.uniform();
        const WeightedLassoProblem base(x, y, w, 0.5 + rng.uniform(), 0.0);
        const WeightedLassoProblem p = base.with_lambda(base.lambda_max() * (0.01 + 0.5 * rng.uniform()));
        const Vector fit = solve_weighted_lasso(p, Vector::Zero(20), control);
        // Smooth gradient from the residuals, independent of the solver's Gram form.
        const Vector r = p.response() - p.design() * fit;
        const Vector g = -p.design().transpose() * (p.weights().cwiseProduct(r)) /
                         (50.0 * p.sigma() * p.sigma());
        worst_kkt = std::max(worst_kkt, kkt_residual(g, fit, p.lambda()));
    }

    double worst_1d = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const Eigen::Index n = 5 + trial % 40;
        const Matrix x = test::gaussian_matrix(rng, n, 1);
        const Vector y = 2.0 * rng.uniform() * x.col(0) + test::gaussian_vector(rng, n);
        Vector w(n);
        for (Eigen::Index i = 0; i < n; ++i) w[i] = rng.uniform();
        const double sigma = 0.3 + 2.0 * rng.uniform();
        const double lambda = 0.5 * rng.uniform();
        const double nn = static_cast<double>(n);
        const double a = (w.array() * x.col(0).array() * y.array()).sum() / nn;
        const double b = (w.array() * x.col(0).array().square()).sum() / nn;
        const double oracle = soft_threshold(a, lambda * sigma * sigma) / b;
        const Vector fit = solve_weighted_lasso(WeightedLassoProblem(x, y, w, sigma, lambda), Vector::Zero(1));
        worst_1d = std::max(worst_1d, std::abs(fit[0] - oracle));
    }

    double worst_fd = 0.0;
    const double h = 1e-5;
    for (int point = 0; point < 50; ++point) {
        const Matrix z = test::gaussian_matrix(rng, 40, 6);
        Vector resp(40);
        for (Eigen::Index i = 0; i < 40; ++i) resp[i] = rng.uniform();
        const LogisticProblem p(z, resp, 0.0);
        const Vector theta = test::gaussian_vector(rng, 6);
        const Vector g = logistic_gradient(p, theta);
        for (Eigen::Index j = 0; j < 6; ++j) {
            Vector up = theta, down = theta;
            up[j] += h;
            down[j] -= h;
            const double fd = (logistic_objective(p, up) - logistic_objective(p, down)) / (2 * h);
            worst_fd = std::max(worst_fd, std::abs(fd - g[j]) / std::max(1.0, std::abs(g[j])));
        }
    }
    return {worst_kkt <= 1e-6 && worst_1d <= 1e-8 && worst_fd <= 1e-5,
            fmt("max KKT %.2e (<= 1e-6), 1-d closed form %.2e (<= 1e-8), gradient rel. %.2e (<= 1e-5)", worst_kkt,
                worst_1d, worst_fd)};
}

// ---------------------------------------------------------------------------
// 2. Posterior weight

Outcome posterior_oracle() {
    CounterRng rng(202, Stream::probe);
    std::normal_distribution<double> normal;
    std::uniform_real_distribution<double> scale(0.05, 3.0);
    double worst_direct = 0.0;
    double worst_swap = 0.0;
    int compared = 0;
    for (int trial = 0; trial < 20000 && compared < 10000; ++trial) {
        const ModelParams p(test::gaussian_vector(rng, 3, 2.0), test::gaussian_vector(rng, 5),
                            test::gaussian_vector(rng, 5), scale(rng));
        const Vector x = test::gaussian_vector(rng, 5);
        const Vector z = test::gaussian_vector(rng, 3);
        const double y = 4.0 * normal(rng);
        const double w = posterior_weight(y, x, z, p);
        worst_swap = std::max(worst_swap, std::abs(w + posterior_weight(y, x, z, p.swapped()) - 1.0));

        const double s = p.sigma();
        const double r1 = y - x.dot(p.beta1());
        const double r2 = y - x.dot(p.beta2());
        const double f1 = std::exp(-r1 * r1 / (2 * s * s)) / (std::sqrt(2 * M_PI) * s);
        const double f2 = std::exp(-r2 * r2 / (2 * s * s)) / (std::sqrt(2 * M_PI) * s);
        if (f1 > 1e-300 && f2 > 1e-300) {
            // 1 - pi is evaluated as sigmoid(-z'theta) to avoid cancellation when pi is near 1.
            const double pi = group_probability(z, p.theta());
            const double qi = group_probability(z, -p.theta());
            worst_direct = std::max(worst_direct, std::abs(w - pi * f1 / (pi * f1 + qi * f2)));
            ++compared;
        }
    }
    // Extreme inputs where densities underflow: symmetry must still hold.
    for (int trial = 0; trial < 1000; ++trial) {
        const ModelParams p(test::gaussian_vector(rng, 2, 30.0), test::gaussian_vector(rng, 3, 100.0),
                            test::gaussian_vector(rng, 3, 100.0), 0.01);
        const Vector x = test::gaussian_vector(rng, 3);
        const Vector z = test::gaussian_vector(rng, 2);
        const double y = 100.0 * normal(rng);
        const double w = posterior_weight(y, x, z, p);
        worst_swap = std::max(worst_swap, std::abs(w + posterior_weight(y, x, z, p.swapped()) - 1.0));
    }
    return {compared == 10000 && worst_direct <= 1e-12 && worst_swap <= 1e-12,
            fmt("%d points, direct formula %.2e (<= 1e-12), swap symmetry %.2e (<= 1e-12)", compared, worst_direct,
                worst_swap)};
}

// ---------------------------------------------------------------------------
// 3. Oracle identities

SyntheticConfig identity_config() {
    SyntheticConfig c;
    c.d = 20;
    c.d_z = 5;
    c.s = 3;
    c.theta_nnz = 5;
    c.L_bar = 3.0;
    c.sigma = 0.5;
    return c;
}

Outcome oracle_identities() {
    const SyntheticEnvironment env(identity_config(), 303);
    const std::uint64_t T = 10000;
    bool strong_zero = true, regular_zero = true, decomposition = true, gap_nonneg = true;
    std::size_t rounds = 0;
    for (PolicyKind kind : {PolicyKind::strong_oracle, PolicyKind::regular_oracle, PolicyKind::hetero,
                            PolicyKind::single_lasso, PolicyKind::uniform}) {
        PolicyConfig pc;
        pc.kind = kind;
        pc.n0 = 200;
        PolicyState state(pc, env.truth());
        const PolicyRun run = run_policy(env, state, T, 17);
        if (kind == PolicyKind::strong_oracle) strong_zero = run.trace.strong_cum(T - 1) == 0.0;
        if (kind == PolicyKind::regular_oracle) regular_zero = run.trace.regular_cum(T - 1) == 0.0;
        for (std::uint64_t i = 0; i < T; ++i) {
            const Round round = env.sample_round(i);
            const RoundRecord& rec = run.trace.records()[i];
            const double gap = strong_oracle_value(round.context, round.group, env.truth()) -
                               regular_oracle_value(round.context, round.group, env.truth());
            gap_nonneg = gap_nonneg && gap >= 0.0;
            // Equal up to the rounding of one subtraction.
            const double scale = std::max({1.0, std::abs(rec.strong), std::abs(rec.regular)});
            decomposition = decomposition && std::abs((rec.strong - rec.regular) - gap) <=
                                                 4 * std::numeric_limits<double>::epsilon() * scale;
            ++rounds;
        }
    }
    return {strong_zero && regular_zero && decomposition && gap_nonneg,
            fmt("strong_oracle cum. strong regret zero: %s; regular_oracle cum. regular regret zero: %s; "
                "decomposition on %zu logged rounds: %s; gap >= 0: %s",
                strong_zero ? "yes" : "no", regular_zero ? "yes" : "no", rounds, decomposition ? "yes" : "no",
                gap_nonneg ? "yes" : "no")};
}

// ---------------------------------------------------------------------------
// 4. Lower-bound construction

Outcome lower_bound_floor() {
    const auto env = lower_bound_env(1.0, 1.0, Vector::Zero(1), 404);
    PolicyConfig pc;
    pc.kind = PolicyKind::regular_oracle;
    pc.n0 = 200;
    PolicyState state(pc, env->truth());
    const std::uint64_t T = 100000;
    const PolicyRun run = run_policy(*env, state, T, 5);
    const double avg = run.trace.strong_avg(T - 1);
    const double risk = bayes_risk(Vector::Zero(1), env->gating_sampler(), 1000, 1);
    const double target = 1.0 * 1.0 * risk;
    return {std::abs(avg - target) <= 0.02 * target,
            fmt("average strong regret %.5f vs L*x*R = %.3f (within 2%%: |rel| = %.4f)", avg, target,
                std::abs(avg / target - 1.0))};
}

// ---------------------------------------------------------------------------
// 5. Bayes risk

Outcome bayes_risk_checks() {
    const GatingSampler normal3 = [](CounterRng& rng) { return test::gaussian_vector(rng, 3); };
    const GatingSampler atoms = [](CounterRng& rng) {
        Vector z(1);
        z << (rng.uniform() < 0.5 ? 1.0 : -1.0);
        return z;
    };
    bool zero_theta = true;
    for (std::size_t n : {1u, 7u, 1000u}) {
        zero_theta = zero_theta && bayes_risk(Vector::Zero(3), normal3, n, n) == 0.5;
    }
    Vector ln3(1);
    ln3 << std::log(3.0);
    const double two_atom = bayes_risk(ln3, atoms, 1000, 5);
    CounterRng rng(505, Stream::probe);
    bool self_zero = true, scale_invariant = true;
    for (int k = 0; k < 50; ++k) {
        const Vector star = test::gaussian_vector(rng, 3);
        const Vector hat = test::gaussian_vector(rng, 3);
        self_zero = self_zero && excess_misclassification(star, star, normal3, 500, k) == 0.0;
        const double base = excess_misclassification(hat, star, normal3, 500, k);
        for (double c : {1e-3, 0.5, 7.0, 1e4}) {
            scale_invariant = scale_invariant && excess_misclassification(c * hat, star, normal3, 500, k) == base;
        }
    }
    return {zero_theta && two_atom == 0.25 && self_zero && scale_invariant,
            fmt("theta = 0 gives 0.5: %s; two-atom value %.17g; excess(theta*, theta*) = 0: %s; scale invariant: %s",
                zero_theta ? "yes" : "no", two_atom, self_zero ? "yes" : "no", scale_invariant ? "yes" : "no")};
}

// ---------------------------------------------------------------------------
// 6. Estimation rate

Outcome estimation_rate() {
    SyntheticConfig c;
    c.d = 100;
    c.s = 5;
    c.d_z = 20;
    c.L_bar = 8.0;
    c.sigma = 1.0;
    const double snr = c.L_bar * std::sqrt(2.0 / c.s) / c.sigma;
    const auto points = rate_probe(c, {500, 1000, 2000}, 20, 606);
    const double m0 = points[0].median_l2, m1 = points[1].median_l2, m2 = points[2].median_l2;
    const double ratio = m2 / m0;
    return {snr >= 5.0 && m1 < m0 && m2 < m1 && ratio <= 0.8,
            fmt("SNR %.2f; medians %.4f, %.4f, %.4f (strictly decreasing); ratio %.3f (<= 0.8)", snr, m0, m1, m2,
                ratio)};
}

// ---------------------------------------------------------------------------
// 7 and 8. Desk-scale experiments

struct DeskRuns {
    ResultTable l25, l5, d400;
    bool done = false;
};

ExperimentConfig desk_config(double L_bar, int d, const std::vector<std::string>& policies) {
    ExperimentConfig c = parse_config(std::string(LHB_CONFIG_DIR) + "/desk_synthetic.yaml");
    c.environment.synthetic.L_bar = L_bar;
    c.environment.synthetic.d = d;
    std::vector<PolicySpec> keep;
    for (const auto& p : c.policies) {
        if (std::find(policies.begin(), policies.end(), p.name) != policies.end()) keep.push_back(p);
    }
    c.policies = keep;
    c.jobs = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    return c;
}

DeskRuns& desk_state() {
    static DeskRuns runs;
    return runs;
}

DeskRuns& desk_runs() {
    DeskRuns& runs = desk_state();
    if (!runs.done) {
        const std::vector<std::string> all = {"hetero", "single_lasso", "separate_oracle"};
        const auto log = [](const std::string& msg) { std::fprintf(stderr, "  %s\n", msg.c_str()); };
        std::fprintf(stderr, "desk run L_bar = 2.5, d = 200\n");
        runs.l25 = run_experiment(desk_config(2.5, 200, all), log);
        std::fprintf(stderr, "desk run L_bar = 5, d = 200\n");
        runs.l5 = run_experiment(desk_config(5.0, 200, all), log);
        std::fprintf(stderr, "desk run L_bar = 2.5, d = 400 (hetero)\n");
        runs.d400 = run_experiment(desk_config(2.5, 400, {"hetero"}), log);
        runs.done = true;
    }
    return runs;
}

const SummaryRow& summary_at(const std::vector<SummaryRow>& rows, const std::string& policy, std::uint64_t round) {
    for (const auto& r : rows) {
        if (r.policy == policy && r.round == round) return r;
    }
    throw std::runtime_error("no summary row for " + policy);
}

std::map<int, EpisodeRow> episodes_of(const std::vector<EpisodeRow>& rows, const std::string& policy) {
    std::map<int, EpisodeRow> out;
    for (const auto& r : rows) {
        if (r.policy == policy) out[r.episode] = r;
    }
    return out;
}

Outcome figure1() {
    DeskRuns& runs = desk_runs();
    const std::uint64_t T = 12800;
    const int final_tau = max_episode(T, 200);

    std::string detail;
    bool pass = true;
    double plateau[2] = {0.0, 0.0};
    int idx = 0;
    for (const ResultTable* table : {&runs.l25, &runs.l5}) {
        const char* label = idx == 0 ? "L=2.5" : "L=5";
        const auto summary = summarize(*table);
        const auto episodes = summarize_episodes(*table);
        const auto het = episodes_of(episodes, "hetero");
        const auto single = episodes_of(episodes, "single_lasso");
        const auto sep = episodes_of(episodes, "separate_oracle");

        const double a_ratio = het.at(final_tau).regular_mean / het.at(1).regular_mean;
        const bool a = a_ratio <= 0.5;
        const double at_T = summary_at(summary, "hetero", T).strong_mean;
        const double at_half = summary_at(summary, "hetero", T / 2).strong_mean;
        const bool b = std::abs(at_T / at_half - 1.0) <= 0.25;
        const bool d = het.at(final_tau).strong_mean < single.at(final_tau).strong_mean;
        bool e = true;
        for (const auto& [tau, row] : het) {
            e = e && sep.at(tau).strong_avg_end <= row.strong_avg_end &&
                sep.at(tau).regular_avg_end <= row.regular_avg_end;
        }
        plateau[idx] = at_T;
        pass = pass && a && b && d && e;
        detail += fmt("%s: (a) final/episode-1 regular %.3f/%.3f = %.3f (<= 0.5) %s; "
                      "(b) strong avg T %.4f vs T/2 %.4f (+-25%%) %s; (d) hetero %.4f < single %.4f %s; "
                      "(e) separate <= hetero at boundaries %s. ",
                      label, het.at(final_tau).regular_mean, het.at(1).regular_mean, a_ratio, a ? "ok" : "FAIL",
                      at_T, at_half, b ? "ok" : "FAIL", het.at(final_tau).strong_mean,
                      single.at(final_tau).strong_mean, d ? "ok" : "FAIL", e ? "ok" : "FAIL");
        ++idx;
    }
    const double c_ratio = plateau[1] / plateau[0];
    const bool c = c_ratio >= 1.5 && c_ratio <= 2.5;
    pass = pass && c;
    detail += fmt("(c) plateau ratio %.3f in [1.5, 2.5] %s", c_ratio, c ? "ok" : "FAIL");
    return {pass, detail};
}

// err_l2 at episode boundaries, per replication, for one policy.
std::map<int, std::vector<double>> boundary_errors(const ResultTable& table, const std::string& policy) {
    std::map<int, std::vector<double>> out;
    for (const auto& row : table.rows) {
        if (row.policy == policy && row.err_l2) out[row.rep].push_back(*row.err_l2);
    }
    return out;
}

Outcome figure2() {
    DeskRuns& runs = desk_runs();
    std::string detail;
    bool pass = true;
    for (const auto& [label, table] : {std::pair{"L=2.5", &runs.l25}, std::pair{"L=5", &runs.l5}}) {
        const auto errors = boundary_errors(*table, "hetero");
        int monotone = 0;
        for (const auto& [rep, seq] : errors) {
            bool ok = true;
            for (std::size_t k = 1; k < seq.size(); ++k) ok = ok && seq[k] <= seq[k - 1];
            monotone += ok;
        }
        const double frac = static_cast<double>(monotone) / static_cast<double>(errors.size());
        pass = pass && frac >= 0.9;
        detail += fmt("%s: non-increasing in %d/%zu replications (>= 90%%) %s. ", label, monotone, errors.size(),
                      frac >= 0.9 ? "ok" : "FAIL");
    }
    const auto final_mean = [](const ResultTable& t) {
        double sum = 0.0;
        const auto errors = boundary_errors(t, "hetero");
        for (const auto& [rep, seq] : errors) sum += seq.back();
        return sum / static_cast<double>(errors.size());
    };
    const double e200 = final_mean(runs.l25);
    const double e400 = final_mean(runs.d400);
    const double inflation = e400 / e200 - 1.0;
    pass = pass && inflation <= 0.35;
    detail += fmt("final error d=200 %.4f, d=400 %.4f, inflation %.1f%% (<= 35%%) %s", e200, e400, 100 * inflation,
                  inflation <= 0.35 ? "ok" : "FAIL");
    return {pass, detail};
}

// ---------------------------------------------------------------------------
// 9. Determinism and pairing

bool paired(const ResultTable& table) {
    std::map<int, std::set<std::uint64_t>> by_rep;
    for (const auto& cell : table.cells) by_rep[cell.rep].insert(cell.checksum);
    for (const auto& [rep, sums] : by_rep) {
        if (sums.size() != 1) return false;
    }
    return !by_rep.empty();
}

Outcome determinism() {
    ExperimentConfig c = parse_config(std::string(LHB_CONFIG_DIR) + "/desk_synthetic.yaml");
    c.environment.synthetic.d = 60;
    c.environment.synthetic.d_z = 10;
    c.environment.synthetic.s = 5;
    c.environment.synthetic.theta_nnz = 5;
    c.horizon = 1400;
    c.replications = 3;
    c.jobs = 1;
    std::ostringstream first, second;
    const ResultTable a = run_experiment(c);
    write_results_csv(a, first);
    c.jobs = 4;
    const ResultTable b = run_experiment(c);
    write_results_csv(b, second);
    const bool same = first.str() == second.str() && !first.str().empty();
    bool checksums_match = a.cells.size() == b.cells.size();
    for (std::size_t i = 0; checksums_match && i < a.cells.size(); ++i) {
        checksums_match = a.cells[i].checksum == b.cells[i].checksum;
    }
    bool desk_paired = true;
    if (const DeskRuns& desk = desk_state(); desk.done) {
        desk_paired = paired(desk.l25) && paired(desk.l5) && paired(desk.d400);
    }
    const bool pass = same && checksums_match && paired(a) && desk_paired;
    return {pass, fmt("results.csv identical across reruns (%zu bytes): %s; checksums reproduced: %s; "
                      "policies paired within replications: %s",
                      first.str().size(), same ? "yes" : "no", checksums_match ? "yes" : "no",
                      paired(a) && desk_paired ? "yes" : "no")};
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<int, std::function<Outcome()>>> criteria = {
        {1, solver_correctness}, {2, posterior_oracle}, {3, oracle_identities}, {4, lower_bound_floor},
        {5, bayes_risk_checks},  {6, estimation_rate},  {7, figure1},           {8, figure2},
        {9, determinism},
    };
    std::set<int> selected;
    for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

    int failures = 0;
    for (const auto& [id, check] : criteria) {
        if (!selected.empty() && !selected.count(id)) continue;
        const auto start = std::chrono::steady_clock::now();
        Outcome out;
        try {
            out = check();
        } catch (const std::exception& e) {
            out = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::printf("%s criterion %d: %s [%.1f s]\n", out.pass ? "PASS" : "FAIL", id, out.detail.c_str(), secs);
        std::fflush(stdout);
        failures += !out.pass;
    }
    return failures == 0 ? 0 : 1;
}
