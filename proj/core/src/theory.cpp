#include "lhb/theory.hpp"

#include "lhb/errors.hpp"
#include "lhb/metrics.hpp"
#include "lhb/rng.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <random>

namespace lhb {

namespace {

SpectrumProxy spectrum(const std::string& name, const Matrix& rows) {
    const Eigen::RowVectorXd mean = rows.colwise().mean();
    const Matrix centred = rows.rowwise() - mean;
    const Matrix cov = centred.transpose() * centred / static_cast<double>(rows.rows() - 1);
    Eigen::SelfAdjointEigenSolver<Matrix> solver(cov, Eigen::EigenvaluesOnly);
    return {name, solver.eigenvalues().minCoeff(), solver.eigenvalues().maxCoeff()};
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t m = v.size() / 2;
    return v.size() % 2 == 1 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

Vector perturbed(const Vector& v, CounterRng& rng, double sd) {
    std::normal_distribution<double> normal(0.0, sd);
    Vector out = v;
    for (Eigen::Index i = 0; i < out.size(); ++i) out[i] += normal(rng);
    return out;
}

}  // namespace

AssumptionReport check_assumptions(const Environment& env, std::size_t n_probe,
                                   const AssumptionThresholds& thresholds, std::uint64_t seed) {
    if (n_probe < 100) {
        throw ArgumentError("check_assumptions needs n_probe >= 100");
    }
    const ModelParams& truth = env.truth();
    const auto n = static_cast<Eigen::Index>(n_probe);
    Matrix z(n, truth.gating_dim());
    std::vector<Matrix> arms(env.num_arms(), Matrix(n, truth.reward_dim()));
    AssumptionReport report;
    report.thresholds = thresholds;
    for (Eigen::Index i = 0; i < n; ++i) {
        const Round round = env.sample_round(derive_seed(seed, static_cast<std::uint64_t>(i)));
        z.row(i) = round.context.z().transpose();
        for (std::size_t k = 0; k < arms.size(); ++k) {
            arms[k].row(i) = round.context.arm(k).transpose();
        }
        report.gating_bound = std::max(report.gating_bound, std::abs(round.context.z().dot(truth.theta())));
    }
    report.snr = (truth.beta1() - truth.beta2()).norm() / truth.sigma();

    report.spectra.push_back(spectrum("z", z));
    for (std::size_t k = 0; k < arms.size(); ++k) {
        report.spectra.push_back(spectrum("x" + std::to_string(k + 1), arms[k]));
    }
    report.eig_min = report.spectra.front().eig_min;
    report.eig_max = report.spectra.front().eig_max;
    for (const auto& s : report.spectra) {
        report.eig_min = std::min(report.eig_min, s.eig_min);
        report.eig_max = std::max(report.eig_max, s.eig_max);
    }
    report.gating_ok = report.gating_bound <= thresholds.gating_bound_max;
    report.snr_ok = report.snr >= thresholds.snr_min;
    report.eigen_ok = report.eig_min >= thresholds.eig_floor && report.eig_max <= thresholds.eig_ceiling;
    return report;
}

std::vector<RatePoint> rate_probe(const SyntheticConfig& env_config, const std::vector<std::size_t>& n_grid, int reps,
                                  std::uint64_t seed, const EmConfig& em, double perturb_sd) {
    if (n_grid.empty() || reps < 1) {
        throw ArgumentError("rate_probe needs a non-empty grid and at least one replication");
    }
    for (std::size_t g = 1; g < n_grid.size(); ++g) {
        if (n_grid[g] <= n_grid[g - 1]) {
            throw ArgumentError("rate_probe grid must be strictly increasing");
        }
    }
    if (!(perturb_sd >= 0.0)) {
        throw ArgumentError("perturbation sd must be nonnegative");
    }
    std::vector<RatePoint> out;
    for (std::size_t n : n_grid) {
        out.push_back({n, 0.0, {}});
    }
    for (int r = 0; r < reps; ++r) {
        const std::uint64_t rep_seed = derive_seed(seed, static_cast<std::uint64_t>(r));
        const SyntheticEnvironment env(env_config, rep_seed);
        const ModelParams& truth = env.truth();
        for (std::size_t g = 0; g < n_grid.size(); ++g) {
            // Disjoint round ranges give fresh samples per grid point.
            const std::uint64_t offset = static_cast<std::uint64_t>(g + 1) << 40;
            std::vector<Interaction> data;
            data.reserve(n_grid[g]);
            for (std::size_t i = 0; i < n_grid[g]; ++i) {
                Round round = env.sample_round(offset + i);
                CounterRng pick(rep_seed, Stream::explore, offset + i);
                const auto arm = std::min(static_cast<std::size_t>(pick.uniform() * static_cast<double>(env.num_arms())),
                                          env.num_arms() - 1);
                const double y = round.rewards[static_cast<Eigen::Index>(arm)];
                data.emplace_back(std::move(round.context), arm, y, round.group);
            }
            CounterRng noise(rep_seed, Stream::perturb, g);
            Vector theta = perturbed(truth.theta(), noise, perturb_sd);
            Vector beta1 = perturbed(truth.beta1(), noise, perturb_sd);
            Vector beta2 = perturbed(truth.beta2(), noise, perturb_sd);
            const ModelParams init(std::move(theta), std::move(beta1), std::move(beta2), truth.sigma());
            EmConfig config = em;
            config.cv_seed = derive_seed(rep_seed, 1000 + g);
            const EmResult fit = em_fit(data, init, config);
            out[g].errors.push_back(estimation_error(fit.params, truth).l2);
        }
    }
    for (auto& point : out) {
        point.median_l2 = median(point.errors);
    }
    return out;
}

}  // namespace lhb
