#pragma once

#include "lhb/model.hpp"
#include "lhb/sparse.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace lhb {

/// How each M-step chooses its penalty.
enum class LambdaMode { cross_validation, theoretical, fixed };

/// Constants of the theoretical penalty schedule. Requires c_bar^2 * kappa < 1/2.
struct LambdaScheduleConstants {
    double c_bar = 1.0;
    double kappa = 0.1;
    double delta0 = 0.0;
    double s = 1.0;
    /// Ambient dimension; only log(d) enters, so non-integer values are accepted.
    double d = 2.0;
};

/// Penalty for M-step iteration t + 1 on folds of size n:
///   2 C (1 - (2k)^(t+1)) / (1 - 2k) * sqrt(log d / n) + C kappa (2k)^t / sqrt(s) * delta0,
/// with k = C^2 kappa.
double lambda_schedule(int t, double n, const LambdaScheduleConstants& constants);

/// Penalty selection shared by the estimator, the initializer and the baselines.
struct LambdaPolicy {
    LambdaMode mode = LambdaMode::cross_validation;
    double fixed_value = 0.0;
    int folds = 5;
    int grid_size = 20;
    double grid_ratio = 1e-3;
    /// Tolerance floor for the held-out path fits, which only rank the grid.
    /// The final fit at the chosen penalty uses the caller's tolerance.
    double cv_tol = 1e-5;
};

struct EmConfig {
    int t_max = 1;
    LambdaPolicy lambda;
    std::optional<LambdaScheduleConstants> schedule;
    SolverControl control;
    std::uint64_t cv_seed = 0;
};

struct EmIteration {
    int t = 0;
    Eigen::Index fold_size = 0;
    double lambda_beta1 = 0.0;
    double lambda_beta2 = 0.0;
    double lambda_theta = 0.0;
    double weight_mass = 0.0;  // sum of responsibilities on the fold
};

struct EmDiagnostics {
    std::vector<EmIteration> iterations;
    std::vector<std::string> warnings;
};

struct EmResult {
    ModelParams params;
    EmDiagnostics diagnostics;
};

/// Sample-split EM for the mixed linear reward model.
///
/// The data are cut into t_max contiguous folds in arrival order (the last fold
/// takes the remainder). Iteration t computes responsibilities on fold t at the
/// previous iterate, then solves the two weighted lasso problems and the
/// penalized fractional logistic problem on that fold. sigma is held fixed.
///
/// If a group's responsibility mass on a fold is below 1e-8 * n, its beta update
/// is skipped and a warning is recorded.
EmResult em_fit(const std::vector<Interaction>& data, const ModelParams& init, const EmConfig& config);

/// Resolve a penalty for a lasso problem according to `policy`.
double choose_lambda(const WeightedLassoProblem& problem, const LambdaPolicy& policy,
                     const SolverControl& control, std::uint64_t seed);
double choose_lambda(const LogisticProblem& problem, const LambdaPolicy& policy, const SolverControl& control,
                     std::uint64_t seed);

/// Design matrices of a batch of interactions: rows x_{i,a_i}, z_i and rewards y_i.
struct Batch {
    Matrix x;
    Matrix z;
    Vector y;
};
Batch make_batch(const std::vector<Interaction>& data, std::size_t begin, std::size_t end);
inline Batch make_batch(const std::vector<Interaction>& data) { return make_batch(data, 0, data.size()); }

}  // namespace lhb
