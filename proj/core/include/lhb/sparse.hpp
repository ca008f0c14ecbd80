#pragma once

#include "lhb/model.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

namespace lhb {

/// Iteration controls shared by the penalized solvers.
struct SolverControl {
    double tol = 1e-7;
    int max_iters = 10000;
    /// Called after every coordinate-descent sweep or accepted proximal step.
    std::function<void(const Vector&)> on_iterate;
};

/// min_beta (1 / (2 n sigma^2)) sum_i w_i (y_i - x_i'beta)^2 + lambda ||beta||_1
class WeightedLassoProblem {
public:
    WeightedLassoProblem(std::shared_ptr<const Matrix> design, Vector response, Vector weights,
                         double sigma, double lambda);
    WeightedLassoProblem(Matrix design, Vector response, Vector weights, double sigma, double lambda);

    const Matrix& design() const noexcept { return *design_; }
    const std::shared_ptr<const Matrix>& shared_design() const noexcept { return design_; }
    const Vector& response() const noexcept { return response_; }
    const Vector& weights() const noexcept { return weights_; }
    double sigma() const noexcept { return sigma_; }
    double lambda() const noexcept { return lambda_; }
    Eigen::Index rows() const noexcept { return design_->rows(); }
    Eigen::Index cols() const noexcept { return design_->cols(); }

    WeightedLassoProblem with_lambda(double lambda) const;

    /// Smallest lambda for which beta = 0 is optimal: max_j |(1/(n sigma^2)) sum_i w_i x_ij y_i|.
    double lambda_max() const;

private:
    std::shared_ptr<const Matrix> design_;
    Vector response_;
    Vector weights_;
    double sigma_;
    double lambda_;
};

/// min_theta -(1/n) sum_i [w_i log p(z_i'theta) + (1 - w_i) log(1 - p(z_i'theta))] + lambda ||theta||_1
/// with fractional responses w_i in [0, 1].
class LogisticProblem {
public:
    LogisticProblem(std::shared_ptr<const Matrix> design, Vector responses, double lambda);
    LogisticProblem(Matrix design, Vector responses, double lambda);
    /// complements[i] is 1 - responses[i] computed independently (e.g. sigmoid(-a)
    /// next to sigmoid(a)). Swapping the two vectors then negates the solution
    /// exactly.
    LogisticProblem(std::shared_ptr<const Matrix> design, Vector responses, Vector complements, double lambda);

    const Matrix& design() const noexcept { return *design_; }
    const std::shared_ptr<const Matrix>& shared_design() const noexcept { return design_; }
    const Vector& responses() const noexcept { return responses_; }
    const Vector& complements() const noexcept { return complements_; }
    double lambda() const noexcept { return lambda_; }
    Eigen::Index rows() const noexcept { return design_->rows(); }
    Eigen::Index cols() const noexcept { return design_->cols(); }

    LogisticProblem with_lambda(double lambda) const;

    /// max_j |(1/n) sum_i (0.5 - w_i) z_ij|, the KKT threshold at theta = 0.
    double lambda_max() const;

private:
    std::shared_ptr<const Matrix> design_;
    Vector responses_;
    Vector complements_;
    double lambda_;
};

/// sign(v) * max(|v| - t, 0)
double soft_threshold(double v, double t) noexcept;

double lasso_objective(const WeightedLassoProblem& p, const VectorRef& beta);
/// Gradient of the smooth (quadratic) part.
Vector lasso_gradient(const WeightedLassoProblem& p, const VectorRef& beta);
/// Largest violation of the lasso optimality conditions at beta.
double lasso_kkt_residual(const WeightedLassoProblem& p, const VectorRef& beta);

double logistic_objective(const LogisticProblem& p, const VectorRef& theta);
Vector logistic_gradient(const LogisticProblem& p, const VectorRef& theta);
double logistic_kkt_residual(const LogisticProblem& p, const VectorRef& theta);

/// Largest KKT violation given the smooth gradient: |g_j + lambda sign(b_j)| on the
/// support, max(|g_j| - lambda, 0) off it.
double kkt_residual(const VectorRef& gradient, const VectorRef& coef, double lambda);

/// Cyclic coordinate descent with closed-form soft-threshold updates.
/// Stops once a full sweep moves no coordinate by more than tol and the KKT
/// residual is at most tol.
Vector solve_weighted_lasso(const WeightedLassoProblem& p, const VectorRef& init,
                            const SolverControl& control = {});

/// Same solver on a precomputed quadratic: minimizes 0.5 b'Gb - c'b + lambda ||b||_1.
/// `gram` must be symmetric positive semidefinite.
Vector solve_lasso_gram(const Matrix& gram, const Vector& linear, double lambda, const VectorRef& init,
                        const SolverControl& control = {});

/// Proximal gradient with Barzilai-Borwein trial steps and halving backtracking
/// under a sufficient-decrease test (constant 1e-4). Stops when the KKT residual
/// at the current iterate is at most tol.
Vector solve_penalized_logistic(const LogisticProblem& p, const VectorRef& init,
                                const SolverControl& control = {});

struct CvOptions {
    int folds = 5;
    /// Candidate penalties. Empty means default_lambda_grid(lambda_max).
    std::vector<double> grid;
    int grid_size = 20;
    double grid_ratio = 1e-3;
    std::uint64_t seed = 0;
    SolverControl control;
};

/// `size` log-spaced values from lambda_max down to ratio * lambda_max.
std::vector<double> default_lambda_grid(double lambda_max, int size = 20, double ratio = 1e-3);

/// Deterministic seeded assignment of n samples to `folds` folds of near-equal size.
std::vector<int> fold_assignment(Eigen::Index n, int folds, std::uint64_t seed);

/// Grid value with the smallest mean held-out weighted squared error.
/// Ties go to the larger lambda. The problem's own lambda is ignored.
double cross_validate_lambda(const WeightedLassoProblem& family, const CvOptions& options);

/// Grid value with the smallest mean held-out weighted negative log-likelihood.
double cross_validate_lambda(const LogisticProblem& family, const CvOptions& options);

}  // namespace lhb
