#pragma once

#include "lhb/em.hpp"
#include "lhb/model.hpp"

#include <cstdint>
#include <vector>

namespace lhb {

/// What the stage-2 two-component mixture is fitted to.
enum class ClusterModel {
    /// Mixture of two linear regressions of y on the screened features, shared
    /// noise variance. Separates groups even when arm identity dominates x.
    conditional,
    /// Gaussian mixture on the stacked vectors (y, x_S) with a shared spherical covariance.
    joint_spherical,
};

struct InitConfig {
    LambdaPolicy lambda;
    ClusterModel cluster_model = ClusterModel::conditional;
    int gmm_restarts = 10;
    int gmm_max_iters = 500;
    double gmm_tol = 1e-8;
    /// Replace `sigma` with the pooled within-cluster residual standard deviation.
    bool estimate_sigma = false;
    double sigma = 1.0;
    /// Cap on the screened support; 0 means n / 40 (at least 1), which keeps the
    /// stage-2 mixture at roughly 20 samples per fitted coefficient.
    int max_support = 0;
    SolverControl control;
};

/// Outcome of one two-component mixture fit.
struct MixtureFit {
    /// Responsibility of component 0 for each sample.
    Vector resp;
    /// Hard labels (0 or 1) by larger responsibility; ties go to component 0.
    std::vector<int> labels;
    double loglik = 0.0;
    /// Objective after every EM iteration of the winning restart.
    std::vector<double> trace;
    int restart = 0;
    bool converged = false;
};

/// Two-component mixture EM with `restarts` seeded starts (k-means++ style
/// seeding); keeps the highest final log-likelihood, earliest restart on ties.
/// For the conditional model `x` holds the regressors; for the joint model the
/// clustered vectors are the rows of [y, x].
MixtureFit fit_two_component_mixture(const Matrix& x, const Vector& y, ClusterModel model, int restarts,
                                     int max_iters, double tol, std::uint64_t seed);

struct InitDiagnostics {
    /// Screened support of the pooled lasso.
    std::vector<Eigen::Index> support;
    /// Final group label (1 or 2) of every sample after orientation.
    std::vector<int> labels;
    /// True when a cluster was too small and the pooled fallback was used.
    bool degenerate = false;
    MixtureFit mixture;
};

struct InitResult {
    ModelParams params;
    InitDiagnostics diagnostics;
};

/// Three-stage initializer: pooled lasso screening, two-component clustering on
/// the screened features, then a penalized logistic fit of the cluster label on z
/// and one lasso per cluster.
///
/// Orientation: the cluster whose coefficient vector has the larger first nonzero
/// entry becomes group 1; ties fall to the larger l2 norm, then to the cluster
/// holding sample 0. If either cluster has fewer than 2 samples, both betas are
/// the pooled fit and theta = 0.
InitResult initialize(const std::vector<Interaction>& data, const InitConfig& config, std::uint64_t seed);

}  // namespace lhb
