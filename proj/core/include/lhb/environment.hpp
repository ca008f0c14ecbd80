#pragma once

#include "lhb/em.hpp"
#include "lhb/model.hpp"
#include "lhb/rng.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace lhb {

/// Draws one gating feature vector z from an environment's context distribution.
using GatingSampler = std::function<Vector(CounterRng&)>;

/// Synthetic design: AR(1) arm features around per-arm means, sparse opposing
/// reward coefficients, and a sparse uniform gating vector.
struct SyntheticConfig {
    int d = 500;
    int d_z = 50;
    int s = 20;
    int K = 2;
    double L_bar = 2.5;
    double sigma = 1.0;
    double rho = 0.5;
    /// Arm k's mean entries are drawn around mu_gap * (1 - 2k/(K-1)), i.e. +gap and -gap for K = 2.
    double mu_gap = 1.0;
    double mu_sd = 0.5;
    int theta_nnz = 10;

    void validate() const;
};

struct GroundTruth {
    /// True parameters. params.sigma() equals noise_sd when noise_sd > 0 and 1 otherwise.
    ModelParams params;
    double noise_sd = 1.0;
    std::vector<Vector> arm_means;
    /// Lower Cholesky factor of the shared arm-feature covariance.
    Matrix arm_cov_chol;
};

/// Builds the synthetic ground truth. beta1 is L_bar/s on coordinates [0, s);
/// beta2 is -L_bar/s on [d/2, d/2 + s); theta's first theta_nnz entries are Uniform[-1, 1].
GroundTruth synthetic_truth(const SyntheticConfig& config, std::uint64_t seed);

/// Everything the simulator draws for one round. `rewards` holds all K
/// counterfactual rewards sharing the single noise draw.
struct Round {
    Context context;
    Group group;
    Vector rewards;
    double noise = 0.0;
};

/// A seeded, immutable simulator. sample_round(i) is a pure function of
/// (seed, i): gating features, arm features, group and noise each come from
/// their own counter-based substream keyed by the round index.
class Environment {
public:
    virtual ~Environment() = default;

    virtual Round sample_round(std::uint64_t round) const = 0;
    virtual const ModelParams& truth() const = 0;
    virtual std::size_t num_arms() const = 0;
    virtual Vector sample_gating(CounterRng& rng) const = 0;

    GatingSampler gating_sampler() const {
        return [this](CounterRng& rng) { return sample_gating(rng); };
    }
    std::uint64_t seed() const noexcept { return seed_; }

protected:
    explicit Environment(std::uint64_t seed) : seed_(seed) {}

    /// Group and shared noise for a round with gating score z'theta.
    Group draw_group(std::uint64_t round, const VectorRef& z) const;
    double draw_noise(std::uint64_t round, double sd) const;

private:
    std::uint64_t seed_;
};

class SyntheticEnvironment final : public Environment {
public:
    SyntheticEnvironment(GroundTruth truth, double rho, std::uint64_t seed);
    /// Draws the ground truth from `config` with `seed`, then simulates with the same seed.
    SyntheticEnvironment(const SyntheticConfig& config, std::uint64_t seed);

    Round sample_round(std::uint64_t round) const override;
    const ModelParams& truth() const override { return truth_.params; }
    std::size_t num_arms() const override { return truth_.arm_means.size(); }
    Vector sample_gating(CounterRng& rng) const override;

    const GroundTruth& ground_truth() const noexcept { return truth_; }

private:
    GroundTruth truth_;
    double rho_;
};

/// Two-arm construction with beta1 = (L, 0, ...), beta2 = (-L, 0, ...). Every
/// coordinate of arm a in {1, 2} is u_j + (x_bar/2)(3 - 2a) with a shared
/// u_j ~ Uniform[-x_bar/2, x_bar/2]. Gating features are standard normal.
struct LowerBoundConfig {
    double L_bar = 1.0;
    double x_bar = 1.0;
    int d = 1;
    Vector theta = Vector::Zero(1);
    double sigma = 1.0;
};

class LowerBoundEnvironment final : public Environment {
public:
    LowerBoundEnvironment(LowerBoundConfig config, std::uint64_t seed);

    Round sample_round(std::uint64_t round) const override;
    const ModelParams& truth() const override { return params_; }
    std::size_t num_arms() const override { return 2; }
    Vector sample_gating(CounterRng& rng) const override;

    const LowerBoundConfig& config() const noexcept { return config_; }

private:
    LowerBoundConfig config_;
    ModelParams params_;
};

/// Build the lower-bound construction (seeded simulator over it).
std::unique_ptr<Environment> lower_bound_env(double L_bar, double x_bar, const Vector& theta_star,
                                             std::uint64_t seed, int d = 1);

// ---------------------------------------------------------------------------
// Semi-synthetic pipeline

/// Delimiter-separated text with a header row; every cell kept as text.
struct DataTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::size_t column_index(const std::string& name) const;
};

DataTable parse_table(const std::string& text, char delimiter = ',');
DataTable read_table(const std::string& path, char delimiter = ',');

/// Column roles for the semi-synthetic ground truth.
struct TableRoles {
    std::string reward_column;
    std::string group_column;
    /// Label treated as group 1. Empty means the lexicographically smallest label.
    std::string group_one;
    std::vector<std::string> z_columns;
    /// One list of feature columns per arm; all lists have the same length.
    std::vector<std::vector<std::string>> arm_columns;
    /// Logged arm index (0-based). Required when there is more than one arm.
    std::string action_column;
    std::size_t min_rows_per_group = 100;
};

struct SemiSyntheticTruth {
    GroundTruth ground;
    /// Feature rows resampled with replacement during simulation.
    Matrix z_rows;
    std::vector<Matrix> arm_rows;
};

/// Fits the ground truth: penalized logistic regression of the group label on z,
/// a lasso of reward on the logged arm's features within each group, and the
/// pooled residual standard deviation.
SemiSyntheticTruth semi_synthetic_truth(const DataTable& table, const TableRoles& roles,
                                        const LambdaPolicy& lambda = {}, std::uint64_t seed = 0);

class SemiSyntheticEnvironment final : public Environment {
public:
    SemiSyntheticEnvironment(std::shared_ptr<const SemiSyntheticTruth> truth, std::uint64_t seed);

    Round sample_round(std::uint64_t round) const override;
    const ModelParams& truth() const override { return truth_->ground.params; }
    std::size_t num_arms() const override { return truth_->arm_rows.size(); }
    Vector sample_gating(CounterRng& rng) const override;

private:
    std::shared_ptr<const SemiSyntheticTruth> truth_;
};

}  // namespace lhb
