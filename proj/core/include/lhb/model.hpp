#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <optional>
#include <vector>

namespace lhb {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using VectorRef = Eigen::Ref<const Eigen::VectorXd>;

/// Latent group label. Values match the mathematical labels 1 and 2.
enum class Group : int { one = 1, two = 2 };

constexpr Group other(Group g) noexcept { return g == Group::one ? Group::two : Group::one; }

/// Parameters of the two-group mixed linear reward model with logistic gating:
/// P(g = 1 | z) = sigmoid(z'theta), y | g = <x, beta_g> + N(0, sigma^2).
///
/// Dimensions are fixed at construction. All coefficients must be finite and sigma > 0.
class ModelParams {
public:
    ModelParams(Vector theta, Vector beta1, Vector beta2, double sigma);

    const Vector& theta() const noexcept { return theta_; }
    const Vector& beta1() const noexcept { return beta1_; }
    const Vector& beta2() const noexcept { return beta2_; }
    const Vector& beta(Group g) const noexcept { return g == Group::one ? beta1_ : beta2_; }
    double sigma() const noexcept { return sigma_; }

    Eigen::Index gating_dim() const noexcept { return theta_.size(); }
    Eigen::Index reward_dim() const noexcept { return beta1_.size(); }

    /// Number of nonzero coefficients in each block (sparsity metadata).
    Eigen::Index nnz_theta() const noexcept;
    Eigen::Index nnz_beta1() const noexcept;
    Eigen::Index nnz_beta2() const noexcept;

    /// The same model with the group labels exchanged: (-theta, beta2, beta1).
    ModelParams swapped() const;

    // Copies with one block replaced; dimensions must match.
    ModelParams with_theta(Vector theta) const;
    ModelParams with_beta1(Vector beta1) const;
    ModelParams with_beta2(Vector beta2) const;
    ModelParams with_sigma(double sigma) const;

private:
    Vector theta_;
    Vector beta1_;
    Vector beta2_;
    double sigma_;
};

/// One arrival: gating features z and one feature vector per arm.
class Context {
public:
    Context(Vector z, std::vector<Vector> arms);

    const Vector& z() const noexcept { return z_; }
    const std::vector<Vector>& arms() const noexcept { return arms_; }
    const Vector& arm(std::size_t k) const { return arms_.at(k); }
    std::size_t num_arms() const noexcept { return arms_.size(); }
    Eigen::Index reward_dim() const noexcept { return arms_.front().size(); }

private:
    Vector z_;
    std::vector<Vector> arms_;
};

/// One logged round. `group` is only known for simulated or labelled data.
struct Interaction {
    Interaction(Context context, std::size_t action, double reward,
                std::optional<Group> group = std::nullopt);

    Context context;
    std::size_t action;
    double reward;
    std::optional<Group> group;

    const Vector& chosen_features() const { return context.arm(action); }
};

/// Logistic function 1 / (1 + exp(-x)), evaluated without overflow.
double sigmoid(double x) noexcept;

/// P(g = 1 | z) = sigmoid(z'theta).
double group_probability(const VectorRef& z, const VectorRef& theta);

/// <x, beta>.
double mean_reward(const VectorRef& x, const VectorRef& beta);

/// Log-odds of group 1 given an observed reward:
/// z'theta + [(y - x'beta2)^2 - (y - x'beta1)^2] / (2 sigma^2).
double posterior_log_odds(double y, const VectorRef& x, const VectorRef& z, const ModelParams& params);

/// Posterior probability that (y, x, z) came from group 1, computed as the
/// sigmoid of posterior_log_odds so that neither Gaussian density can underflow.
double posterior_weight(double y, const VectorRef& x, const VectorRef& z, const ModelParams& params);

/// Bayes rule: group 1 iff z'theta >= 0.
Group classify(const VectorRef& z, const VectorRef& theta);

/// Index of the arm maximizing <x_k, beta>; ties go to the lowest index.
std::size_t greedy_arm(const Context& context, const VectorRef& beta);

}  // namespace lhb
