#include "lhb/model.hpp"

#include "lhb/errors.hpp"

#include <cmath>
#include <string>

namespace lhb {

namespace {

void require_finite(const Vector& v, const char* name) {
    if (!v.allFinite()) {
        throw ArgumentError(std::string(name) + " has non-finite entries");
    }
}

void require_same_size(Eigen::Index a, Eigen::Index b, const char* what) {
    if (a != b) {
        throw ArgumentError(std::string(what) + ": dimension mismatch (" + std::to_string(a) +
                            " vs " + std::to_string(b) + ")");
    }
}

Eigen::Index count_nonzero(const Vector& v) {
    return (v.array() != 0.0).count();
}

}  // namespace

ModelParams::ModelParams(Vector theta, Vector beta1, Vector beta2, double sigma)
    : theta_(std::move(theta)), beta1_(std::move(beta1)), beta2_(std::move(beta2)), sigma_(sigma) {
    require_finite(theta_, "theta");
    require_finite(beta1_, "beta1");
    require_finite(beta2_, "beta2");
    require_same_size(beta1_.size(), beta2_.size(), "beta1/beta2");
    if (!(sigma_ > 0.0) || !std::isfinite(sigma_)) {
        throw ArgumentError("sigma must be positive and finite");
    }
}

Eigen::Index ModelParams::nnz_theta() const noexcept { return count_nonzero(theta_); }
Eigen::Index ModelParams::nnz_beta1() const noexcept { return count_nonzero(beta1_); }
Eigen::Index ModelParams::nnz_beta2() const noexcept { return count_nonzero(beta2_); }

ModelParams ModelParams::swapped() const { return {-theta_, beta2_, beta1_, sigma_}; }

ModelParams ModelParams::with_theta(Vector theta) const {
    require_same_size(theta.size(), theta_.size(), "theta");
    return {std::move(theta), beta1_, beta2_, sigma_};
}

ModelParams ModelParams::with_beta1(Vector beta1) const {
    require_same_size(beta1.size(), beta1_.size(), "beta1");
    return {theta_, std::move(beta1), beta2_, sigma_};
}

ModelParams ModelParams::with_beta2(Vector beta2) const {
    require_same_size(beta2.size(), beta2_.size(), "beta2");
    return {theta_, beta1_, std::move(beta2), sigma_};
}

ModelParams ModelParams::with_sigma(double sigma) const { return {theta_, beta1_, beta2_, sigma}; }

Context::Context(Vector z, std::vector<Vector> arms) : z_(std::move(z)), arms_(std::move(arms)) {
    if (arms_.empty()) {
        throw ArgumentError("context needs at least one arm");
    }
    for (const auto& x : arms_) {
        require_same_size(x.size(), arms_.front().size(), "arm features");
    }
}

Interaction::Interaction(Context ctx, std::size_t a, double y, std::optional<Group> g)
    : context(std::move(ctx)), action(a), reward(y), group(g) {
    if (action >= context.num_arms()) {
        throw ArgumentError("action index " + std::to_string(action) + " out of range for " +
                            std::to_string(context.num_arms()) + " arms");
    }
}

double sigmoid(double x) noexcept {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double group_probability(const VectorRef& z, const VectorRef& theta) {
    require_same_size(z.size(), theta.size(), "group_probability");
    return sigmoid(z.dot(theta));
}

double mean_reward(const VectorRef& x, const VectorRef& beta) {
    require_same_size(x.size(), beta.size(), "mean_reward");
    return x.dot(beta);
}

double posterior_log_odds(double y, const VectorRef& x, const VectorRef& z, const ModelParams& params) {
    require_same_size(z.size(), params.gating_dim(), "posterior_weight (z)");
    require_same_size(x.size(), params.reward_dim(), "posterior_weight (x)");
    const double r1 = y - x.dot(params.beta1());
    const double r2 = y - x.dot(params.beta2());
    const double var = params.sigma() * params.sigma();
    return z.dot(params.theta()) + (r2 * r2 - r1 * r1) / (2.0 * var);
}

double posterior_weight(double y, const VectorRef& x, const VectorRef& z, const ModelParams& params) {
    return sigmoid(posterior_log_odds(y, x, z, params));
}

Group classify(const VectorRef& z, const VectorRef& theta) {
    require_same_size(z.size(), theta.size(), "classify");
    return z.dot(theta) >= 0.0 ? Group::one : Group::two;
}

std::size_t greedy_arm(const Context& context, const VectorRef& beta) {
    std::size_t best = 0;
    double best_value = mean_reward(context.arm(0), beta);
    for (std::size_t k = 1; k < context.num_arms(); ++k) {
        const double value = mean_reward(context.arm(k), beta);
        if (value > best_value) {
            best = k;
            best_value = value;
        }
    }
    return best;
}

}  // namespace lhb
