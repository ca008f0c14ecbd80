#include "lhb/metrics.hpp"

#include "lhb/errors.hpp"

#include <algorithm>
#include <cmath>

namespace lhb {

double strong_oracle_value(const Context& context, Group g, const ModelParams& truth) {
    const Vector& beta = truth.beta(g);
    return mean_reward(context.arm(greedy_arm(context, beta)), beta);
}

double regular_oracle_value(const Context& context, Group g, const ModelParams& truth) {
    const Group guess = classify(context.z(), truth.theta());
    const std::size_t arm = greedy_arm(context, truth.beta(guess));
    return mean_reward(context.arm(arm), truth.beta(g));
}

double instant_strong_regret(const Context& context, Group g, std::size_t chosen, const ModelParams& truth) {
    return strong_oracle_value(context, g, truth) - mean_reward(context.arm(chosen), truth.beta(g));
}

double instant_regular_regret(const Context& context, Group g, std::size_t chosen, const ModelParams& truth) {
    return regular_oracle_value(context, g, truth) - mean_reward(context.arm(chosen), truth.beta(g));
}

void RegretTrace::push(const RoundRecord& record) {
    const double s = strong_cum_.empty() ? 0.0 : strong_cum_.back();
    const double r = regular_cum_.empty() ? 0.0 : regular_cum_.back();
    records_.push_back(record);
    strong_cum_.push_back(s + record.strong);
    regular_cum_.push_back(r + record.regular);
}

double bayes_risk(const VectorRef& theta, const GatingSampler& sampler, std::size_t n_samples, std::uint64_t seed) {
    if (n_samples < 1) {
        throw ArgumentError("bayes_risk needs at least one sample");
    }
    double total = 0.0;
    for (std::size_t i = 0; i < n_samples; ++i) {
        CounterRng rng(seed, Stream::probe, i);
        const double p = group_probability(sampler(rng), theta);
        total += std::min(p, 1.0 - p);
    }
    return total / static_cast<double>(n_samples);
}

double excess_misclassification(const VectorRef& theta_hat, const VectorRef& theta_star,
                                const GatingSampler& sampler, std::size_t n_samples, std::uint64_t seed) {
    if (n_samples < 1) {
        throw ArgumentError("excess_misclassification needs at least one sample");
    }
    if (theta_hat.size() != theta_star.size()) {
        throw ArgumentError("excess_misclassification: dimension mismatch");
    }
    double total = 0.0;
    for (std::size_t i = 0; i < n_samples; ++i) {
        CounterRng rng(seed, Stream::probe, i);
        const Vector z = sampler(rng);
        if (classify(z, theta_hat) != classify(z, theta_star)) {
            total += std::abs(2.0 * group_probability(z, theta_star) - 1.0);
        }
    }
    return total / static_cast<double>(n_samples);
}

EstimationError estimation_error(const ModelParams& estimate, const ModelParams& truth, Permutation permutation) {
    if (estimate.gating_dim() != truth.gating_dim() || estimate.reward_dim() != truth.reward_dim()) {
        throw ArgumentError("estimation_error: dimension mismatch");
    }
    const auto norms = [](const Vector& v) { return std::pair{v.norm(), v.lpNorm<1>()}; };
    const auto b_id1 = norms(estimate.beta1() - truth.beta1());
    const auto b_id2 = norms(estimate.beta2() - truth.beta2());
    const auto b_sw1 = norms(estimate.beta1() - truth.beta2());
    const auto b_sw2 = norms(estimate.beta2() - truth.beta1());
    const auto t_id = norms(estimate.theta() - truth.theta());
    const auto t_sw = norms(estimate.theta() + truth.theta());

    if (permutation == Permutation::joint) {
        const double id = b_id1.first + b_id2.first + t_id.first;
        const double sw = b_sw1.first + b_sw2.first + t_sw.first;
        if (sw < id) {
            return {sw, b_sw1.second + b_sw2.second + t_sw.second, true};
        }
        return {id, b_id1.second + b_id2.second + t_id.second, false};
    }

    const double beta_id = b_id1.first + b_id2.first;
    const double beta_sw = b_sw1.first + b_sw2.first;
    const bool swapped = beta_sw < beta_id;
    const auto& theta_best = t_sw.first < t_id.first ? t_sw : t_id;
    EstimationError out;
    out.swapped = swapped;
    out.l2 = (swapped ? beta_sw : beta_id) + theta_best.first;
    out.l1 = (swapped ? b_sw1.second + b_sw2.second : b_id1.second + b_id2.second) + theta_best.second;
    return out;
}

}  // namespace lhb
