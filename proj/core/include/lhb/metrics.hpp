#pragma once

#include "lhb/environment.hpp"
#include "lhb/model.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace lhb {

/// max_k <x_k, beta_g>: what an agent that knows the realized group earns.
double strong_oracle_value(const Context& context, Group g, const ModelParams& truth);

/// <x_a, beta_g> where a is greedy for the Bayes-classified group classify(z, theta*).
double regular_oracle_value(const Context& context, Group g, const ModelParams& truth);

/// max_k <x_k, beta_g> - <x_chosen, beta_g>. Never negative.
double instant_strong_regret(const Context& context, Group g, std::size_t chosen, const ModelParams& truth);

/// regular_oracle_value - <x_chosen, beta_g>. Negative when the regular oracle misclassifies
/// and the learner does not.
double instant_regular_regret(const Context& context, Group g, std::size_t chosen, const ModelParams& truth);

struct RoundRecord {
    std::uint64_t round = 0;  // 1-based
    int episode = 0;
    double strong = 0.0;
    double regular = 0.0;
    std::size_t chosen = 0;
    Group group = Group::one;
    std::optional<Group> classified;
};

/// Per-round regrets of one policy run with exact running sums.
class RegretTrace {
public:
    void push(const RoundRecord& record);

    const std::vector<RoundRecord>& records() const noexcept { return records_; }
    std::size_t size() const noexcept { return records_.size(); }
    /// Cumulative regrets through record i (0-based).
    double strong_cum(std::size_t i) const { return strong_cum_.at(i); }
    double regular_cum(std::size_t i) const { return regular_cum_.at(i); }
    /// Cumulative regret divided by the number of rounds so far.
    double strong_avg(std::size_t i) const { return strong_cum(i) / static_cast<double>(i + 1); }
    double regular_avg(std::size_t i) const { return regular_cum(i) / static_cast<double>(i + 1); }

private:
    std::vector<RoundRecord> records_;
    std::vector<double> strong_cum_;
    std::vector<double> regular_cum_;
};

/// Monte Carlo estimate of E[min(p, 1 - p)] with p = sigmoid(z'theta). Draw i uses
/// the probe substream block i of `seed`.
double bayes_risk(const VectorRef& theta, const GatingSampler& sampler, std::size_t n_samples, std::uint64_t seed);

/// R(theta_hat) - R(theta*) with common random numbers: the mean over draws of
/// |2p* - 1| * 1{classify(z, theta_hat) != classify(z, theta*)}.
double excess_misclassification(const VectorRef& theta_hat, const VectorRef& theta_star,
                                const GatingSampler& sampler, std::size_t n_samples, std::uint64_t seed);

enum class Permutation {
    /// One global label swap: (beta1, beta2, theta) against (beta2, beta1, -theta).
    joint,
    /// Each block takes its own best orientation (the beta pair, then theta).
    per_block,
};

struct EstimationError {
    double l2 = 0.0;
    double l1 = 0.0;
    /// Whether the swapped labelling won (for per_block: the beta pair's orientation).
    bool swapped = false;
};

/// Sum of the three block errors, minimized over the label swap. The winner is
/// chosen by the l2 total (identity on ties); l1 is reported under the same permutation.
EstimationError estimation_error(const ModelParams& estimate, const ModelParams& truth,
                                 Permutation permutation = Permutation::joint);

}  // namespace lhb
