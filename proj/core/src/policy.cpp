#include "lhb/policy.hpp"

#include "lhb/errors.hpp"

#include <algorithm>
#include <bit>
#include <limits>
#include <stdexcept>

namespace lhb {

namespace {

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

std::uint64_t fnv_word(std::uint64_t h, std::uint64_t word) {
    for (int b = 0; b < 8; ++b) {
        h ^= (word >> (8 * b)) & 0xffU;
        h *= kFnvPrime;
    }
    return h;
}

std::uint64_t fnv_vector(std::uint64_t h, const Vector& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        h = fnv_word(h, std::bit_cast<std::uint64_t>(v[i]));
    }
    return h;
}

bool learns(PolicyKind kind) {
    return kind == PolicyKind::hetero || kind == PolicyKind::single_lasso || kind == PolicyKind::separate_oracle;
}

// Plain lasso of y on the chosen arm's features for the given rows, CV or fixed penalty.
Vector lasso_refit(const std::vector<const Interaction*>& rows, Eigen::Index dx, const LambdaPolicy& policy,
                   double sigma, const SolverControl& control, std::uint64_t seed,
                   std::optional<double> fallback_lambda, double* chosen = nullptr) {
    const auto n = static_cast<Eigen::Index>(rows.size());
    Matrix x(n, dx);
    Vector y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        x.row(i) = rows[static_cast<std::size_t>(i)]->chosen_features().transpose();
        y[i] = rows[static_cast<std::size_t>(i)]->reward;
    }
    const WeightedLassoProblem p(std::move(x), std::move(y), Vector::Ones(n), sigma, 0.0);
    double lambda = 0.0;
    if (policy.mode == LambdaMode::cross_validation && n < policy.folds && fallback_lambda) {
        lambda = *fallback_lambda;
    } else {
        lambda = choose_lambda(p, policy, control, seed);
    }
    if (chosen) *chosen = lambda;
    return solve_weighted_lasso(p.with_lambda(lambda), Vector::Zero(dx), control);
}

}  // namespace

std::string_view to_string(PolicyKind kind) noexcept {
    switch (kind) {
        case PolicyKind::hetero: return "hetero";
        case PolicyKind::single_lasso: return "single_lasso";
        case PolicyKind::separate_oracle: return "separate_oracle";
        case PolicyKind::regular_oracle: return "regular_oracle";
        case PolicyKind::strong_oracle: return "strong_oracle";
        case PolicyKind::uniform: return "uniform";
    }
    return "unknown";
}

PolicyKind parse_policy_kind(std::string_view name) {
    for (PolicyKind k : {PolicyKind::hetero, PolicyKind::single_lasso, PolicyKind::separate_oracle,
                         PolicyKind::regular_oracle, PolicyKind::strong_oracle, PolicyKind::uniform}) {
        if (to_string(k) == name) return k;
    }
    throw ArgumentError("unknown policy kind '" + std::string(name) + "'");
}

std::uint64_t episode_length(int tau, std::uint64_t n0) {
    if (tau < 0) {
        throw ArgumentError("episode index must be nonnegative");
    }
    if (n0 < 1) {
        throw ArgumentError("n0 must be positive");
    }
    if (tau >= 64 || n0 > (std::numeric_limits<std::uint64_t>::max() >> tau)) {
        throw std::overflow_error("episode length 2^" + std::to_string(tau) + " * " + std::to_string(n0) +
                                  " overflows");
    }
    return n0 << tau;
}

int max_episode(std::uint64_t T, std::uint64_t n0) {
    if (n0 < 1) {
        throw ArgumentError("n0 must be positive");
    }
    if (T < n0) {
        throw ArgumentError("horizon T must be at least n0");
    }
    // Largest m with 2^m <= T/n0 + 1, i.e. 2^m * n0 <= T + n0 (exact in integers).
    int m = 0;
    while (m < 63 && n0 <= (std::numeric_limits<std::uint64_t>::max() >> (m + 1)) &&
           (n0 << (m + 1)) - n0 <= T) {
        ++m;
    }
    return m - 1;
}

std::uint64_t EpisodeSchedule::start(int tau) const {
    // n0 (2^tau - 1) = sum of the lengths of episodes 0..tau-1.
    return episode_length(tau, n0) - n0;
}

int EpisodeSchedule::episode_of(std::uint64_t round) const {
    int tau = 0;
    while (tau < 62 && n0 <= (std::numeric_limits<std::uint64_t>::max() >> (tau + 2)) && start(tau + 1) <= round) {
        ++tau;
    }
    return tau;
}

// ---------------------------------------------------------------------------

PolicyState::PolicyState(PolicyConfig config, const ModelParams& truth) : config_(std::move(config)) {
    schedule_.n0 = config_.n0;
    if (config_.n0 < 1) {
        throw ArgumentError("n0 must be positive");
    }
    if (!config_.init.estimate_sigma) {
        config_.init.sigma = truth.sigma();
    }
    switch (config_.kind) {
        case PolicyKind::regular_oracle:
        case PolicyKind::strong_oracle:
            params_ = truth;
            break;
        case PolicyKind::separate_oracle:
            // Knows the gating truth; only the per-group rewards are learned.
            params_.reset();
            break;
        default:
            break;
    }
    truth_theta_ = truth.theta();
}

bool PolicyState::exploring() const noexcept {
    return config_.kind == PolicyKind::uniform || (learns(config_.kind) && schedule_.current_tau == 0);
}

void PolicyState::advance_episode(std::uint64_t seed) {
    const int next = schedule_.current_tau + 1;
    if (learns(config_.kind) && !buffer_.empty()) {
        const Eigen::Index dx = buffer_.front().context.reward_dim();
        const double sigma = config_.init.sigma;
        EmConfig em = config_.em;
        if (!config_.t_max_schedule.empty()) {
            const auto idx = std::min<std::size_t>(static_cast<std::size_t>(next), config_.t_max_schedule.size()) - 1;
            em.t_max = config_.t_max_schedule[idx];
        }
        em.cv_seed = seed;

        switch (config_.kind) {
            case PolicyKind::hetero: {
                ModelParams start = params_ ? *params_ : [&] {
                    InitResult init = initialize(buffer_, config_.init, derive_seed(seed, 101));
                    if (init.diagnostics.degenerate) {
                        warnings_.push_back("episode " + std::to_string(next) +
                                            ": degenerate clustering, pooled initialization used");
                    }
                    return init.params;
                }();
                EmResult fit = em_fit(buffer_, start, em);
                for (auto& w : fit.diagnostics.warnings) {
                    warnings_.push_back("episode " + std::to_string(next) + ": " + w);
                }
                params_ = std::move(fit.params);
                break;
            }
            case PolicyKind::single_lasso: {
                std::vector<const Interaction*> rows;
                for (const auto& it : buffer_) rows.push_back(&it);
                Vector beta = lasso_refit(rows, dx, config_.baseline_lambda, sigma, em.control, seed, std::nullopt);
                params_ = ModelParams(Vector::Zero(truth_theta_.size()), beta, beta, sigma);
                break;
            }
            case PolicyKind::separate_oracle: {
                std::vector<const Interaction*> all;
                std::vector<const Interaction*> by_group[2];
                for (const auto& it : buffer_) {
                    if (!it.group) {
                        throw StateError("separate_oracle needs the realized group of every logged round");
                    }
                    all.push_back(&it);
                    by_group[*it.group == Group::one ? 0 : 1].push_back(&it);
                }
                double pooled_lambda = 0.0;
                std::optional<double> fallback;
                if (by_group[0].size() < static_cast<std::size_t>(config_.baseline_lambda.folds) ||
                    by_group[1].size() < static_cast<std::size_t>(config_.baseline_lambda.folds)) {
                    lasso_refit(all, dx, config_.baseline_lambda, sigma, em.control, seed, std::nullopt,
                                &pooled_lambda);
                    fallback = pooled_lambda;
                }
                Vector betas[2];
                for (int g = 0; g < 2; ++g) {
                    if (by_group[g].empty()) {
                        betas[g] = params_ ? (g == 0 ? params_->beta1() : params_->beta2()) : Vector::Zero(dx);
                        warnings_.push_back("episode " + std::to_string(next) + ": group " + std::to_string(g + 1) +
                                            " absent, previous fit kept");
                        continue;
                    }
                    betas[g] = lasso_refit(by_group[g], dx, config_.baseline_lambda, sigma, em.control,
                                           derive_seed(seed, static_cast<std::uint64_t>(g + 1)), fallback);
                }
                params_ = ModelParams(truth_theta_, std::move(betas[0]), std::move(betas[1]), sigma);
                break;
            }
            default:
                break;
        }
    }
    buffer_.clear();
    schedule_.current_tau = next;
}

Decision select_action(const PolicyState& state, const Context& context, CounterRng& rng,
                       std::optional<Group> realized) {
    const std::size_t K = context.num_arms();
    if (state.exploring()) {
        const auto arm = std::min(static_cast<std::size_t>(rng.uniform() * static_cast<double>(K)), K - 1);
        return {arm, std::nullopt};
    }
    const auto& params = state.params();
    if (!params) {
        throw StateError(std::string(to_string(state.kind())) + " has no fitted model in episode " +
                         std::to_string(state.schedule().current_tau));
    }
    if (params->reward_dim() != context.reward_dim() || params->gating_dim() != context.z().size()) {
        throw ArgumentError("context dimensions do not match the policy's model");
    }
    switch (state.kind()) {
        case PolicyKind::hetero:
        case PolicyKind::regular_oracle: {
            const Group g = classify(context.z(), params->theta());
            return {greedy_arm(context, params->beta(g)), g};
        }
        case PolicyKind::single_lasso:
            return {greedy_arm(context, params->beta1()), std::nullopt};
        case PolicyKind::separate_oracle:
        case PolicyKind::strong_oracle:
            if (!realized) {
                throw StateError(std::string(to_string(state.kind())) + " needs the realized group");
            }
            return {greedy_arm(context, params->beta(*realized)), *realized};
        case PolicyKind::uniform:
            break;
    }
    throw StateError("unreachable policy kind");
}

std::uint64_t round_checksum(const Round& round, std::uint64_t previous) {
    std::uint64_t h = previous == 0 ? kFnvOffset : previous;
    h = fnv_vector(h, round.context.z());
    for (const auto& arm : round.context.arms()) {
        h = fnv_vector(h, arm);
    }
    h = fnv_word(h, static_cast<std::uint64_t>(round.group));
    h = fnv_word(h, std::bit_cast<std::uint64_t>(round.noise));
    return h;
}

PolicyRun run_policy(const Environment& env, PolicyState& state, std::uint64_t T, std::uint64_t seed) {
    if (T < state.config().n0) {
        throw ArgumentError("horizon T must be at least n0");
    }
    if (state.schedule().current_tau != 0 || !state.episode_buffer().empty()) {
        throw StateError("run_policy needs a fresh policy state");
    }
    const ModelParams& truth = env.truth();
    PolicyRun run;
    run.snapshots.push_back({0, 0, state.params()});

    const auto next_boundary = [&] {
        try {
            return state.schedule().start(state.schedule().current_tau + 1);
        } catch (const std::overflow_error&) {
            return std::numeric_limits<std::uint64_t>::max();
        }
    };
    std::uint64_t boundary = next_boundary();

    for (std::uint64_t i = 0; i < T; ++i) {
        if (i == boundary) {
            const int tau = state.schedule().current_tau + 1;
            state.advance_episode(derive_seed(seed, static_cast<std::uint64_t>(tau)));
            run.snapshots.push_back({tau, i, state.params()});
            boundary = next_boundary();
        }
        Round round = env.sample_round(i);
        run.stream_checksum = round_checksum(round, run.stream_checksum);

        CounterRng rng(seed, Stream::explore, i);
        const Decision decision = select_action(state, round.context, rng, round.group);

        RoundRecord rec;
        rec.round = i + 1;
        rec.episode = state.schedule().current_tau;
        rec.chosen = decision.arm;
        rec.group = round.group;
        rec.classified = decision.classified;
        rec.strong = instant_strong_regret(round.context, round.group, decision.arm, truth);
        rec.regular = instant_regular_regret(round.context, round.group, decision.arm, truth);
        run.trace.push(rec);

        const double reward = round.rewards[static_cast<Eigen::Index>(decision.arm)];
        state.record(Interaction(std::move(round.context), decision.arm, reward, round.group));
    }
    run.warnings = state.warnings();
    return run;
}

}  // namespace lhb
