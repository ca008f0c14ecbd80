#pragma once

#include "lhb/em.hpp"
#include "lhb/environment.hpp"
#include "lhb/initializer.hpp"
#include "lhb/metrics.hpp"
#include "lhb/model.hpp"
#include "lhb/rng.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace lhb {

enum class PolicyKind { hetero, single_lasso, separate_oracle, regular_oracle, strong_oracle, uniform };

std::string_view to_string(PolicyKind kind) noexcept;
/// Inverse of to_string; throws ArgumentError on an unknown name.
PolicyKind parse_policy_kind(std::string_view name);

/// 2^tau * n0. Throws std::overflow_error if it does not fit in 64 bits.
std::uint64_t episode_length(int tau, std::uint64_t n0);

/// floor(log2(T/n0 + 1)) - 1, computed in integers: the last episode that fits
/// completely inside the horizon T.
int max_episode(std::uint64_t T, std::uint64_t n0);

/// Doubling episodes: episode tau covers rounds [n0 (2^tau - 1), n0 (2^(tau+1) - 1)).
struct EpisodeSchedule {
    std::uint64_t n0 = 1;
    int current_tau = 0;

    std::uint64_t length(int tau) const { return episode_length(tau, n0); }
    std::uint64_t start(int tau) const;
    /// Episode containing 0-based round i.
    int episode_of(std::uint64_t round) const;
};

struct PolicyConfig {
    PolicyKind kind = PolicyKind::hetero;
    std::uint64_t n0 = 200;
    /// EM settings; em.t_max is overridden per episode when t_max_schedule is non-empty.
    EmConfig em;
    /// t_max for episode tau >= 1 is t_max_schedule[min(tau, size) - 1].
    std::vector<int> t_max_schedule;
    InitConfig init;
    /// Penalty selection for the baselines' lasso refits.
    LambdaPolicy baseline_lambda;
};

/// Mutable per-run state. Oracle kinds hold the truth from construction and never
/// refit; learning kinds hold their latest fit once the first episode ends.
class PolicyState {
public:
    PolicyState(PolicyConfig config, const ModelParams& truth);

    PolicyKind kind() const noexcept { return config_.kind; }
    const PolicyConfig& config() const noexcept { return config_; }
    const std::optional<ModelParams>& params() const noexcept { return params_; }
    const EpisodeSchedule& schedule() const noexcept { return schedule_; }
    const std::vector<Interaction>& episode_buffer() const noexcept { return buffer_; }
    /// Messages from the fits so far (degenerate initialization, skipped M-steps).
    const std::vector<std::string>& warnings() const noexcept { return warnings_; }

    /// Whether decisions in the current episode are uniform exploration.
    bool exploring() const noexcept;

    void record(Interaction interaction) { buffer_.push_back(std::move(interaction)); }

    /// Closes the current episode: refits from its buffer (learning kinds only),
    /// clears the buffer and advances the episode counter. `seed` drives the fit.
    void advance_episode(std::uint64_t seed);

private:
    PolicyConfig config_;
    std::optional<ModelParams> params_;
    EpisodeSchedule schedule_;
    std::vector<Interaction> buffer_;
    std::vector<std::string> warnings_;
    Vector truth_theta_;
};

struct Decision {
    std::size_t arm = 0;
    /// Group the policy acted for, when it classified one.
    std::optional<Group> classified;
};

/// Chooses an arm for `context`. `realized` is the simulator's group, consulted
/// only by strong_oracle and separate_oracle. Uniform draws use `rng`.
Decision select_action(const PolicyState& state, const Context& context, CounterRng& rng,
                       std::optional<Group> realized = std::nullopt);

struct EpisodeSnapshot {
    int tau = 0;
    /// 0-based round at which this snapshot starts acting.
    std::uint64_t start = 0;
    std::optional<ModelParams> params;
};

struct PolicyRun {
    RegretTrace trace;
    /// One entry per episode that started within the horizon.
    std::vector<EpisodeSnapshot> snapshots;
    /// FNV-1a hash of every environment draw the run consumed.
    std::uint64_t stream_checksum = 0;
    std::vector<std::string> warnings;
};

/// Plays T rounds of `env`. The environment draw for round i is env.sample_round(i);
/// exploration draws come from (seed, explore, i); the fit at the start of episode
/// tau is seeded with derive_seed(seed, tau).
PolicyRun run_policy(const Environment& env, PolicyState& state, std::uint64_t T, std::uint64_t seed);

/// Hash of the draws of one round (z, arm features, group, noise). Chained with the
/// previous value so that a run's checksum covers its whole stream.
std::uint64_t round_checksum(const Round& round, std::uint64_t previous);

}  // namespace lhb
