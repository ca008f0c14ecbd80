#pragma once

#include "lhb/environment.hpp"
#include "lhb/policy.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace lhb {

enum class EnvironmentKind { synthetic, lower_bound, semi_synthetic };

struct SemiSyntheticSource {
    std::string path;
    char delimiter = ',';
    TableRoles roles;
};

struct EnvironmentSpec {
    EnvironmentKind kind = EnvironmentKind::synthetic;
    SyntheticConfig synthetic;
    LowerBoundConfig lower_bound;
    SemiSyntheticSource semi;
};

struct PolicySpec {
    std::string name;
    PolicyConfig config;
};

struct ExperimentConfig {
    EnvironmentSpec environment;
    std::vector<PolicySpec> policies;
    std::uint64_t horizon = 0;
    std::uint64_t n0 = 0;
    int replications = 1;
    std::uint64_t base_seed = 0;
    std::string output_dir = "out";
    int jobs = 1;
    /// Monte Carlo draws for the excess misclassification at episode boundaries.
    std::size_t misclass_samples = 2000;

    /// Throws ConfigError (line 0) on a violated invariant.
    void validate() const;
};

/// Parses the YAML experiment schema (see configs/README.md). Relative table
/// paths resolve against `base_dir`. Errors name the offending key and line.
ExperimentConfig parse_config_text(const std::string& text, const std::string& base_dir = ".");
ExperimentConfig parse_config(const std::string& path);

/// Fitted once per experiment for semi-synthetic runs; null otherwise.
std::shared_ptr<const SemiSyntheticTruth> prepare_semi_synthetic(const EnvironmentSpec& spec, std::uint64_t seed);

std::unique_ptr<Environment> make_environment(const EnvironmentSpec& spec, std::uint64_t seed,
                                              const std::shared_ptr<const SemiSyntheticTruth>& semi = nullptr);

/// One (policy, replication, round) record. Error columns are set only on the
/// first round of an episode whose policy holds a model.
struct ResultRow {
    std::string policy;
    int rep = 0;
    std::uint64_t round = 0;
    int episode = 0;
    double strong_instant = 0.0;
    double strong_cum = 0.0;
    double regular_instant = 0.0;
    double regular_cum = 0.0;
    std::optional<double> err_l2;
    std::optional<double> err_l1;
    std::optional<double> excess_misclass;
};

struct CellInfo {
    std::string policy;
    int rep = 0;
    std::uint64_t seed = 0;
    std::uint64_t checksum = 0;
    std::vector<std::string> warnings;
};

struct ResultTable {
    /// Ordered by policy (config order), then replication, then round.
    std::vector<ResultRow> rows;
    std::vector<CellInfo> cells;
};

using ProgressFn = std::function<void(const std::string&)>;

/// Runs every (policy, replication) cell on a pool of config.jobs threads.
/// Replication r uses seed base_seed XOR r for both the environment and the
/// policy, so all policies in a replication see identical draws. Any cell
/// failure aborts the run with a runtime_error naming policy, replication and seed.
ResultTable run_experiment(const ExperimentConfig& config, const ProgressFn& progress = {});

}  // namespace lhb
