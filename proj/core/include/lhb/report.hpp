#pragma once

#include "lhb/experiment.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace lhb {

/// Shortest decimal that round-trips to the same double.
std::string format_double(double value);

/// Header: policy,rep,round,episode,strong_instant,strong_cum,regular_instant,regular_cum,err_l2,err_l1,excess_misclass
void write_results_csv(const ResultTable& table, std::ostream& out);
/// Reads the rows written by write_results_csv (cells are left empty).
ResultTable read_results_csv(std::istream& in);

/// Across-replication mean and standard error of the running average regrets.
struct SummaryRow {
    std::string policy;
    std::uint64_t round = 0;
    double strong_mean = 0.0;
    double strong_se = 0.0;
    double regular_mean = 0.0;
    double regular_se = 0.0;
};

/// One row per (policy, round), policies in order of first appearance.
std::vector<SummaryRow> summarize(const ResultTable& table);
void write_summary_csv(const std::vector<SummaryRow>& rows, std::ostream& out);

/// Per-episode aggregates across replications.
struct EpisodeRow {
    std::string policy;
    int episode = 0;
    std::uint64_t first_round = 0;
    std::uint64_t last_round = 0;
    /// Mean instant regret within the episode, averaged over replications.
    double strong_mean = 0.0;
    double regular_mean = 0.0;
    /// Running average regret at the episode's last round, averaged over replications.
    double strong_avg_end = 0.0;
    double regular_avg_end = 0.0;
    /// Estimation error and excess misclassification of the episode's model (NaN when absent).
    double err_l2_mean = 0.0;
    double err_l2_se = 0.0;
    double excess_mean = 0.0;
};

std::vector<EpisodeRow> summarize_episodes(const ResultTable& table);
void write_episodes_csv(const std::vector<EpisodeRow>& rows, std::ostream& out);

void write_checksums_csv(const ResultTable& table, std::ostream& out);

/// Two panels (strong, regular) of average regret against round, one series per policy.
std::string regret_svg(const std::vector<SummaryRow>& summary);
/// Mean l2 estimation error at episode boundaries, one series per policy that has one.
std::string error_svg(const std::vector<EpisodeRow>& episodes);

/// Writes results.csv, summary.csv, episodes.csv, checksums.csv, regret.svg and
/// error.svg into `dir` (created if needed). Throws std::runtime_error on I/O failure.
void emit_outputs(const ResultTable& table, const std::string& dir);

}  // namespace lhb
