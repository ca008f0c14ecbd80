#pragma once

#include "lhb/em.hpp"
#include "lhb/environment.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace lhb {

/// Pass/fail thresholds for the empirical assumption proxies.
struct AssumptionThresholds {
    /// Largest acceptable max |z'theta*| (a gating probability bounded away from 0 and 1).
    double gating_bound_max = 10.0;
    /// Smallest acceptable ||beta1* - beta2*||_2 / sigma.
    double snr_min = 1.0;
    /// Admissible range for the sample covariance eigenvalues.
    double eig_floor = 1e-3;
    double eig_ceiling = 1e3;
};

struct SpectrumProxy {
    std::string block;  // "z" or "x<k>"
    double eig_min = 0.0;
    double eig_max = 0.0;
};

struct AssumptionReport {
    double gating_bound = 0.0;
    double snr = 0.0;
    /// Extremes over all blocks below.
    double eig_min = 0.0;
    double eig_max = 0.0;
    std::vector<SpectrumProxy> spectra;
    bool gating_ok = false;
    bool snr_ok = false;
    bool eigen_ok = false;
    AssumptionThresholds thresholds;
};

/// Samples n_probe rounds of `env` (round indices derived from `seed`) and reports
/// max |z'theta*|, ||beta1* - beta2*|| / sigma and the extreme eigenvalues of the
/// sample covariances of z and of each arm's features.
AssumptionReport check_assumptions(const Environment& env, std::size_t n_probe,
                                   const AssumptionThresholds& thresholds, std::uint64_t seed);

struct RatePoint {
    std::size_t n = 0;
    double median_l2 = 0.0;
    std::vector<double> errors;
};

/// For each n: draws n rounds with uniformly logged arms from a fresh synthetic
/// environment per replication, starts EM from the truth plus N(0, perturb_sd^2)
/// noise on every coordinate, and records the label-swap-min l2 error.
/// Grid points of one replication share the ground truth but not the samples.
std::vector<RatePoint> rate_probe(const SyntheticConfig& env, const std::vector<std::size_t>& n_grid, int reps,
                                  std::uint64_t seed, const EmConfig& em = {}, double perturb_sd = 0.05);

}  // namespace lhb
