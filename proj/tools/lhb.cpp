// lhb: batch runner for latent-heterogeneity bandit simulations.
//
//   lhb run <config.yaml> [--out DIR] [--jobs N] [--seed S]
//   lhb check <config.yaml> [--out DIR] [--probe N] [--seed S]
//
// Exit codes: 0 success, 1 configuration error, 2 runtime error.

#include "lhb/errors.hpp"
#include "lhb/experiment.hpp"
#include "lhb/report.hpp"
#include "lhb/theory.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace {

struct CommonOptions {
    std::string config_path;
    std::string out_dir;
    std::optional<std::uint64_t> seed;
};

lhb::ExperimentConfig load(const CommonOptions& opts) {
    lhb::ExperimentConfig config = lhb::parse_config(opts.config_path);
    if (!opts.out_dir.empty()) config.output_dir = opts.out_dir;
    if (opts.seed) config.base_seed = *opts.seed;
    return config;
}

int run_command(const CommonOptions& opts, std::optional<int> jobs) {
    lhb::ExperimentConfig config = load(opts);
    if (jobs) {
        if (*jobs < 1) throw lhb::ConfigError("--jobs must be positive", "jobs", 0);
        config.jobs = *jobs;
    }
    std::cerr << "lhb: " << config.policies.size() << " policies x " << config.replications << " replications, T = "
              << config.horizon << ", jobs = " << config.jobs << "\n";
    const auto t0 = std::chrono::steady_clock::now();
    const lhb::ResultTable table =
        lhb::run_experiment(config, [](const std::string& msg) { std::cerr << "lhb: " << msg << "\n"; });
    lhb::emit_outputs(table, config.output_dir);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cerr << "lhb: wrote " << table.rows.size() << " rows to " << config.output_dir << " in " << secs << " s\n";
    for (const auto& cell : table.cells) {
        for (const auto& w : cell.warnings) {
            std::cerr << "lhb: warning [" << cell.policy << " rep " << cell.rep << "] " << w << "\n";
        }
    }
    return 0;
}

int check_command(const CommonOptions& opts, std::size_t probe) {
    const lhb::ExperimentConfig config = load(opts);
    const auto semi = lhb::prepare_semi_synthetic(config.environment, config.base_seed);
    const auto env = lhb::make_environment(config.environment, config.base_seed, semi);
    const lhb::AssumptionReport r = lhb::check_assumptions(*env, probe, {}, config.base_seed);

    std::filesystem::create_directories(config.output_dir);
    const auto path = std::filesystem::path(config.output_dir) / "assumptions.csv";
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
    out << "quantity,value,threshold,satisfied\n";
    out << "gating_bound," << lhb::format_double(r.gating_bound) << ','
        << lhb::format_double(r.thresholds.gating_bound_max) << ',' << r.gating_ok << '\n';
    out << "snr," << lhb::format_double(r.snr) << ',' << lhb::format_double(r.thresholds.snr_min) << ','
        << r.snr_ok << '\n';
    out << "eig_min," << lhb::format_double(r.eig_min) << ',' << lhb::format_double(r.thresholds.eig_floor) << ','
        << r.eigen_ok << '\n';
    out << "eig_max," << lhb::format_double(r.eig_max) << ',' << lhb::format_double(r.thresholds.eig_ceiling) << ','
        << r.eigen_ok << '\n';
    for (const auto& s : r.spectra) {
        out << "eig_min_" << s.block << ',' << lhb::format_double(s.eig_min) << ",,\n";
        out << "eig_max_" << s.block << ',' << lhb::format_double(s.eig_max) << ",,\n";
    }
    std::cerr << "lhb: gating bound " << r.gating_bound << ", snr " << r.snr << ", eigenvalues [" << r.eig_min
              << ", " << r.eig_max << "] -> " << path.string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Simulations for linear bandits with latent heterogeneity"};
    app.require_subcommand(1);

    CommonOptions run_opts;
    std::optional<int> jobs;
    auto* run = app.add_subcommand("run", "Run all policies and replications of an experiment config");
    run->add_option("config", run_opts.config_path, "Experiment config (YAML)")->required();
    run->add_option("--out", run_opts.out_dir, "Output directory (overrides output_dir)");
    run->add_option("--jobs", jobs, "Worker threads");
    run->add_option("--seed", run_opts.seed, "Base seed (overrides base_seed)");

    CommonOptions check_opts;
    std::size_t probe = 5000;
    auto* check = app.add_subcommand("check", "Report assumption diagnostics for a config's environment");
    check->add_option("config", check_opts.config_path, "Experiment config (YAML)")->required();
    check->add_option("--out", check_opts.out_dir, "Output directory (overrides output_dir)");
    check->add_option("--probe", probe, "Rounds sampled for the diagnostics")->check(CLI::Range(100, 100000000));
    check->add_option("--seed", check_opts.seed, "Base seed (overrides base_seed)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (*run) return run_command(run_opts, jobs);
        return check_command(check_opts, probe);
    } catch (const lhb::ConfigError& e) {
        std::cerr << "lhb: config error";
        if (e.line() > 0) std::cerr << " (line " << e.line() << ")";
        std::cerr << ": " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "lhb: error: " << e.what() << "\n";
        return 2;
    }
}
