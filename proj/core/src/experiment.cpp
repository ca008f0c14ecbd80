#include "lhb/experiment.hpp"

#include "lhb/errors.hpp"
#include "lhb/metrics.hpp"

#include <yaml-cpp/yaml.h>

#include <atomic>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

namespace lhb {

namespace {

// Keyed access into a YAML tree with dotted paths and line numbers in errors.
class Node {
public:
    Node(YAML::Node node, std::string path) : node_(std::move(node)), path_(std::move(path)) {}

    int line() const { return node_.Mark().line >= 0 ? node_.Mark().line + 1 : 0; }
    const std::string& path() const { return path_; }
    const YAML::Node& raw() const { return node_; }

    [[noreturn]] void fail(const std::string& what) const { throw ConfigError(path_ + ": " + what, path_, line()); }

    void expect_map() const {
        if (!node_.IsMap()) fail("expected a mapping");
    }

    void allow_keys(std::initializer_list<const char*> keys) const {
        expect_map();
        const std::set<std::string> allowed(keys.begin(), keys.end());
        for (const auto& kv : node_) {
            const auto key = kv.first.as<std::string>();
            if (!allowed.count(key)) {
                const int line = kv.first.Mark().line >= 0 ? kv.first.Mark().line + 1 : 0;
                const std::string full = path_.empty() ? key : path_ + "." + key;
                throw ConfigError("unknown key '" + full + "'", full, line);
            }
        }
    }

    bool has(const std::string& key) const { return node_.IsMap() && node_[key]; }

    Node child(const std::string& key) const {
        const std::string full = path_.empty() ? key : path_ + "." + key;
        if (!has(key)) {
            throw ConfigError("missing required key '" + full + "'", full, line());
        }
        return {node_[key], full};
    }

    template <class T>
    T as() const {
        if (!node_.IsScalar()) fail("expected a scalar value");
        try {
            return node_.as<T>();
        } catch (const YAML::BadConversion&) {
            fail("cannot read '" + node_.Scalar() + "' as " + type_name<T>());
        }
    }

    template <class T>
    T get(const std::string& key, T fallback) const {
        return has(key) ? child(key).as<T>() : fallback;
    }

    template <class T>
    std::vector<T> list() const {
        if (!node_.IsSequence()) fail("expected a list");
        std::vector<T> out;
        for (std::size_t i = 0; i < node_.size(); ++i) {
            out.push_back(Node(node_[i], path_ + "[" + std::to_string(i) + "]").as<T>());
        }
        return out;
    }

private:
    template <class T>
    static std::string type_name() {
        if constexpr (std::is_same_v<T, bool>) return "a boolean";
        else if constexpr (std::is_integral_v<T>) return "an integer";
        else if constexpr (std::is_floating_point_v<T>) return "a number";
        else return "a string";
    }

    YAML::Node node_;
    std::string path_;
};

LambdaPolicy parse_lambda(const Node& n, LambdaPolicy base, std::optional<LambdaScheduleConstants>& schedule) {
    n.allow_keys({"mode", "value", "folds", "grid_size", "grid_ratio", "schedule"});
    if (n.has("mode")) {
        const Node m = n.child("mode");
        const auto mode = m.as<std::string>();
        if (mode == "cross_validation" || mode == "cv") base.mode = LambdaMode::cross_validation;
        else if (mode == "theoretical") base.mode = LambdaMode::theoretical;
        else if (mode == "fixed") base.mode = LambdaMode::fixed;
        else m.fail("expected one of cross_validation, theoretical, fixed");
    }
    if (base.mode == LambdaMode::fixed) {
        const Node v = n.child("value");
        base.fixed_value = v.as<double>();
        if (!(base.fixed_value >= 0.0)) v.fail("penalty must be nonnegative");
    }
    base.folds = n.get("folds", base.folds);
    if (base.folds < 2) n.child("folds").fail("at least 2 folds are needed");
    base.grid_size = n.get("grid_size", base.grid_size);
    if (base.grid_size < 1) n.child("grid_size").fail("grid size must be positive");
    base.grid_ratio = n.get("grid_ratio", base.grid_ratio);
    if (!(base.grid_ratio > 0.0 && base.grid_ratio <= 1.0)) n.child("grid_ratio").fail("ratio must lie in (0, 1]");
    if (n.has("schedule")) {
        const Node s = n.child("schedule");
        s.allow_keys({"c_bar", "kappa", "delta0", "s", "d"});
        LambdaScheduleConstants c;
        c.c_bar = s.get("c_bar", c.c_bar);
        c.kappa = s.get("kappa", c.kappa);
        c.delta0 = s.get("delta0", c.delta0);
        c.s = s.get("s", c.s);
        c.d = s.get("d", c.d);
        if (!(c.c_bar > 0 && c.kappa > 0 && c.delta0 >= 0 && c.s > 0 && c.d >= 1 && c.c_bar * c.c_bar * c.kappa < 0.5)) {
            s.fail("schedule needs positive constants with c_bar^2 * kappa < 1/2 and d >= 1");
        }
        schedule = c;
    }
    if (base.mode == LambdaMode::theoretical && !schedule) {
        n.fail("theoretical mode needs a schedule block");
    }
    return base;
}

std::vector<int> parse_t_max(const Node& n) {
    std::vector<int> out;
    if (n.raw().IsSequence()) {
        out = n.list<int>();
        if (out.empty()) n.fail("t_max list is empty");
    } else {
        out.push_back(n.as<int>());
    }
    for (int t : out) {
        if (t < 1) n.fail("t_max values must be positive");
    }
    return out;
}

void parse_synthetic(const Node& n, SyntheticConfig& c) {
    n.allow_keys({"type", "d", "d_z", "s", "K", "L_bar", "sigma", "rho", "mu_gap", "mu_sd", "theta_nnz"});
    c.d = n.get("d", c.d);
    c.d_z = n.get("d_z", c.d_z);
    c.s = n.get("s", c.s);
    c.K = n.get("K", c.K);
    c.L_bar = n.get("L_bar", c.L_bar);
    c.sigma = n.get("sigma", c.sigma);
    c.rho = n.get("rho", c.rho);
    c.mu_gap = n.get("mu_gap", c.mu_gap);
    c.mu_sd = n.get("mu_sd", c.mu_sd);
    c.theta_nnz = n.get("theta_nnz", c.theta_nnz);
    try {
        c.validate();
    } catch (const ArgumentError& e) {
        n.fail(e.what());
    }
}

void parse_lower_bound(const Node& n, LowerBoundConfig& c) {
    n.allow_keys({"type", "L_bar", "x_bar", "d", "theta", "d_z", "sigma"});
    c.L_bar = n.get("L_bar", c.L_bar);
    c.x_bar = n.get("x_bar", c.x_bar);
    c.d = n.get("d", c.d);
    c.sigma = n.get("sigma", c.sigma);
    if (n.has("theta") && n.has("d_z")) n.fail("give either theta or d_z, not both");
    if (n.has("theta")) {
        const auto theta = n.child("theta").list<double>();
        if (theta.empty()) n.child("theta").fail("theta must be non-empty");
        c.theta = Eigen::Map<const Vector>(theta.data(), static_cast<Eigen::Index>(theta.size()));
    } else {
        const int dz = n.get("d_z", 1);
        if (dz < 1) n.child("d_z").fail("d_z must be positive");
        c.theta = Vector::Zero(dz);
    }
    if (!(c.L_bar > 0) || !(c.x_bar > 0) || c.d < 1 || !(c.sigma >= 0)) {
        n.fail("lower-bound construction needs L_bar > 0, x_bar > 0, d >= 1, sigma >= 0");
    }
}

void parse_semi(const Node& n, SemiSyntheticSource& src, const std::string& base_dir) {
    n.allow_keys({"type", "path", "delimiter", "reward", "group", "group_one", "z", "arms", "action",
                  "min_rows_per_group"});
    std::filesystem::path p = n.child("path").as<std::string>();
    if (p.is_relative()) p = std::filesystem::path(base_dir) / p;
    src.path = p.string();
    const auto delim = n.get<std::string>("delimiter", ",");
    if (delim.size() != 1) n.child("delimiter").fail("delimiter must be a single character");
    src.delimiter = delim == "\\t" ? '\t' : delim[0];
    src.roles.reward_column = n.child("reward").as<std::string>();
    src.roles.group_column = n.child("group").as<std::string>();
    src.roles.group_one = n.get<std::string>("group_one", "");
    src.roles.z_columns = n.child("z").list<std::string>();
    const Node arms = n.child("arms");
    if (!arms.raw().IsSequence() || arms.raw().size() == 0) arms.fail("expected a non-empty list of column lists");
    for (std::size_t k = 0; k < arms.raw().size(); ++k) {
        src.roles.arm_columns.push_back(Node(arms.raw()[k], arms.path() + "[" + std::to_string(k) + "]").list<std::string>());
    }
    src.roles.action_column = n.get<std::string>("action", "");
    src.roles.min_rows_per_group = n.get<std::size_t>("min_rows_per_group", src.roles.min_rows_per_group);
    if (src.roles.arm_columns.size() > 1 && src.roles.action_column.empty()) {
        n.fail("an action column is required with more than one arm");
    }
}

InitConfig parse_init(const Node& n, InitConfig init) {
    n.allow_keys({"cluster_model", "restarts", "max_iters", "tol", "estimate_sigma", "max_support"});
    if (n.has("cluster_model")) {
        const Node m = n.child("cluster_model");
        const auto v = m.as<std::string>();
        if (v == "conditional") init.cluster_model = ClusterModel::conditional;
        else if (v == "joint_spherical") init.cluster_model = ClusterModel::joint_spherical;
        else m.fail("expected conditional or joint_spherical");
    }
    init.gmm_restarts = n.get("restarts", init.gmm_restarts);
    if (init.gmm_restarts < 1) n.child("restarts").fail("at least one restart is needed");
    init.gmm_max_iters = n.get("max_iters", init.gmm_max_iters);
    if (init.gmm_max_iters < 1) n.child("max_iters").fail("must be positive");
    init.gmm_tol = n.get("tol", init.gmm_tol);
    if (!(init.gmm_tol > 0)) n.child("tol").fail("must be positive");
    init.estimate_sigma = n.get("estimate_sigma", init.estimate_sigma);
    init.max_support = n.get("max_support", init.max_support);
    return init;
}

PolicySpec parse_policy(const Node& n, const LambdaPolicy& lambda, const std::optional<LambdaScheduleConstants>& schedule,
                        const std::vector<int>& t_max, const SolverControl& control) {
    PolicySpec spec;
    std::string kind;
    LambdaPolicy own = lambda;
    std::optional<LambdaScheduleConstants> own_schedule = schedule;
    std::vector<int> own_t_max = t_max;
    InitConfig init;
    if (n.raw().IsScalar()) {
        kind = n.as<std::string>();
        spec.name = kind;
    } else {
        n.allow_keys({"name", "kind", "lambda", "t_max", "init"});
        kind = n.child("kind").as<std::string>();
        spec.name = n.get<std::string>("name", kind);
        if (n.has("lambda")) own = parse_lambda(n.child("lambda"), own, own_schedule);
        if (n.has("t_max")) own_t_max = parse_t_max(n.child("t_max"));
        if (n.has("init")) init = parse_init(n.child("init"), init);
    }
    try {
        spec.config.kind = parse_policy_kind(kind);
    } catch (const ArgumentError& e) {
        (n.raw().IsScalar() ? n : n.child("kind")).fail(e.what());
    }
    if (own.mode == LambdaMode::theoretical && spec.config.kind != PolicyKind::hetero) {
        n.fail("the theoretical penalty schedule only applies to the hetero policy");
    }
    spec.config.em.lambda = own;
    spec.config.em.schedule = own_schedule;
    spec.config.em.control = control;
    spec.config.t_max_schedule = own_t_max;
    spec.config.em.t_max = own_t_max.front();
    // The screening and clustering stages always cross-validate under the theoretical mode.
    init.lambda = own.mode == LambdaMode::theoretical ? LambdaPolicy{} : own;
    init.control = control;
    spec.config.init = init;
    spec.config.baseline_lambda = own;
    return spec;
}

}  // namespace

void ExperimentConfig::validate() const {
    if (n0 < 1) throw ConfigError("n0 must be positive", "n0", 0);
    if (horizon < n0) throw ConfigError("horizon must be at least n0", "horizon", 0);
    if (replications < 1) throw ConfigError("replications must be at least 1", "replications", 0);
    if (jobs < 1) throw ConfigError("jobs must be at least 1", "jobs", 0);
    if (policies.empty()) throw ConfigError("at least one policy is required", "policies", 0);
    if (misclass_samples < 1) throw ConfigError("misclass_samples must be positive", "misclass_samples", 0);
    std::set<std::string> names;
    for (const auto& p : policies) {
        if (!names.insert(p.name).second) {
            throw ConfigError("duplicate policy name '" + p.name + "'", "policies", 0);
        }
    }
}

ExperimentConfig parse_config_text(const std::string& text, const std::string& base_dir) {
    YAML::Node doc;
    try {
        doc = YAML::Load(text);
    } catch (const YAML::ParserException& e) {
        throw ConfigError(std::string("malformed YAML: ") + e.msg, "", e.mark.line + 1);
    }
    const Node root(doc, "");
    root.allow_keys({"environment", "policies", "horizon", "n0", "replications", "base_seed", "output_dir", "jobs",
                     "misclass_samples", "lambda", "t_max", "solver"});

    ExperimentConfig config;
    const Node horizon = root.child("horizon");
    const Node n0 = root.child("n0");
    const auto h = horizon.as<long long>();
    const auto n = n0.as<long long>();
    if (n < 1) n0.fail("n0 must be positive");
    if (h < n) horizon.fail("horizon must be at least n0");
    config.horizon = static_cast<std::uint64_t>(h);
    config.n0 = static_cast<std::uint64_t>(n);
    config.replications = root.get("replications", config.replications);
    if (config.replications < 1) root.child("replications").fail("at least one replication is needed");
    config.base_seed = root.get<std::uint64_t>("base_seed", config.base_seed);
    config.output_dir = root.get<std::string>("output_dir", config.output_dir);
    config.jobs = root.get("jobs", config.jobs);
    if (config.jobs < 1) root.child("jobs").fail("jobs must be positive");
    config.misclass_samples = root.get<std::size_t>("misclass_samples", config.misclass_samples);
    if (config.misclass_samples < 1) root.child("misclass_samples").fail("must be positive");

    SolverControl control;
    if (root.has("solver")) {
        const Node s = root.child("solver");
        s.allow_keys({"tol", "max_iters"});
        control.tol = s.get("tol", control.tol);
        control.max_iters = s.get("max_iters", control.max_iters);
        if (!(control.tol > 0) || control.max_iters < 1) s.fail("solver needs tol > 0 and max_iters >= 1");
    }

    std::optional<LambdaScheduleConstants> schedule;
    LambdaPolicy lambda;
    if (root.has("lambda")) lambda = parse_lambda(root.child("lambda"), lambda, schedule);
    std::vector<int> t_max{1};
    if (root.has("t_max")) t_max = parse_t_max(root.child("t_max"));

    const Node env = root.child("environment");
    env.expect_map();
    const Node type = env.child("type");
    const auto kind = type.as<std::string>();
    if (kind == "synthetic") {
        config.environment.kind = EnvironmentKind::synthetic;
        parse_synthetic(env, config.environment.synthetic);
    } else if (kind == "lower_bound") {
        config.environment.kind = EnvironmentKind::lower_bound;
        parse_lower_bound(env, config.environment.lower_bound);
    } else if (kind == "semi_synthetic") {
        config.environment.kind = EnvironmentKind::semi_synthetic;
        parse_semi(env, config.environment.semi, base_dir);
    } else {
        type.fail("expected synthetic, lower_bound or semi_synthetic");
    }

    const Node policies = root.child("policies");
    if (!policies.raw().IsSequence() || policies.raw().size() == 0) policies.fail("expected a non-empty list");
    std::set<std::string> names;
    for (std::size_t i = 0; i < policies.raw().size(); ++i) {
        const Node item(policies.raw()[i], "policies[" + std::to_string(i) + "]");
        PolicySpec spec = parse_policy(item, lambda, schedule, t_max, control);
        spec.config.n0 = config.n0;
        if (!names.insert(spec.name).second) {
            throw ConfigError("duplicate policy name '" + spec.name + "'", "policies", item.line());
        }
        config.policies.push_back(std::move(spec));
    }
    config.validate();
    return config;
}

ExperimentConfig parse_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open config file '" + path + "'", "", 0);
    }
    std::ostringstream buffer;
    buffer << in.rdbuf();
    const auto parent = std::filesystem::path(path).parent_path();
    return parse_config_text(buffer.str(), parent.empty() ? "." : parent.string());
}

std::shared_ptr<const SemiSyntheticTruth> prepare_semi_synthetic(const EnvironmentSpec& spec, std::uint64_t seed) {
    if (spec.kind != EnvironmentKind::semi_synthetic) {
        return nullptr;
    }
    const DataTable table = read_table(spec.semi.path, spec.semi.delimiter);
    return std::make_shared<const SemiSyntheticTruth>(semi_synthetic_truth(table, spec.semi.roles, {}, seed));
}

std::unique_ptr<Environment> make_environment(const EnvironmentSpec& spec, std::uint64_t seed,
                                              const std::shared_ptr<const SemiSyntheticTruth>& semi) {
    switch (spec.kind) {
        case EnvironmentKind::synthetic:
            return std::make_unique<SyntheticEnvironment>(spec.synthetic, seed);
        case EnvironmentKind::lower_bound:
            return std::make_unique<LowerBoundEnvironment>(spec.lower_bound, seed);
        case EnvironmentKind::semi_synthetic:
            if (!semi) {
                throw ArgumentError("semi-synthetic environment needs a fitted truth");
            }
            return std::make_unique<SemiSyntheticEnvironment>(semi, seed);
    }
    throw ArgumentError("unknown environment kind");
}

namespace {

struct CellOutput {
    std::vector<ResultRow> rows;
    CellInfo info;
};

CellOutput run_cell(const ExperimentConfig& config, const PolicySpec& policy, int rep,
                    const std::shared_ptr<const SemiSyntheticTruth>& semi) {
    const std::uint64_t seed = replication_seed(config.base_seed, static_cast<std::uint64_t>(rep));
    const auto env = make_environment(config.environment, seed, semi);
    const ModelParams& truth = env->truth();
    PolicyState state(policy.config, truth);
    PolicyRun run = run_policy(*env, state, config.horizon, seed);

    CellOutput out;
    out.info = {policy.name, rep, seed, run.stream_checksum, run.warnings};
    out.rows.resize(run.trace.size());
    const auto& records = run.trace.records();
    for (std::size_t i = 0; i < records.size(); ++i) {
        ResultRow& row = out.rows[i];
        row.policy = policy.name;
        row.rep = rep;
        row.round = records[i].round;
        row.episode = records[i].episode;
        row.strong_instant = records[i].strong;
        row.strong_cum = run.trace.strong_cum(i);
        row.regular_instant = records[i].regular;
        row.regular_cum = run.trace.regular_cum(i);
    }
    const GatingSampler sampler = env->gating_sampler();
    const std::uint64_t probe_seed = derive_seed(seed, 0x9e3779b9ULL);
    for (const auto& snap : run.snapshots) {
        if (!snap.params || snap.start >= out.rows.size()) continue;
        const EstimationError err = estimation_error(*snap.params, truth);
        ResultRow& row = out.rows[snap.start];
        row.err_l2 = err.l2;
        row.err_l1 = err.l1;
        // Score the gating vector under the labelling the error metric picked.
        const Vector theta_hat = err.swapped ? Vector(-snap.params->theta()) : snap.params->theta();
        row.excess_misclass =
            excess_misclassification(theta_hat, truth.theta(), sampler, config.misclass_samples, probe_seed);
    }
    return out;
}

}  // namespace

ResultTable run_experiment(const ExperimentConfig& config, const ProgressFn& progress) {
    config.validate();
    const auto semi = prepare_semi_synthetic(config.environment, config.base_seed);

    const std::size_t n_policies = config.policies.size();
    const auto n_reps = static_cast<std::size_t>(config.replications);
    const std::size_t n_cells = n_policies * n_reps;
    std::vector<CellOutput> outputs(n_cells);
    std::vector<std::exception_ptr> failures(n_cells);
    std::atomic<std::size_t> next{0};
    std::atomic<bool> abort{false};
    std::mutex progress_mutex;

    const auto worker = [&] {
        while (!abort.load()) {
            const std::size_t cell = next.fetch_add(1);
            if (cell >= n_cells) return;
            const auto& policy = config.policies[cell / n_reps];
            const int rep = static_cast<int>(cell % n_reps);
            try {
                outputs[cell] = run_cell(config, policy, rep, semi);
            } catch (...) {
                failures[cell] = std::current_exception();
                abort.store(true);
                return;
            }
            if (progress) {
                std::lock_guard lock(progress_mutex);
                progress("finished " + policy.name + " rep " + std::to_string(rep));
            }
        }
    };
    const auto n_threads = std::min<std::size_t>(static_cast<std::size_t>(config.jobs), n_cells);
    if (n_threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    for (std::size_t cell = 0; cell < n_cells; ++cell) {
        if (!failures[cell]) continue;
        const auto& policy = config.policies[cell / n_reps];
        const int rep = static_cast<int>(cell % n_reps);
        const std::uint64_t seed = replication_seed(config.base_seed, static_cast<std::uint64_t>(rep));
        try {
            std::rethrow_exception(failures[cell]);
        } catch (const std::exception& e) {
            throw std::runtime_error("policy '" + policy.name + "' replication " + std::to_string(rep) + " (seed " +
                                     std::to_string(seed) + ") failed: " + e.what());
        }
    }

    ResultTable table;
    table.rows.reserve(n_cells * config.horizon);
    for (auto& out : outputs) {
        table.rows.insert(table.rows.end(), std::make_move_iterator(out.rows.begin()),
                          std::make_move_iterator(out.rows.end()));
        table.cells.push_back(std::move(out.info));
    }
    return table;
}

}  // namespace lhb
