#include "lhb/environment.hpp"

#include "lhb/errors.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>

namespace lhb {

namespace {

Vector standard_normal(CounterRng& rng, Eigen::Index n) {
    std::normal_distribution<double> normal;
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        v[i] = normal(rng);
    }
    return v;
}

Matrix ar1_cholesky(int d, double rho) {
    Matrix sigma(d, d);
    for (int i = 0; i < d; ++i) {
        for (int j = 0; j < d; ++j) {
            sigma(i, j) = std::pow(rho, std::abs(i - j));
        }
    }
    Eigen::LLT<Matrix> llt(sigma);
    if (llt.info() != Eigen::Success) {
        throw ArgumentError("AR(1) covariance is not positive definite");
    }
    return llt.matrixL();
}

// L * xi for the AR(1) Cholesky factor, in O(d): x_0 = xi_0, x_j = rho x_{j-1} + sqrt(1 - rho^2) xi_j.
void ar1_apply(double rho, const Vector& xi, Vector& out) {
    const double innov = std::sqrt(1.0 - rho * rho);
    out.resize(xi.size());
    double prev = 0.0;
    for (Eigen::Index j = 0; j < xi.size(); ++j) {
        prev = j == 0 ? xi[0] : rho * prev + innov * xi[j];
        out[j] = prev;
    }
}

Vector rewards_for(const Context& context, const Vector& beta, double noise) {
    Vector r(static_cast<Eigen::Index>(context.num_arms()));
    for (std::size_t k = 0; k < context.num_arms(); ++k) {
        r[static_cast<Eigen::Index>(k)] = context.arm(k).dot(beta) + noise;
    }
    return r;
}

}  // namespace

// ---------------------------------------------------------------------------
// Synthetic

void SyntheticConfig::validate() const {
    if (d < 1 || d_z < 1 || s < 1 || K < 1 || theta_nnz < 1) {
        throw ArgumentError("synthetic config: d, d_z, s, K and theta_nnz must be positive");
    }
    if (s > d || d / 2 + s > d) {
        throw ArgumentError("synthetic config: d/2 + s exceeds d");
    }
    if (theta_nnz > d_z) {
        throw ArgumentError("synthetic config: theta_nnz exceeds d_z");
    }
    if (!(L_bar > 0.0) || !std::isfinite(L_bar)) {
        throw ArgumentError("synthetic config: L_bar must be positive");
    }
    if (!(sigma >= 0.0) || !std::isfinite(sigma)) {
        throw ArgumentError("synthetic config: sigma must be nonnegative");
    }
    if (!(rho > -1.0 && rho < 1.0)) {
        throw ArgumentError("synthetic config: rho must lie in (-1, 1)");
    }
    if (!std::isfinite(mu_gap) || !(mu_sd >= 0.0)) {
        throw ArgumentError("synthetic config: invalid arm-mean parameters");
    }
}

GroundTruth synthetic_truth(const SyntheticConfig& config, std::uint64_t seed) {
    config.validate();
    const double level = config.L_bar / config.s;
    Vector beta1 = Vector::Zero(config.d);
    Vector beta2 = Vector::Zero(config.d);
    beta1.head(config.s).setConstant(level);
    beta2.segment(config.d / 2, config.s).setConstant(-level);

    Vector theta = Vector::Zero(config.d_z);
    {
        CounterRng rng(seed, Stream::truth, 0);
        std::uniform_real_distribution<double> unif(-1.0, 1.0);
        for (int j = 0; j < config.theta_nnz; ++j) {
            theta[j] = unif(rng);
        }
    }

    GroundTruth truth{ModelParams(std::move(theta), std::move(beta1), std::move(beta2),
                                  config.sigma > 0.0 ? config.sigma : 1.0),
                      config.sigma,
                      {},
                      ar1_cholesky(config.d, config.rho)};
    for (int k = 0; k < config.K; ++k) {
        const double centre = config.K == 1 ? config.mu_gap
                                            : config.mu_gap * (1.0 - 2.0 * k / static_cast<double>(config.K - 1));
        CounterRng rng(seed, Stream::truth, 1 + static_cast<std::uint64_t>(k));
        std::normal_distribution<double> normal(centre, config.mu_sd);
        Vector mu(config.d);
        for (int j = 0; j < config.d; ++j) {
            mu[j] = normal(rng);
        }
        truth.arm_means.push_back(std::move(mu));
    }
    return truth;
}

Group Environment::draw_group(std::uint64_t round, const VectorRef& z) const {
    CounterRng rng(seed_, Stream::group, round);
    return rng.uniform() < group_probability(z, truth().theta()) ? Group::one : Group::two;
}

double Environment::draw_noise(std::uint64_t round, double sd) const {
    CounterRng rng(seed_, Stream::noise, round);
    std::normal_distribution<double> normal;
    return sd * normal(rng);
}

SyntheticEnvironment::SyntheticEnvironment(GroundTruth truth, double rho, std::uint64_t seed)
    : Environment(seed), truth_(std::move(truth)), rho_(rho) {
    if (truth_.arm_means.empty()) {
        throw ArgumentError("synthetic environment needs at least one arm");
    }
    if (!(rho_ > -1.0 && rho_ < 1.0)) {
        throw ArgumentError("rho must lie in (-1, 1)");
    }
    for (const auto& mu : truth_.arm_means) {
        if (mu.size() != truth_.params.reward_dim()) {
            throw ArgumentError("arm mean has the wrong dimension");
        }
    }
}

SyntheticEnvironment::SyntheticEnvironment(const SyntheticConfig& config, std::uint64_t seed)
    : SyntheticEnvironment(synthetic_truth(config, seed), config.rho, seed) {}

Vector SyntheticEnvironment::sample_gating(CounterRng& rng) const {
    return standard_normal(rng, truth_.params.gating_dim());
}

Round SyntheticEnvironment::sample_round(std::uint64_t round) const {
    CounterRng zrng(seed(), Stream::gating, round);
    Vector z = sample_gating(zrng);

    CounterRng xrng(seed(), Stream::arms, round);
    std::vector<Vector> arms(truth_.arm_means.size());
    Vector shaped;
    for (std::size_t k = 0; k < arms.size(); ++k) {
        ar1_apply(rho_, standard_normal(xrng, truth_.params.reward_dim()), shaped);
        arms[k] = truth_.arm_means[k] + shaped;
    }

    const Group g = draw_group(round, z);
    const double eps = draw_noise(round, truth_.noise_sd);
    Context context(std::move(z), std::move(arms));
    Vector rewards = rewards_for(context, truth_.params.beta(g), eps);
    return {std::move(context), g, std::move(rewards), eps};
}

// ---------------------------------------------------------------------------
// Lower-bound construction

LowerBoundEnvironment::LowerBoundEnvironment(LowerBoundConfig config, std::uint64_t seed)
    : Environment(seed),
      config_(std::move(config)),
      params_([&] {
          if (!(config_.L_bar > 0.0) || !(config_.x_bar > 0.0)) {
              throw ArgumentError("lower-bound construction needs L_bar > 0 and x_bar > 0");
          }
          if (config_.d < 1 || config_.theta.size() < 1) {
              throw ArgumentError("lower-bound construction needs d >= 1 and a non-empty theta");
          }
          if (!(config_.sigma >= 0.0)) {
              throw ArgumentError("lower-bound construction needs sigma >= 0");
          }
          Vector b1 = Vector::Zero(config_.d);
          b1[0] = config_.L_bar;
          Vector b2 = -b1;
          return ModelParams(config_.theta, std::move(b1), std::move(b2),
                             config_.sigma > 0.0 ? config_.sigma : 1.0);
      }()) {}

Vector LowerBoundEnvironment::sample_gating(CounterRng& rng) const {
    return standard_normal(rng, params_.gating_dim());
}

Round LowerBoundEnvironment::sample_round(std::uint64_t round) const {
    CounterRng zrng(seed(), Stream::gating, round);
    Vector z = sample_gating(zrng);

    CounterRng xrng(seed(), Stream::arms, round);
    const double half = config_.x_bar / 2.0;
    std::uniform_real_distribution<double> unif(-half, half);
    Vector u(config_.d);
    for (int j = 0; j < config_.d; ++j) {
        u[j] = unif(xrng);
    }
    std::vector<Vector> arms;
    arms.reserve(2);
    for (int a = 1; a <= 2; ++a) {
        arms.push_back(u.array() + half * (3 - 2 * a));
    }

    const Group g = draw_group(round, z);
    const double eps = draw_noise(round, config_.sigma);
    Context context(std::move(z), std::move(arms));
    Vector rewards = rewards_for(context, params_.beta(g), eps);
    return {std::move(context), g, std::move(rewards), eps};
}

std::unique_ptr<Environment> lower_bound_env(double L_bar, double x_bar, const Vector& theta_star,
                                             std::uint64_t seed, int d) {
    LowerBoundConfig config;
    config.L_bar = L_bar;
    config.x_bar = x_bar;
    config.d = d;
    config.theta = theta_star;
    return std::make_unique<LowerBoundEnvironment>(std::move(config), seed);
}

// ---------------------------------------------------------------------------
// Tabular ingestion

std::size_t DataTable::column_index(const std::string& name) const {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) {
        throw IngestionError("missing column '" + name + "'", name);
    }
    return static_cast<std::size_t>(it - header.begin());
}

namespace {

std::vector<std::string> split_line(const std::string& line, char delimiter) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, delimiter)) {
        const auto first = cell.find_first_not_of(" \t\r");
        const auto last = cell.find_last_not_of(" \t\r");
        cells.push_back(first == std::string::npos ? std::string{} : cell.substr(first, last - first + 1));
    }
    if (!line.empty() && line.back() == delimiter) {
        cells.emplace_back();
    }
    return cells;
}

double numeric_cell(const DataTable& table, std::size_t row, std::size_t col) {
    const std::string& cell = table.rows[row][col];
    double value = 0.0;
    const char* end = cell.data() + cell.size();
    const auto [ptr, ec] = std::from_chars(cell.data(), end, value);
    if (cell.empty() || ec != std::errc{} || ptr != end || !std::isfinite(value)) {
        throw IngestionError("non-numeric value '" + cell + "' in column '" + table.header[col] + "' at row " +
                                 std::to_string(row + 1),
                             table.header[col], row + 1);
    }
    return value;
}

}  // namespace

DataTable parse_table(const std::string& text, char delimiter) {
    DataTable table;
    std::istringstream in(text);
    std::string line;
    bool have_header = false;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.find_first_not_of(" \t") == std::string::npos) {
            continue;
        }
        if (!have_header) {
            if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) {
                line.erase(0, 3);
            }
            table.header = split_line(line, delimiter);
            std::set<std::string> seen;
            for (const auto& name : table.header) {
                if (name.empty() || !seen.insert(name).second) {
                    throw IngestionError("header has an empty or duplicate column name '" + name + "'", name);
                }
            }
            have_header = true;
            continue;
        }
        ++row;
        auto cells = split_line(line, delimiter);
        if (cells.size() != table.header.size()) {
            throw IngestionError("row " + std::to_string(row) + " has " + std::to_string(cells.size()) +
                                     " fields, expected " + std::to_string(table.header.size()),
                                 {}, row);
        }
        table.rows.push_back(std::move(cells));
    }
    if (!have_header) {
        throw IngestionError("table has no header row");
    }
    return table;
}

DataTable read_table(const std::string& path, char delimiter) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IngestionError("cannot open table '" + path + "'");
    }
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return parse_table(buffer.str(), delimiter);
}

// ---------------------------------------------------------------------------
// Semi-synthetic ground truth

SemiSyntheticTruth semi_synthetic_truth(const DataTable& table, const TableRoles& roles,
                                        const LambdaPolicy& lambda, std::uint64_t seed) {
    if (roles.z_columns.empty() || roles.arm_columns.empty() || roles.arm_columns.front().empty()) {
        throw ArgumentError("semi-synthetic roles need gating columns and at least one arm with features");
    }
    const std::size_t dx = roles.arm_columns.front().size();
    for (const auto& arm : roles.arm_columns) {
        if (arm.size() != dx) {
            throw ArgumentError("every arm needs the same number of feature columns");
        }
    }
    const std::size_t K = roles.arm_columns.size();
    if (K > 1 && roles.action_column.empty()) {
        throw ArgumentError("an action column is required when there is more than one arm");
    }

    const std::size_t reward_col = table.column_index(roles.reward_column);
    const std::size_t group_col = table.column_index(roles.group_column);
    std::vector<std::size_t> z_cols;
    for (const auto& name : roles.z_columns) {
        z_cols.push_back(table.column_index(name));
    }
    std::vector<std::vector<std::size_t>> x_cols(K);
    for (std::size_t k = 0; k < K; ++k) {
        for (const auto& name : roles.arm_columns[k]) {
            x_cols[k].push_back(table.column_index(name));
        }
    }
    const bool has_action = !roles.action_column.empty();
    const std::size_t action_col = has_action ? table.column_index(roles.action_column) : 0;

    const std::size_t n = table.rows.size();
    std::set<std::string> labels;
    for (std::size_t i = 0; i < n; ++i) {
        labels.insert(table.rows[i][group_col]);
    }
    if (labels.size() != 2) {
        throw IngestionError("group column '" + roles.group_column + "' must hold exactly two distinct values, found " +
                                 std::to_string(labels.size()),
                             roles.group_column);
    }
    const std::string one = roles.group_one.empty() ? *labels.begin() : roles.group_one;
    if (!labels.count(one)) {
        throw IngestionError("group label '" + one + "' does not occur in column '" + roles.group_column + "'",
                             roles.group_column);
    }
    const std::string two = one == *labels.begin() ? *labels.rbegin() : *labels.begin();

    Matrix z_rows(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(z_cols.size()));
    std::vector<Matrix> arm_rows(K, Matrix(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dx)));
    Vector reward(static_cast<Eigen::Index>(n));
    Vector label(static_cast<Eigen::Index>(n));
    std::vector<std::size_t> action(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        reward[r] = numeric_cell(table, i, reward_col);
        label[r] = table.rows[i][group_col] == one ? 1.0 : 0.0;
        for (std::size_t j = 0; j < z_cols.size(); ++j) {
            z_rows(r, static_cast<Eigen::Index>(j)) = numeric_cell(table, i, z_cols[j]);
        }
        for (std::size_t k = 0; k < K; ++k) {
            for (std::size_t j = 0; j < dx; ++j) {
                arm_rows[k](r, static_cast<Eigen::Index>(j)) = numeric_cell(table, i, x_cols[k][j]);
            }
        }
        if (has_action) {
            const double a = numeric_cell(table, i, action_col);
            if (a < 0.0 || a != std::floor(a) || a >= static_cast<double>(K)) {
                throw IngestionError("action value out of range in column '" + roles.action_column + "' at row " +
                                         std::to_string(i + 1),
                                     roles.action_column, i + 1);
            }
            action[i] = static_cast<std::size_t>(a);
        }
    }

    for (double g : {1.0, 0.0}) {
        const auto count = static_cast<std::size_t>((label.array() == g).count());
        if (count < roles.min_rows_per_group) {
            throw IngestionError("group '" + (g == 1.0 ? one : two) +
                                     "' has " + std::to_string(count) + " rows, fewer than " +
                                     std::to_string(roles.min_rows_per_group),
                                 roles.group_column);
        }
    }
    if ((reward.array() == reward[0]).all()) {
        throw DegenerateProblemError("reward column '" + roles.reward_column +
                                     "' is constant; the fitted noise level would be zero");
    }

    // Gating model.
    const LogisticProblem gating(z_rows, label, 0.0);
    const double lambda_theta = choose_lambda(gating, lambda, {}, derive_seed(seed, 0));
    Vector theta = solve_penalized_logistic(gating.with_lambda(lambda_theta), Vector::Zero(gating.cols()));

    // Reward models on the logged arm, one per group.
    Matrix logged(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dx));
    for (std::size_t i = 0; i < n; ++i) {
        logged.row(static_cast<Eigen::Index>(i)) = arm_rows[action[i]].row(static_cast<Eigen::Index>(i));
    }
    Vector betas[2];
    double sse = 0.0;
    for (int gi = 0; gi < 2; ++gi) {
        const double g = gi == 0 ? 1.0 : 0.0;
        std::vector<Eigen::Index> rows;
        for (Eigen::Index i = 0; i < label.size(); ++i) {
            if (label[i] == g) rows.push_back(i);
        }
        Matrix xg(static_cast<Eigen::Index>(rows.size()), logged.cols());
        Vector yg(static_cast<Eigen::Index>(rows.size()));
        for (std::size_t r = 0; r < rows.size(); ++r) {
            xg.row(static_cast<Eigen::Index>(r)) = logged.row(rows[r]);
            yg[static_cast<Eigen::Index>(r)] = reward[rows[r]];
        }
        const WeightedLassoProblem p(std::move(xg), std::move(yg), Vector::Ones(static_cast<Eigen::Index>(rows.size())),
                                     1.0, 0.0);
        const double lam = choose_lambda(p, lambda, {}, derive_seed(seed, 1 + static_cast<std::uint64_t>(gi)));
        betas[gi] = solve_weighted_lasso(p.with_lambda(lam), Vector::Zero(p.cols()));
        sse += (p.response() - p.design() * betas[gi]).squaredNorm();
    }
    const double sigma = std::sqrt(sse / static_cast<double>(n));
    if (!(sigma > 1e-12 * (1.0 + reward.cwiseAbs().maxCoeff()))) {
        throw DegenerateProblemError("fitted residual standard deviation is zero");
    }

    return SemiSyntheticTruth{
        GroundTruth{ModelParams(std::move(theta), std::move(betas[0]), std::move(betas[1]), sigma), sigma, {}, Matrix()},
        std::move(z_rows), std::move(arm_rows)};
}

SemiSyntheticEnvironment::SemiSyntheticEnvironment(std::shared_ptr<const SemiSyntheticTruth> truth,
                                                   std::uint64_t seed)
    : Environment(seed), truth_(std::move(truth)) {
    if (!truth_ || truth_->arm_rows.empty() || truth_->z_rows.rows() < 1) {
        throw ArgumentError("semi-synthetic environment needs a fitted truth with at least one row");
    }
}

Vector SemiSyntheticEnvironment::sample_gating(CounterRng& rng) const {
    const auto n = static_cast<double>(truth_->z_rows.rows());
    const auto row = std::min(static_cast<Eigen::Index>(rng.uniform() * n), truth_->z_rows.rows() - 1);
    return truth_->z_rows.row(row).transpose();
}

Round SemiSyntheticEnvironment::sample_round(std::uint64_t round) const {
    CounterRng rrng(seed(), Stream::resample, round);
    const auto n = static_cast<double>(truth_->z_rows.rows());
    const auto row = std::min(static_cast<Eigen::Index>(rrng.uniform() * n), truth_->z_rows.rows() - 1);
    Vector z = truth_->z_rows.row(row).transpose();
    std::vector<Vector> arms;
    arms.reserve(truth_->arm_rows.size());
    for (const auto& m : truth_->arm_rows) {
        arms.push_back(m.row(row).transpose());
    }
    const Group g = draw_group(round, z);
    const double eps = draw_noise(round, truth_->ground.noise_sd);
    Context context(std::move(z), std::move(arms));
    Vector rewards = rewards_for(context, truth_->ground.params.beta(g), eps);
    return {std::move(context), g, std::move(rewards), eps};
}

}  // namespace lhb
