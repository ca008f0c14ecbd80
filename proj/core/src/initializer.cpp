#include "lhb/initializer.hpp"

#include "lhb/errors.hpp"
#include "lhb/rng.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace lhb {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;
// Small ridge on the regression components; it keeps the M-step well posed
// when a component owns fewer samples than screened features.
constexpr double kRidge = 1e-6;

double log_sum_exp(double a, double b) {
    const double m = std::max(a, b);
    return m + std::log(std::exp(a - m) + std::exp(b - m));
}

// Indices of two k-means++ centres among the rows of `points`.
std::pair<Eigen::Index, Eigen::Index> kmeanspp_pair(const Matrix& points, CounterRng& rng) {
    const Eigen::Index n = points.rows();
    const auto first = std::min(static_cast<Eigen::Index>(rng.uniform() * static_cast<double>(n)), n - 1);
    Vector dist(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        dist[i] = (points.row(i) - points.row(first)).squaredNorm();
    }
    const double total = dist.sum();
    if (!(total > 0.0)) {
        return {first, first};
    }
    const double target = rng.uniform() * total;
    double acc = 0.0;
    Eigen::Index second = n - 1;
    for (Eigen::Index i = 0; i < n; ++i) {
        acc += dist[i];
        if (acc > target) {
            second = i;
            break;
        }
    }
    return {first, second};
}

Vector nearest_assignment(const Matrix& points, Eigen::Index c0, Eigen::Index c1) {
    Vector resp(points.rows());
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
        const double d0 = (points.row(i) - points.row(c0)).squaredNorm();
        const double d1 = (points.row(i) - points.row(c1)).squaredNorm();
        resp[i] = d0 <= d1 ? 1.0 : 0.0;
    }
    return resp;
}

struct EmRun {
    Vector resp;
    std::vector<double> trace;
    bool converged = false;
};

double variance_floor(const Vector& y) {
    const double mean = y.mean();
    const double var = (y.array() - mean).square().mean();
    return 1e-10 * var + std::numeric_limits<double>::min();
}

// Mixture of two regressions y ~ N(x'b_c, s2) with mixing weight pi for component 0.
// ECM: b_c given s2, then s2 given b_c. The traced objective includes the ridge term.
EmRun regression_mixture_em(const Matrix& x, const Vector& y, Vector resp, int max_iters, double tol) {
    const Eigen::Index n = x.rows();
    const Eigen::Index p = x.cols();
    const double floor = variance_floor(y);
    Vector b[2] = {Vector::Zero(p), Vector::Zero(p)};
    double s2 = std::max((y.array() - y.mean()).square().mean(), floor);
    double pi = 0.5;
    EmRun run;

    for (int iter = 0; iter < max_iters; ++iter) {
        // M-step.
        pi = resp.mean();
        if (!(pi > 0.0 && pi < 1.0)) {
            break;
        }
        for (int c = 0; c < 2; ++c) {
            const Vector w = c == 0 ? resp : Vector(Vector::Ones(n) - resp);
            Matrix a = x.transpose() * (w.asDiagonal() * x);
            a.diagonal().array() += kRidge * s2;
            b[c] = a.ldlt().solve(x.transpose() * w.cwiseProduct(y));
        }
        double sse = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            const double r0 = y[i] - x.row(i).dot(b[0]);
            const double r1 = y[i] - x.row(i).dot(b[1]);
            sse += resp[i] * r0 * r0 + (1.0 - resp[i]) * r1 * r1;
        }
        s2 = std::max(sse / static_cast<double>(n), floor);

        // E-step and objective.
        double ll = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            const double r0 = y[i] - x.row(i).dot(b[0]);
            const double r1 = y[i] - x.row(i).dot(b[1]);
            const double l0 = std::log(pi) - 0.5 * (kLog2Pi + std::log(s2) + r0 * r0 / s2);
            const double l1 = std::log1p(-pi) - 0.5 * (kLog2Pi + std::log(s2) + r1 * r1 / s2);
            const double total = log_sum_exp(l0, l1);
            ll += total;
            resp[i] = std::exp(l0 - total);
        }
        ll -= 0.5 * kRidge * (b[0].squaredNorm() + b[1].squaredNorm());
        run.trace.push_back(ll);
        const std::size_t k = run.trace.size();
        if (k >= 2 && std::abs(run.trace[k - 1] - run.trace[k - 2]) <= tol * (1.0 + std::abs(ll))) {
            run.converged = true;
            break;
        }
    }
    run.resp = std::move(resp);
    return run;
}

// Gaussian mixture with a shared spherical covariance on the rows of v.
EmRun spherical_gmm_em(const Matrix& v, Vector resp, int max_iters, double tol) {
    const Eigen::Index n = v.rows();
    const auto dim = static_cast<double>(v.cols());
    const double floor = variance_floor(v.col(0)) / dim;
    EmRun run;
    for (int iter = 0; iter < max_iters; ++iter) {
        const double mass0 = resp.sum();
        const double mass1 = static_cast<double>(n) - mass0;
        if (!(mass0 > 0.0 && mass1 > 0.0)) {
            break;
        }
        const double pi = mass0 / static_cast<double>(n);
        const Vector w1 = Vector::Ones(n) - resp;
        const Eigen::RowVectorXd m0 = (resp.transpose() * v) / mass0;
        const Eigen::RowVectorXd m1 = (w1.transpose() * v) / mass1;
        double ss = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            ss += resp[i] * (v.row(i) - m0).squaredNorm() + w1[i] * (v.row(i) - m1).squaredNorm();
        }
        const double s2 = std::max(ss / (static_cast<double>(n) * dim), floor);

        double ll = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            const double q0 = (v.row(i) - m0).squaredNorm();
            const double q1 = (v.row(i) - m1).squaredNorm();
            const double norm = -0.5 * dim * (kLog2Pi + std::log(s2));
            const double l0 = std::log(pi) + norm - 0.5 * q0 / s2;
            const double l1 = std::log1p(-pi) + norm - 0.5 * q1 / s2;
            const double total = log_sum_exp(l0, l1);
            ll += total;
            resp[i] = std::exp(l0 - total);
        }
        run.trace.push_back(ll);
        const std::size_t k = run.trace.size();
        if (k >= 2 && std::abs(run.trace[k - 1] - run.trace[k - 2]) <= tol * (1.0 + std::abs(ll))) {
            run.converged = true;
            break;
        }
    }
    run.resp = std::move(resp);
    return run;
}

std::vector<Eigen::Index> screened_support(const Vector& beta, int cap) {
    std::vector<Eigen::Index> support;
    for (Eigen::Index j = 0; j < beta.size(); ++j) {
        if (beta[j] != 0.0) support.push_back(j);
    }
    if (cap >= 0 && support.size() > static_cast<std::size_t>(cap)) {
        std::stable_sort(support.begin(), support.end(),
                         [&](Eigen::Index a, Eigen::Index b) { return std::abs(beta[a]) > std::abs(beta[b]); });
        support.resize(static_cast<std::size_t>(cap));
        std::sort(support.begin(), support.end());
    }
    return support;
}

// Used when the pooled fit is empty, e.g. when the two groups' effects cancel
// on average. Heterogeneous slopes still show up in E[x_j^2 y^2], so rank
// coordinates by |cov(x_j^2, y^2)|.
std::vector<Eigen::Index> second_moment_support(const Matrix& x, const Vector& y, int cap) {
    const Eigen::Index d = x.cols();
    std::vector<Eigen::Index> support(static_cast<std::size_t>(d));
    std::iota(support.begin(), support.end(), Eigen::Index{0});
    if (cap < 0 || d <= cap) {
        return support;
    }
    const Vector y2 = y.array().square().matrix();
    const Vector y2c = (y2.array() - y2.mean()).matrix();
    Vector score(d);
    for (Eigen::Index j = 0; j < d; ++j) {
        const Vector x2 = x.col(j).array().square().matrix();
        score[j] = std::abs(y2c.dot(x2));
    }
    std::stable_sort(support.begin(), support.end(),
                     [&](Eigen::Index a, Eigen::Index b) { return score[a] > score[b]; });
    support.resize(static_cast<std::size_t>(cap));
    std::sort(support.begin(), support.end());
    return support;
}

Matrix columns(const Matrix& x, const std::vector<Eigen::Index>& cols) {
    Matrix out(x.rows(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t j = 0; j < cols.size(); ++j) {
        out.col(static_cast<Eigen::Index>(j)) = x.col(cols[j]);
    }
    return out;
}

double first_nonzero(const Vector& v) {
    for (Eigen::Index j = 0; j < v.size(); ++j) {
        if (v[j] != 0.0) return v[j];
    }
    return 0.0;
}

}  // namespace

MixtureFit fit_two_component_mixture(const Matrix& x, const Vector& y, ClusterModel model, int restarts,
                                     int max_iters, double tol, std::uint64_t seed) {
    if (restarts < 1 || max_iters < 1 || !(tol > 0.0)) {
        throw ArgumentError("mixture fit needs restarts >= 1, max_iters >= 1 and tol > 0");
    }
    if (x.rows() != y.size() || y.size() < 2) {
        throw ArgumentError("mixture fit needs at least two samples with matching rows");
    }
    const Eigen::Index n = y.size();
    // An empty regressor set leaves nothing to condition on; cluster y itself.
    const bool conditional = model == ClusterModel::conditional && x.cols() > 0;

    Matrix seeding;
    Matrix stacked;
    if (conditional) {
        // Seed on residuals of a pooled ridge fit: the group offsets show up there.
        Matrix a = x.transpose() * x;
        a.diagonal().array() += kRidge * std::max(1.0, a.diagonal().maxCoeff());
        const Vector pooled = a.ldlt().solve(x.transpose() * y);
        seeding = y - x * pooled;
    } else {
        stacked.resize(n, x.cols() + 1);
        stacked.col(0) = y;
        stacked.rightCols(x.cols()) = x;
        seeding = stacked;
    }

    MixtureFit best;
    best.loglik = -std::numeric_limits<double>::infinity();
    bool have = false;
    for (int r = 0; r < restarts; ++r) {
        CounterRng rng(seed, Stream::gmm, static_cast<std::uint64_t>(r));
        const auto [c0, c1] = kmeanspp_pair(seeding, rng);
        Vector resp = nearest_assignment(seeding, c0, c1);
        EmRun run = conditional ? regression_mixture_em(x, y, std::move(resp), max_iters, tol)
                                : spherical_gmm_em(stacked, std::move(resp), max_iters, tol);
        const double ll = run.trace.empty() ? -std::numeric_limits<double>::infinity() : run.trace.back();
        if (!have || ll > best.loglik) {
            have = true;
            best.resp = std::move(run.resp);
            best.trace = std::move(run.trace);
            best.loglik = ll;
            best.restart = r;
            best.converged = run.converged;
        }
    }
    best.labels.resize(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        best.labels[static_cast<std::size_t>(i)] = best.resp[i] >= 0.5 ? 0 : 1;
    }
    return best;
}

InitResult initialize(const std::vector<Interaction>& data, const InitConfig& config, std::uint64_t seed) {
    if (data.size() < 20) {
        throw ArgumentError("initialize needs at least 20 interactions, got " + std::to_string(data.size()));
    }
    if (config.gmm_restarts < 1) {
        throw ArgumentError("gmm_restarts must be at least 1");
    }
    if (!(config.sigma > 0.0)) {
        throw ArgumentError("initializer sigma must be positive");
    }
    const Batch batch = make_batch(data);
    const Eigen::Index n = batch.y.size();
    const Eigen::Index dx = batch.x.cols();
    const Eigen::Index dz = batch.z.cols();
    const auto x = std::make_shared<const Matrix>(batch.x);

    // Stage 1: pooled lasso screen.
    const WeightedLassoProblem pooled_problem(x, batch.y, Vector::Ones(n), config.sigma, 0.0);
    const double pooled_lambda = choose_lambda(pooled_problem, config.lambda, config.control, derive_seed(seed, 1));
    const Vector pooled = solve_weighted_lasso(pooled_problem.with_lambda(pooled_lambda), Vector::Zero(dx),
                                               config.control);
    InitDiagnostics diag;
    const int cap = config.max_support > 0 ? config.max_support : std::max(1, static_cast<int>(n / 40));
    diag.support = screened_support(pooled, cap);
    if (diag.support.empty()) {
        diag.support = second_moment_support(batch.x, batch.y, std::max(cap, 1));
    }

    // Stage 2: two-component clustering.
    diag.mixture = fit_two_component_mixture(columns(batch.x, diag.support), batch.y, config.cluster_model,
                                             config.gmm_restarts, config.gmm_max_iters, config.gmm_tol,
                                             derive_seed(seed, 2));
    std::vector<Eigen::Index> members[2];
    for (Eigen::Index i = 0; i < n; ++i) {
        members[diag.mixture.labels[static_cast<std::size_t>(i)]].push_back(i);
    }

    const auto pooled_sigma = [&] {
        const double sse = (batch.y - batch.x * pooled).squaredNorm();
        return std::sqrt(sse / static_cast<double>(n));
    };

    if (members[0].size() < 2 || members[1].size() < 2) {
        diag.degenerate = true;
        diag.labels.assign(static_cast<std::size_t>(n), 1);
        double sigma = config.sigma;
        if (config.estimate_sigma) {
            sigma = pooled_sigma();
        }
        return {ModelParams(Vector::Zero(dz), pooled, pooled, sigma > 0.0 ? sigma : config.sigma), std::move(diag)};
    }

    // Stage 3: per-cluster lasso on the full design.
    Vector fits[2];
    double sse = 0.0;
    for (int c = 0; c < 2; ++c) {
        const auto& rows = members[c];
        Matrix xc(static_cast<Eigen::Index>(rows.size()), dx);
        Vector yc(static_cast<Eigen::Index>(rows.size()));
        for (std::size_t r = 0; r < rows.size(); ++r) {
            xc.row(static_cast<Eigen::Index>(r)) = batch.x.row(rows[r]);
            yc[static_cast<Eigen::Index>(r)] = batch.y[rows[r]];
        }
        const WeightedLassoProblem p(std::move(xc), std::move(yc), Vector::Ones(static_cast<Eigen::Index>(rows.size())),
                                     config.sigma, 0.0);
        // Too few rows to cross-validate: reuse the pooled penalty.
        const bool can_cv = config.lambda.mode != LambdaMode::cross_validation ||
                            rows.size() >= static_cast<std::size_t>(config.lambda.folds);
        const double lambda = can_cv ? choose_lambda(p, config.lambda, config.control, derive_seed(seed, 3 + c))
                                     : pooled_lambda;
        fits[c] = solve_weighted_lasso(p.with_lambda(lambda), Vector::Zero(dx), config.control);
        sse += (p.response() - p.design() * fits[c]).squaredNorm();
    }

    // Orientation.
    int first = 0;
    const double lead0 = first_nonzero(fits[0]);
    const double lead1 = first_nonzero(fits[1]);
    if (lead1 > lead0) {
        first = 1;
    } else if (lead1 == lead0) {
        const double n0 = fits[0].norm();
        const double n1 = fits[1].norm();
        if (n1 > n0) {
            first = 1;
        } else if (n1 == n0) {
            first = diag.mixture.labels.front();
        }
    }

    Vector target(n);
    diag.labels.resize(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        const bool in_first = diag.mixture.labels[static_cast<std::size_t>(i)] == first;
        target[i] = in_first ? 1.0 : 0.0;
        diag.labels[static_cast<std::size_t>(i)] = in_first ? 1 : 2;
    }
    const LogisticProblem gating(batch.z, target, 0.0);
    const double lambda_theta = choose_lambda(gating, config.lambda, config.control, derive_seed(seed, 5));
    Vector theta = solve_penalized_logistic(gating.with_lambda(lambda_theta), Vector::Zero(dz), config.control);

    double sigma = config.sigma;
    if (config.estimate_sigma) {
        const double s = std::sqrt(sse / static_cast<double>(n));
        sigma = s > 0.0 ? s : config.sigma;
    }
    return {ModelParams(std::move(theta), std::move(fits[first]), std::move(fits[1 - first]), sigma),
            std::move(diag)};
}

}  // namespace lhb
