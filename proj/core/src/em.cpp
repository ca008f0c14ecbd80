#include "lhb/em.hpp"

#include "lhb/errors.hpp"
#include "lhb/rng.hpp"

#include <cmath>
#include <memory>
#include <string>

namespace lhb {

namespace {

void validate_constants(const LambdaScheduleConstants& c) {
    if (!(c.c_bar > 0.0) || !(c.kappa > 0.0) || !(c.delta0 >= 0.0) || !(c.s > 0.0) || !(c.d >= 1.0)) {
        throw ArgumentError("lambda schedule constants must be positive (delta0 nonnegative, d >= 1)");
    }
    if (!(c.c_bar * c.c_bar * c.kappa < 0.5)) {
        throw ArgumentError("lambda schedule requires c_bar^2 * kappa < 1/2");
    }
}

}  // namespace

double lambda_schedule(int t, double n, const LambdaScheduleConstants& c) {
    validate_constants(c);
    if (t < 0) {
        throw ArgumentError("lambda schedule iteration index must be nonnegative");
    }
    if (!(n >= 1.0)) {
        throw ArgumentError("lambda schedule needs n >= 1");
    }
    const double contraction = 2.0 * c.c_bar * c.c_bar * c.kappa;  // 2 * kappa_tilde
    const double statistical = 2.0 * c.c_bar * (1.0 - std::pow(contraction, t + 1)) / (1.0 - contraction) *
                               std::sqrt(std::log(c.d) / n);
    const double initial = c.c_bar * c.kappa * std::pow(contraction, t) / std::sqrt(c.s) * c.delta0;
    return statistical + initial;
}

double choose_lambda(const WeightedLassoProblem& problem, const LambdaPolicy& policy,
                     const SolverControl& control, std::uint64_t seed) {
    switch (policy.mode) {
        case LambdaMode::fixed:
            return policy.fixed_value;
        case LambdaMode::cross_validation: {
            CvOptions cv;
            cv.folds = policy.folds;
            cv.grid_size = policy.grid_size;
            cv.grid_ratio = policy.grid_ratio;
            cv.seed = seed;
            cv.control = control;
            cv.control.on_iterate = nullptr;
            cv.control.tol = std::max(control.tol, policy.cv_tol);
            return cross_validate_lambda(problem, cv);
        }
        case LambdaMode::theoretical:
            break;
    }
    throw ArgumentError("the theoretical penalty schedule is only defined inside em_fit");
}

double choose_lambda(const LogisticProblem& problem, const LambdaPolicy& policy, const SolverControl& control,
                     std::uint64_t seed) {
    switch (policy.mode) {
        case LambdaMode::fixed:
            return policy.fixed_value;
        case LambdaMode::cross_validation: {
            CvOptions cv;
            cv.folds = policy.folds;
            cv.grid_size = policy.grid_size;
            cv.grid_ratio = policy.grid_ratio;
            cv.seed = seed;
            cv.control = control;
            cv.control.on_iterate = nullptr;
            cv.control.tol = std::max(control.tol, policy.cv_tol);
            return cross_validate_lambda(problem, cv);
        }
        case LambdaMode::theoretical:
            break;
    }
    throw ArgumentError("the theoretical penalty schedule is only defined inside em_fit");
}

Batch make_batch(const std::vector<Interaction>& data, std::size_t begin, std::size_t end) {
    if (begin >= end || end > data.size()) {
        throw ArgumentError("empty or out-of-range batch");
    }
    const auto n = static_cast<Eigen::Index>(end - begin);
    const Eigen::Index dx = data[begin].context.reward_dim();
    const Eigen::Index dz = data[begin].context.z().size();
    Batch batch{Matrix(n, dx), Matrix(n, dz), Vector(n)};
    for (Eigen::Index i = 0; i < n; ++i) {
        const Interaction& it = data[begin + static_cast<std::size_t>(i)];
        if (it.context.reward_dim() != dx || it.context.z().size() != dz) {
            throw ArgumentError("interactions have inconsistent feature dimensions");
        }
        batch.x.row(i) = it.chosen_features().transpose();
        batch.z.row(i) = it.context.z().transpose();
        batch.y[i] = it.reward;
    }
    return batch;
}

EmResult em_fit(const std::vector<Interaction>& data, const ModelParams& init, const EmConfig& config) {
    if (config.t_max < 1) {
        throw ArgumentError("t_max must be positive");
    }
    const auto t_max = static_cast<std::size_t>(config.t_max);
    if (data.size() < t_max) {
        throw ArgumentError("em_fit needs at least t_max interactions");
    }
    if (data.front().context.reward_dim() != init.reward_dim() ||
        data.front().context.z().size() != init.gating_dim()) {
        throw ArgumentError("em_fit: initial parameters do not match the data dimensions");
    }
    if (config.lambda.mode == LambdaMode::theoretical) {
        if (!config.schedule) {
            throw ArgumentError("theoretical penalty mode requires schedule constants");
        }
        validate_constants(*config.schedule);
    }

    ModelParams params = init;
    EmDiagnostics diagnostics;
    const std::size_t fold_size = data.size() / t_max;
    const double sigma = init.sigma();

    for (std::size_t t = 1; t <= t_max; ++t) {
        const std::size_t begin = (t - 1) * fold_size;
        const std::size_t end = t == t_max ? data.size() : t * fold_size;
        Batch batch = make_batch(data, begin, end);
        const Eigen::Index n = batch.y.size();

        // E-step. Group-2 weights are sigmoid(-a) rather than 1 - sigmoid(a) so the
        // M-step problems are exact mirror images under a label swap.
        Vector w1(n);
        Vector w2(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            const double a = posterior_log_odds(batch.y[i], batch.x.row(i).transpose(),
                                                batch.z.row(i).transpose(), params);
            w1[i] = sigmoid(a);
            w2[i] = sigmoid(-a);
        }

        auto x = std::make_shared<const Matrix>(std::move(batch.x));
        auto z = std::make_shared<const Matrix>(std::move(batch.z));
        const WeightedLassoProblem p1(x, batch.y, w1, sigma, 0.0);
        const WeightedLassoProblem p2(x, batch.y, w2, sigma, 0.0);
        const LogisticProblem p3(z, w1, w2, 0.0);

        EmIteration record;
        record.t = static_cast<int>(t);
        record.fold_size = n;
        record.weight_mass = w1.sum();

        const std::uint64_t seed = derive_seed(config.cv_seed, t);
        if (config.lambda.mode == LambdaMode::theoretical) {
            const double lambda = lambda_schedule(static_cast<int>(t) - 1, static_cast<double>(n), *config.schedule);
            record.lambda_beta1 = record.lambda_beta2 = record.lambda_theta = lambda;
        } else {
            record.lambda_beta1 = choose_lambda(p1, config.lambda, config.control, seed);
            record.lambda_beta2 = choose_lambda(p2, config.lambda, config.control, seed);
            record.lambda_theta = choose_lambda(p3, config.lambda, config.control, seed);
        }

        // M-step.
        const double min_mass = 1e-8 * static_cast<double>(n);
        Vector beta1 = params.beta1();
        Vector beta2 = params.beta2();
        if (w1.sum() < min_mass) {
            diagnostics.warnings.push_back("iteration " + std::to_string(t) +
                                           ": group 1 has negligible weight; beta1 kept");
        } else {
            beta1 = solve_weighted_lasso(p1.with_lambda(record.lambda_beta1), params.beta1(), config.control);
        }
        if (w2.sum() < min_mass) {
            diagnostics.warnings.push_back("iteration " + std::to_string(t) +
                                           ": group 2 has negligible weight; beta2 kept");
        } else {
            beta2 = solve_weighted_lasso(p2.with_lambda(record.lambda_beta2), params.beta2(), config.control);
        }
        Vector theta = solve_penalized_logistic(p3.with_lambda(record.lambda_theta), params.theta(), config.control);

        params = ModelParams(std::move(theta), std::move(beta1), std::move(beta2), sigma);
        diagnostics.iterations.push_back(record);
    }
    return {std::move(params), std::move(diagnostics)};
}

}  // namespace lhb
