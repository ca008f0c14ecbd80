#include "lhb/sparse.hpp"

#include "lhb/errors.hpp"
#include "lhb/rng.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <string>

namespace lhb {

namespace {

void check_rows(Eigen::Index rows, Eigen::Index n, const char* what) {
    if (rows != n) {
        throw ArgumentError(std::string(what) + ": expected " + std::to_string(rows) + " entries, got " +
                            std::to_string(n));
    }
}

void check_lambda(double lambda) {
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
        throw ArgumentError("lambda must be finite and nonnegative");
    }
}

void check_control(const SolverControl& control) {
    if (!(control.tol > 0.0)) {
        throw ArgumentError("solver tolerance must be positive");
    }
    if (control.max_iters < 1) {
        throw ArgumentError("solver iteration budget must be positive");
    }
}

double softplus(double x) noexcept {
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

// Mean of softplus(eta_i) - w_i eta_i, the smooth logistic loss.
// softplus(eta) - w eta and sigmoid(eta) - w, written in terms of w and its
// complement so that (eta, w, wc) -> (-eta, wc, w) flips signs exactly.
double logistic_loss(const Vector& eta, const Vector& w, const Vector& wc) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
        total += wc[i] * softplus(eta[i]) + w[i] * softplus(-eta[i]);
    }
    return total / static_cast<double>(eta.size());
}

Vector logistic_grad_from_eta(const Matrix& z, const Vector& eta, const Vector& w, const Vector& wc) {
    Vector resid(eta.size());
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
        resid[i] = wc[i] * sigmoid(eta[i]) - w[i] * sigmoid(-eta[i]);
    }
    return z.transpose() * resid / static_cast<double>(eta.size());
}

Matrix select_rows(const Matrix& m, const std::vector<Eigen::Index>& rows) {
    Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        out.row(static_cast<Eigen::Index>(i)) = m.row(rows[i]);
    }
    return out;
}

Vector select_entries(const Vector& v, const std::vector<Eigen::Index>& rows) {
    Vector out(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        out[static_cast<Eigen::Index>(i)] = v[rows[i]];
    }
    return out;
}

std::vector<double> descending_grid(const CvOptions& options, double lambda_max) {
    std::vector<double> grid = options.grid.empty()
                                   ? default_lambda_grid(lambda_max, options.grid_size, options.grid_ratio)
                                   : options.grid;
    if (grid.empty()) {
        throw ArgumentError("cross-validation grid is empty");
    }
    for (double l : grid) {
        check_lambda(l);
    }
    std::sort(grid.begin(), grid.end(), std::greater<>());
    return grid;
}

std::vector<std::vector<Eigen::Index>> fold_members(Eigen::Index n, const CvOptions& options) {
    const auto assignment = fold_assignment(n, options.folds, options.seed);
    std::vector<std::vector<Eigen::Index>> members(static_cast<std::size_t>(options.folds));
    for (Eigen::Index i = 0; i < n; ++i) {
        members[static_cast<std::size_t>(assignment[static_cast<std::size_t>(i)])].push_back(i);
    }
    return members;
}

double pick_lambda(const std::vector<double>& grid, const std::vector<double>& loss) {
    // grid is descending; strict improvement keeps the larger lambda on ties.
    std::size_t best = 0;
    for (std::size_t k = 1; k < grid.size(); ++k) {
        if (loss[k] < loss[best]) {
            best = k;
        }
    }
    return grid[best];
}

}  // namespace

// ---------------------------------------------------------------------------
// Problems

WeightedLassoProblem::WeightedLassoProblem(std::shared_ptr<const Matrix> design, Vector response,
                                           Vector weights, double sigma, double lambda)
    : design_(std::move(design)),
      response_(std::move(response)),
      weights_(std::move(weights)),
      sigma_(sigma),
      lambda_(lambda) {
    if (!design_ || design_->rows() < 1) {
        throw ArgumentError("weighted lasso needs at least one observation");
    }
    check_rows(design_->rows(), response_.size(), "response");
    check_rows(design_->rows(), weights_.size(), "weights");
    if ((weights_.array() < 0.0).any() || (weights_.array() > 1.0).any() || !weights_.allFinite()) {
        throw ArgumentError("weights must lie in [0, 1]");
    }
    if (!(sigma_ > 0.0) || !std::isfinite(sigma_)) {
        throw ArgumentError("sigma must be positive");
    }
    check_lambda(lambda_);
}

WeightedLassoProblem::WeightedLassoProblem(Matrix design, Vector response, Vector weights, double sigma,
                                           double lambda)
    : WeightedLassoProblem(std::make_shared<const Matrix>(std::move(design)), std::move(response),
                           std::move(weights), sigma, lambda) {}

WeightedLassoProblem WeightedLassoProblem::with_lambda(double lambda) const {
    return {design_, response_, weights_, sigma_, lambda};
}

double WeightedLassoProblem::lambda_max() const {
    const double scale = static_cast<double>(rows()) * sigma_ * sigma_;
    const Vector c = design().transpose() * weights_.cwiseProduct(response_) / scale;
    return c.size() == 0 ? 0.0 : c.cwiseAbs().maxCoeff();
}

LogisticProblem::LogisticProblem(std::shared_ptr<const Matrix> design, Vector responses, Vector complements,
                                 double lambda)
    : design_(std::move(design)), responses_(std::move(responses)), complements_(std::move(complements)),
      lambda_(lambda) {
    if (!design_ || design_->rows() < 1) {
        throw ArgumentError("logistic problem needs at least one observation");
    }
    check_rows(design_->rows(), responses_.size(), "responses");
    check_rows(design_->rows(), complements_.size(), "complements");
    if ((responses_.array() < 0.0).any() || (responses_.array() > 1.0).any() || !responses_.allFinite()) {
        throw ArgumentError("logistic responses must lie in [0, 1]");
    }
    if (!complements_.allFinite() ||
        ((responses_ + complements_).array() - 1.0).abs().maxCoeff() > 1e-12) {
        throw ArgumentError("logistic complements must equal 1 - responses");
    }
    check_lambda(lambda_);
}

LogisticProblem::LogisticProblem(std::shared_ptr<const Matrix> design, Vector responses, double lambda)
    : LogisticProblem(std::move(design), responses, Vector(1.0 - responses.array()), lambda) {}

LogisticProblem::LogisticProblem(Matrix design, Vector responses, double lambda)
    : LogisticProblem(std::make_shared<const Matrix>(std::move(design)), std::move(responses), lambda) {}

LogisticProblem LogisticProblem::with_lambda(double lambda) const {
    return {design_, responses_, complements_, lambda};
}

double LogisticProblem::lambda_max() const {
    const Vector g = design().transpose() * (0.5 * (complements_ - responses_)) / static_cast<double>(rows());
    return g.size() == 0 ? 0.0 : g.cwiseAbs().maxCoeff();
}

// ---------------------------------------------------------------------------
// Objectives and certificates

double soft_threshold(double v, double t) noexcept {
    if (v > t) return v - t;
    if (v < -t) return v + t;
    return 0.0;
}

double lasso_objective(const WeightedLassoProblem& p, const VectorRef& beta) {
    const Vector resid = p.response() - p.design() * beta;
    const double scale = 2.0 * static_cast<double>(p.rows()) * p.sigma() * p.sigma();
    return p.weights().dot(resid.cwiseAbs2()) / scale + p.lambda() * beta.lpNorm<1>();
}

Vector lasso_gradient(const WeightedLassoProblem& p, const VectorRef& beta) {
    const Vector resid = p.response() - p.design() * beta;
    const double scale = static_cast<double>(p.rows()) * p.sigma() * p.sigma();
    return -(p.design().transpose() * p.weights().cwiseProduct(resid)) / scale;
}

double kkt_residual(const VectorRef& gradient, const VectorRef& coef, double lambda) {
    double worst = 0.0;
    for (Eigen::Index j = 0; j < coef.size(); ++j) {
        double v;
        if (coef[j] > 0.0) {
            v = std::abs(gradient[j] + lambda);
        } else if (coef[j] < 0.0) {
            v = std::abs(gradient[j] - lambda);
        } else {
            v = std::max(std::abs(gradient[j]) - lambda, 0.0);
        }
        worst = std::max(worst, v);
    }
    return worst;
}

double lasso_kkt_residual(const WeightedLassoProblem& p, const VectorRef& beta) {
    return kkt_residual(lasso_gradient(p, beta), beta, p.lambda());
}

double logistic_objective(const LogisticProblem& p, const VectorRef& theta) {
    const Vector eta = p.design() * theta;
    return logistic_loss(eta, p.responses(), p.complements()) + p.lambda() * theta.lpNorm<1>();
}

Vector logistic_gradient(const LogisticProblem& p, const VectorRef& theta) {
    const Vector eta = p.design() * theta;
    return logistic_grad_from_eta(p.design(), eta, p.responses(), p.complements());
}

double logistic_kkt_residual(const LogisticProblem& p, const VectorRef& theta) {
    return kkt_residual(logistic_gradient(p, theta), theta, p.lambda());
}

// ---------------------------------------------------------------------------
// Solvers

Vector solve_lasso_gram(const Matrix& gram, const Vector& linear, double lambda, const VectorRef& init,
                        const SolverControl& control) {
    check_control(control);
    check_lambda(lambda);
    const Eigen::Index d = gram.rows();
    if (gram.cols() != d || linear.size() != d || init.size() != d) {
        throw ArgumentError("lasso: dimension mismatch between quadratic, linear term and init");
    }
    Vector beta = init;
    // residual correlation r = c - G beta; the smooth gradient is -r.
    Vector r = linear - gram * beta;
    auto update = [&](Eigen::Index j) {
        const double gjj = gram(j, j);
        const double updated = gjj > 0.0 ? soft_threshold(r[j] + gjj * beta[j], lambda) / gjj : 0.0;
        const double delta = updated - beta[j];
        if (delta != 0.0) {
            r.noalias() -= gram.col(j) * delta;
            beta[j] = updated;
        }
        return std::abs(delta);
    };
    // Feature-sign active set started from the current iterate. Solve the
    // quadratic on the signed support; if a coefficient would change sign,
    // stop where it reaches zero and drop it, otherwise admit the worst KKT
    // violator. Every step lowers the objective, so on failure beta is left at
    // a point at least as good as the one it started from.
    auto active_set = [&]() -> bool {
        std::vector<Eigen::Index> support;
        std::vector<double> sign;
        for (Eigen::Index j = 0; j < d; ++j) {
            if (beta[j] != 0.0) {
                support.push_back(j);
                sign.push_back(beta[j] > 0.0 ? 1.0 : -1.0);
            }
        }
        auto drop = [&](std::size_t a) {
            beta[support[a]] = 0.0;
            support.erase(support.begin() + static_cast<std::ptrdiff_t>(a));
            sign.erase(sign.begin() + static_cast<std::ptrdiff_t>(a));
        };
        // More coordinates than the rank of their block: the quadratic is flat
        // along the block's null space, so walk along null directions that do
        // not raise the l1 term, dropping one coordinate per direction. The
        // basis is updated by elimination instead of being recomputed.
        auto shed_null = [&](const Matrix& g) {
            const Eigen::SelfAdjointEigenSolver<Matrix> eig(g);
            if (eig.info() != Eigen::Success) return false;
            const Vector& values = eig.eigenvalues();
            const double cutoff = 1e-10 * std::max(values[values.size() - 1], 1e-300);
            Eigen::Index k = 0;
            while (k < values.size() && values[k] <= cutoff) ++k;
            Matrix basis = eig.eigenvectors().leftCols(k);
            bool changed = false;
            while (basis.cols() > 0) {
                Vector v = basis.col(0);
                double slope = 0.0;
                for (std::size_t a = 0; a < support.size(); ++a) slope += sign[a] * v[static_cast<Eigen::Index>(a)];
                if (slope > 0.0) v = -v;
                double t = std::numeric_limits<double>::infinity();
                std::size_t hit = support.size();
                for (std::size_t a = 0; a < support.size(); ++a) {
                    const double va = v[static_cast<Eigen::Index>(a)];
                    if (sign[a] * va < 0.0 && -beta[support[a]] / va < t) {
                        t = -beta[support[a]] / va;
                        hit = a;
                    }
                }
                if (hit == support.size()) break;
                for (std::size_t a = 0; a < support.size(); ++a) beta[support[a]] += t * v[static_cast<Eigen::Index>(a)];
                drop(hit);
                changed = true;
                // Keep the remaining directions inside the null space of the
                // smaller block: zero their entry for the dropped coordinate.
                const auto row = static_cast<Eigen::Index>(hit);
                Eigen::Index pivot = 0;
                basis.row(row).cwiseAbs().maxCoeff(&pivot);
                for (Eigen::Index q = 0; q < basis.cols(); ++q) {
                    if (q != pivot) basis.col(q) -= basis(row, q) / basis(row, pivot) * basis.col(pivot);
                }
                Matrix reduced(basis.rows() - 1, basis.cols() - 1);
                Eigen::Index out = 0;
                for (Eigen::Index q = 0; q < basis.cols(); ++q) {
                    if (q == pivot) continue;
                    Vector col(basis.rows() - 1);
                    col << basis.col(q).head(row), basis.col(q).tail(basis.rows() - row - 1);
                    const double norm = col.norm();
                    if (norm > 1e-8) reduced.col(out++) = col / norm;
                }
                basis = reduced.leftCols(out);
            }
            return changed;
        };
        const int max_steps = 4 * static_cast<int>(d) + 10;
        for (int step = 0; step < max_steps; ++step) {
            const auto m = static_cast<Eigen::Index>(support.size());
            Matrix g(m, m);
            Vector rhs(m);
            Vector current(m);
            for (Eigen::Index a = 0; a < m; ++a) {
                const Eigen::Index j = support[static_cast<std::size_t>(a)];
                rhs[a] = linear[j] - lambda * sign[static_cast<std::size_t>(a)];
                current[a] = beta[j];
                for (Eigen::Index b = 0; b < m; ++b) g(a, b) = gram(j, support[static_cast<std::size_t>(b)]);
            }
            const Eigen::LDLT<Matrix> ldlt(g);
            const bool regular = m == 0 || (ldlt.info() == Eigen::Success && ldlt.isPositive() &&
                                            ldlt.vectorD().minCoeff() > 1e-10 * ldlt.vectorD().maxCoeff());
            if (!regular) {
                if (!shed_null(g)) return false;
                continue;
            }
            const Vector solution = ldlt.solve(rhs);
            if (!solution.allFinite()) return false;
            const Vector direction = solution - current;
            double t = 1.0;
            std::size_t hit = support.size();
            for (Eigen::Index a = 0; a < m; ++a) {
                const double sa = sign[static_cast<std::size_t>(a)];
                if (sa * (current[a] + direction[a]) < 0.0) {
                    const double ta = -current[a] / direction[a];
                    if (ta < t) {
                        t = ta;
                        hit = static_cast<std::size_t>(a);
                    }
                }
            }
            if (hit != support.size()) {
                for (Eigen::Index a = 0; a < m; ++a) {
                    beta[support[static_cast<std::size_t>(a)]] = current[a] + t * direction[a];
                }
                drop(hit);
                continue;
            }
            for (Eigen::Index a = 0; a < m; ++a) beta[support[static_cast<std::size_t>(a)]] = solution[a];
            const Vector grad = gram * beta - linear;
            Eigen::Index worst = -1;
            double violation = control.tol;
            for (Eigen::Index j = 0; j < d; ++j) {
                if (beta[j] == 0.0 && std::abs(grad[j]) - lambda > violation) {
                    violation = std::abs(grad[j]) - lambda;
                    worst = j;
                }
            }
            if (worst < 0) return kkt_residual(grad, beta, lambda) <= control.tol;
            support.push_back(worst);
            sign.push_back(grad[worst] > 0.0 ? -1.0 : 1.0);
        }
        return false;
    };
    auto signed_support = [&] {
        std::vector<Eigen::Index> out;
        for (Eigen::Index j = 0; j < d; ++j) {
            if (beta[j] != 0.0) out.push_back(beta[j] > 0.0 ? j + 1 : -(j + 1));
        }
        return out;
    };
    std::vector<Eigen::Index> previous;
    // After a failed attempt, wait twice as long before the next one.
    int next_polish = 0;
    int polish_gap = 1;
    for (int sweep = 0; sweep < control.max_iters; ++sweep) {
        double max_change = 0.0;
        for (Eigen::Index j = 0; j < d; ++j) max_change = std::max(max_change, update(j));
        if (control.on_iterate) {
            control.on_iterate(beta);
        }
        if (max_change <= control.tol) {
            r = linear - gram * beta;
            if (kkt_residual(-r, beta, lambda) <= control.tol) {
                return beta;
            }
        }
        // Hand over to the active set once two consecutive sweeps agree on the
        // signed support.
        std::vector<Eigen::Index> current = signed_support();
        if (!current.empty() && current == previous && sweep >= next_polish) {
            const bool solved = active_set();
            r = linear - gram * beta;
            if (control.on_iterate) {
                control.on_iterate(beta);
            }
            if (solved) {
                return beta;
            }
            next_polish = sweep + polish_gap;
            polish_gap *= 2;
            current = signed_support();
        }
        previous = std::move(current);
    }
    throw ConvergenceError("coordinate descent did not converge in " + std::to_string(control.max_iters) +
                               " sweeps",
                           beta);
}

Vector solve_weighted_lasso(const WeightedLassoProblem& p, const VectorRef& init, const SolverControl& control) {
    if (init.size() != p.cols()) {
        throw ArgumentError("lasso: init has wrong dimension");
    }
    if (p.weights().sum() <= 0.0) {
        throw DegenerateProblemError("weighted lasso: all observation weights are zero");
    }
    const double scale = static_cast<double>(p.rows()) * p.sigma() * p.sigma();
    const Matrix& x = p.design();
    const Matrix gram = x.transpose() * (p.weights().asDiagonal() * x) / scale;
    const Vector linear = x.transpose() * p.weights().cwiseProduct(p.response()) / scale;
    return solve_lasso_gram(gram, linear, p.lambda(), init, control);
}

Vector solve_penalized_logistic(const LogisticProblem& p, const VectorRef& init, const SolverControl& control) {
    check_control(control);
    if (init.size() != p.cols()) {
        throw ArgumentError("logistic: init has wrong dimension");
    }
    constexpr double kArmijo = 1e-4;
    const Matrix& z = p.design();
    const Vector& w = p.responses();
    const Vector& wc = p.complements();
    const double lambda = p.lambda();
    const double n = static_cast<double>(p.rows());

    Vector theta = init;
    Vector eta = z * theta;
    double objective = logistic_loss(eta, w, wc) + lambda * theta.lpNorm<1>();
    Vector grad = logistic_grad_from_eta(z, eta, w, wc);
    if (kkt_residual(grad, theta, lambda) <= control.tol) {
        return theta;
    }

    // 1/L with L = ||Z||_F^2 / (4n) >= lambda_max(Z'Z) / (4n).
    const double frob = z.squaredNorm();
    double step = frob > 0.0 ? 4.0 * n / frob : 1.0;

    Vector candidate(theta.size());
    Vector cand_eta(eta.size());
    for (int iter = 0; iter < control.max_iters; ++iter) {
        double cand_objective = 0.0;
        while (true) {
            for (Eigen::Index j = 0; j < theta.size(); ++j) {
                candidate[j] = soft_threshold(theta[j] - step * grad[j], step * lambda);
            }
            const double moved = (candidate - theta).squaredNorm();
            cand_eta.noalias() = z * candidate;
            cand_objective = logistic_loss(cand_eta, w, wc) + lambda * candidate.lpNorm<1>();
            if (cand_objective <= objective - kArmijo / (2.0 * step) * moved) {
                break;
            }
            step *= 0.5;
            if (step < 1e-300) {
                throw ConvergenceError("logistic line search failed", theta);
            }
        }
        Vector cand_grad = logistic_grad_from_eta(z, cand_eta, w, wc);

        const Vector s = candidate - theta;
        const double sy = s.dot(cand_grad - grad);
        const double ss = s.squaredNorm();
        double next_step = (sy > 0.0 && ss > 0.0) ? ss / sy : 2.0 * step;
        step = std::clamp(next_step, 1e-12, 1e12);

        theta = candidate;
        eta = cand_eta;
        grad = std::move(cand_grad);
        objective = cand_objective;
        if (control.on_iterate) {
            control.on_iterate(theta);
        }
        if (kkt_residual(grad, theta, lambda) <= control.tol) {
            return theta;
        }
    }
    throw ConvergenceError("proximal gradient did not converge in " + std::to_string(control.max_iters) +
                               " iterations",
                           theta);
}

// ---------------------------------------------------------------------------
// Cross-validation

std::vector<double> default_lambda_grid(double lambda_max, int size, double ratio) {
    if (size < 1) {
        throw ArgumentError("grid size must be positive");
    }
    if (!(ratio > 0.0 && ratio <= 1.0)) {
        throw ArgumentError("grid ratio must lie in (0, 1]");
    }
    if (!(lambda_max > 0.0)) {
        return {0.0};
    }
    std::vector<double> grid(static_cast<std::size_t>(size));
    const double log_hi = std::log(lambda_max);
    const double log_lo = std::log(lambda_max * ratio);
    for (int k = 0; k < size; ++k) {
        const double frac = size == 1 ? 0.0 : static_cast<double>(k) / (size - 1);
        grid[static_cast<std::size_t>(k)] = std::exp(log_hi + frac * (log_lo - log_hi));
    }
    grid.front() = lambda_max;
    return grid;
}

std::vector<int> fold_assignment(Eigen::Index n, int folds, std::uint64_t seed) {
    if (folds < 2) {
        throw ArgumentError("cross-validation needs at least 2 folds");
    }
    if (n < folds) {
        throw ArgumentError("cross-validation needs at least as many samples as folds (" + std::to_string(n) +
                            " < " + std::to_string(folds) + ")");
    }
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    // Fisher-Yates driven directly by the counter generator so the partition
    // does not depend on the standard library's shuffle.
    CounterRng rng(seed, Stream::folds);
    for (std::size_t i = order.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng.uniform() * static_cast<double>(i));
        std::swap(order[i - 1], order[std::min(j, i - 1)]);
    }
    std::vector<int> assignment(static_cast<std::size_t>(n));
    for (std::size_t pos = 0; pos < order.size(); ++pos) {
        assignment[static_cast<std::size_t>(order[pos])] = static_cast<int>(pos % static_cast<std::size_t>(folds));
    }
    return assignment;
}

double cross_validate_lambda(const WeightedLassoProblem& family, const CvOptions& options) {
    const Eigen::Index n = family.rows();
    const auto members = fold_members(n, options);
    const auto grid = descending_grid(options, family.lambda_max());
    if (grid.size() == 1) {
        return grid.front();
    }

    const Matrix& x = family.design();
    const Vector& y = family.response();
    const Vector& w = family.weights();
    const double var = family.sigma() * family.sigma();
    const Eigen::Index d = x.cols();

    struct FoldStats {
        Matrix gram;
        Vector linear;
        double yy = 0.0;
        double size = 0.0;
    };
    std::vector<FoldStats> stats;
    stats.reserve(members.size());
    Matrix gram_total = Matrix::Zero(d, d);
    Vector linear_total = Vector::Zero(d);
    for (const auto& rows : members) {
        const Matrix xk = select_rows(x, rows);
        const Vector wk = select_entries(w, rows);
        const Vector yk = select_entries(y, rows);
        FoldStats fs;
        fs.gram = xk.transpose() * (wk.asDiagonal() * xk);
        fs.linear = xk.transpose() * wk.cwiseProduct(yk);
        fs.yy = wk.dot(yk.cwiseAbs2());
        fs.size = static_cast<double>(rows.size());
        gram_total += fs.gram;
        linear_total += fs.linear;
        stats.push_back(std::move(fs));
    }

    std::vector<double> loss(grid.size(), 0.0);
    for (const auto& fs : stats) {
        const double n_train = static_cast<double>(n) - fs.size;
        const double scale = n_train * var;
        const Matrix gram_train = (gram_total - fs.gram) / scale;
        const Vector linear_train = (linear_total - fs.linear) / scale;
        Vector beta = Vector::Zero(d);
        for (std::size_t k = 0; k < grid.size(); ++k) {
            try {
                beta = solve_lasso_gram(gram_train, linear_train, grid[k], beta, options.control);
            } catch (const ConvergenceError& e) {
                beta = e.last_iterate();
            }
            const double sse = fs.yy - 2.0 * beta.dot(fs.linear) + beta.dot(fs.gram * beta);
            loss[k] += std::max(sse, 0.0) / fs.size / static_cast<double>(stats.size());
        }
    }
    return pick_lambda(grid, loss);
}

double cross_validate_lambda(const LogisticProblem& family, const CvOptions& options) {
    const Eigen::Index n = family.rows();
    const auto members = fold_members(n, options);
    const auto grid = descending_grid(options, family.lambda_max());
    if (grid.size() == 1) {
        return grid.front();
    }

    const Matrix& z = family.design();
    const Vector& w = family.responses();
    const Vector& wc = family.complements();
    std::vector<double> loss(grid.size(), 0.0);
    const auto folds = static_cast<Eigen::Index>(members.size());
    for (Eigen::Index k = 0; k < folds; ++k) {
        std::vector<Eigen::Index> train;
        train.reserve(static_cast<std::size_t>(n));
        for (Eigen::Index f = 0; f < folds; ++f) {
            if (f != k) {
                const auto& rows = members[static_cast<std::size_t>(f)];
                train.insert(train.end(), rows.begin(), rows.end());
            }
        }
        std::sort(train.begin(), train.end());
        const auto& held = members[static_cast<std::size_t>(k)];
        auto train_design = std::make_shared<const Matrix>(select_rows(z, train));
        const Vector train_w = select_entries(w, train);
        const Matrix held_z = select_rows(z, held);
        const Vector train_wc = select_entries(wc, train);
        const Vector held_w = select_entries(w, held);
        const Vector held_wc = select_entries(wc, held);

        Vector theta = Vector::Zero(z.cols());
        for (std::size_t g = 0; g < grid.size(); ++g) {
            const LogisticProblem sub(train_design, train_w, train_wc, grid[g]);
            try {
                theta = solve_penalized_logistic(sub, theta, options.control);
            } catch (const ConvergenceError& e) {
                theta = e.last_iterate();
            }
            const Vector eta = held_z * theta;
            loss[g] += logistic_loss(eta, held_w, held_wc) / static_cast<double>(folds);
        }
    }
    return pick_lambda(grid, loss);
}

}  // namespace lhb
