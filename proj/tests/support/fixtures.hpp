#pragma once

// Small helpers shared by the unit and acceptance tests.

#include "lhb/environment.hpp"
#include "lhb/model.hpp"
#include "lhb/rng.hpp"

#include <random>
#include <vector>

namespace lhb::test {

inline Vector gaussian_vector(CounterRng& rng, Eigen::Index n, double sd = 1.0) {
    std::normal_distribution<double> normal(0.0, sd);
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = normal(rng);
    return v;
}

inline Matrix gaussian_matrix(CounterRng& rng, Eigen::Index rows, Eigen::Index cols, double sd = 1.0) {
    std::normal_distribution<double> normal(0.0, sd);
    Matrix m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j) {
        for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = normal(rng);
    }
    return m;
}

// n rounds from `env` with arms chosen round-robin, logged as interactions.
inline std::vector<Interaction> logged_rounds(const Environment& env, std::size_t n, std::uint64_t first = 0) {
    std::vector<Interaction> data;
    data.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        Round r = env.sample_round(first + i);
        const std::size_t a = i % env.num_arms();
        const double y = r.rewards[static_cast<Eigen::Index>(a)];
        data.emplace_back(std::move(r.context), a, y, r.group);
    }
    return data;
}

// The two-arm context of the lower-bound construction with first coordinate
// offset u: arm a (1-based) carries u + (x_bar / 2)(3 - 2a).
inline Context lower_bound_context(double u, double x_bar = 1.0) {
    Vector x1(1), x2(1);
    x1 << u + x_bar / 2.0;
    x2 << u - x_bar / 2.0;
    return Context(Vector::Zero(1), {x1, x2});
}

inline ModelParams lower_bound_params(double L_bar, const Vector& theta) {
    Vector b1(1), b2(1);
    b1 << L_bar;
    b2 << -L_bar;
    return ModelParams(theta, b1, b2, 1.0);
}

}  // namespace lhb::test
