#include "lhb/em.hpp"
#include "lhb/environment.hpp"
#include "lhb/initializer.hpp"
#include "lhb/rng.hpp"
#include "lhb/sparse.hpp"

#include <benchmark/benchmark.h>

namespace {

lhb::SyntheticConfig bench_config(int d) {
    lhb::SyntheticConfig c;
    c.d = d;
    c.d_z = 20;
    c.s = 10;
    return c;
}

std::vector<lhb::Interaction> logged(const lhb::SyntheticEnvironment& env, std::size_t n) {
    std::vector<lhb::Interaction> data;
    data.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        lhb::Round r = env.sample_round(i);
        const std::size_t a = i % env.num_arms();
        const double y = r.rewards[static_cast<Eigen::Index>(a)];
        data.emplace_back(std::move(r.context), a, y, r.group);
    }
    return data;
}

void BM_SampleRound(benchmark::State& state) {
    const lhb::SyntheticEnvironment env(bench_config(static_cast<int>(state.range(0))), 1);
    std::uint64_t t = 0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(env.sample_round(t++));
    }
}
BENCHMARK(BM_SampleRound)->Arg(100)->Arg(500);

void BM_WeightedLasso(benchmark::State& state) {
    const auto n = state.range(0);
    const lhb::SyntheticEnvironment env(bench_config(200), 2);
    const auto data = logged(env, static_cast<std::size_t>(n));
    const lhb::Batch b = lhb::make_batch(data);
    const lhb::WeightedLassoProblem p(b.x, b.y, lhb::Vector::Ones(n), 1.0, 0.05);
    for (auto _ : state) {
        benchmark::DoNotOptimize(lhb::solve_weighted_lasso(p, lhb::Vector::Zero(200)));
    }
}
BENCHMARK(BM_WeightedLasso)->Arg(400)->Arg(1600)->Unit(benchmark::kMillisecond);

void BM_PenalizedLogistic(benchmark::State& state) {
    const auto n = state.range(0);
    const lhb::SyntheticEnvironment env(bench_config(50), 3);
    const auto data = logged(env, static_cast<std::size_t>(n));
    const lhb::Batch b = lhb::make_batch(data);
    lhb::Vector labels(n);
    for (Eigen::Index i = 0; i < n; ++i) labels[i] = data[static_cast<std::size_t>(i)].group == lhb::Group::one;
    const lhb::LogisticProblem p(b.z, labels, 0.02);
    for (auto _ : state) {
        benchmark::DoNotOptimize(lhb::solve_penalized_logistic(p, lhb::Vector::Zero(b.z.cols())));
    }
}
BENCHMARK(BM_PenalizedLogistic)->Arg(400)->Arg(1600)->Unit(benchmark::kMillisecond);

void BM_EmFit(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const lhb::SyntheticEnvironment env(bench_config(200), 4);
    const auto data = logged(env, n);
    lhb::EmConfig config;
    config.t_max = 2;
    for (auto _ : state) {
        benchmark::DoNotOptimize(lhb::em_fit(data, env.truth(), config));
    }
}
BENCHMARK(BM_EmFit)->Arg(800)->Unit(benchmark::kMillisecond);

void BM_Initialize(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const lhb::SyntheticEnvironment env(bench_config(200), 5);
    const auto data = logged(env, n);
    for (auto _ : state) {
        benchmark::DoNotOptimize(lhb::initialize(data, {}, 7));
    }
}
BENCHMARK(BM_Initialize)->Arg(400)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
