#include "fab/gmrf.hpp"
#include "fab/linking.hpp"
#include "fab/rng.hpp"

#include <benchmark/benchmark.h>

namespace {

using fab::Vector;

Vector noisy_chain(int p, std::uint64_t seed) {
    const fab::CounterRng rng(seed);
    Vector y(p);
    double level = 0.0;
    for (int i = 0; i < p; ++i) {
        if (rng.uniform(3 * i) < 0.02) level = rng.normal(3 * i + 1);
        y(i) = level + rng.normal(3 * i + 2);
    }
    return y;
}

void BM_CarMarginalLoglik(benchmark::State& state) {
    const int p = static_cast<int>(state.range(0));
    const Vector y = noisy_chain(p, 11);
    const Vector sigma2 = Vector::Ones(p);
    const std::vector<bool> observed(p, true);
    for (auto _ : state) {
        benchmark::DoNotOptimize(
            fab::car_marginal_loglik({0.1, 0.4, 0.5}, y, sigma2, observed));
    }
    state.SetComplexityN(p);
}
BENCHMARK(BM_CarMarginalLoglik)->RangeMultiplier(4)->Range(256, 16384)->Complexity();

void BM_CarFitShared(benchmark::State& state) {
    const int p = static_cast<int>(state.range(0));
    const Vector y = noisy_chain(p, 12);
    const Vector sigma2 = Vector::Ones(p);
    const fab::Basis basis = fab::identity_basis(p);
    for (auto _ : state) {
        benchmark::DoNotOptimize(fab::fit_marginal_ml(fab::LinkingFamily::car_path(), y, basis,
                                                      fab::DiagonalKnown{sigma2}));
    }
}
BENCHMARK(BM_CarFitShared)->Arg(1000);

void BM_CarConditionalMoments(benchmark::State& state) {
    const int p = 1000;
    const Vector y = noisy_chain(p, 13);
    const Vector sigma2 = Vector::Ones(p);
    int j = 0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(
            fab::car_conditional_moments({0.0, 0.45, 0.3}, y, sigma2, j));
        j = (j + 1) % p;
    }
}
BENCHMARK(BM_CarConditionalMoments);

void BM_SpikeSlabEm(benchmark::State& state) {
    const int k = static_cast<int>(state.range(0));
    const fab::CounterRng rng(14);
    Vector theta(k), scales(k);
    for (int i = 0; i < k; ++i) {
        theta(i) = (i % 2 == 0 ? 3.0 : 0.0) + rng.normal(i);
        scales(i) = 1.0;
    }
    for (auto _ : state) {
        benchmark::DoNotOptimize(fab::fit_spike_slab(theta, scales));
    }
}
BENCHMARK(BM_SpikeSlabEm)->Arg(29)->Arg(200);

void BM_ExchangeableFit(benchmark::State& state) {
    const int p = static_cast<int>(state.range(0));
    const fab::CounterRng rng(15);
    Vector y(p);
    for (int i = 0; i < p; ++i) y(i) = 1.0 + rng.normal(i);
    const fab::Basis basis = fab::delete_column_basis(p, 0);
    const Vector sigma2 = Vector::Constant(p, 0.5);
    const Vector x = basis.project(y);
    for (auto _ : state) {
        benchmark::DoNotOptimize(fab::fit_marginal_ml(fab::LinkingFamily::exchangeable(), x,
                                                      basis, fab::DiagonalKnown{sigma2}));
    }
}
BENCHMARK(BM_ExchangeableFit)->Arg(500);

} // namespace
