#include "fab/pipelines.hpp"
#include "fab/rng.hpp"
#include "fab/studies.hpp"

#include <benchmark/benchmark.h>

namespace {

using fab::Vector;

void BM_MeansZSharedCar(benchmark::State& state) {
    const int p = static_cast<int>(state.range(0));
    const fab::CounterRng rng(21);
    Vector y(p);
    for (int i = 0; i < p; ++i) y(i) = (i % 100 < 30 ? 1.0 : 0.0) + rng.normal(i);
    const Vector var = Vector::Ones(p);
    const Vector nulls = Vector::Zero(p);
    const fab::LinkingChoice car{fab::FitFamily{fab::LinkingFamily::car_path()}};
    for (auto _ : state) {
        benchmark::DoNotOptimize(
            fab::fab_means_z(y, fab::DiagonalKnown{var}, car, fab::Mode::shared(), nulls, 1));
    }
}
BENCHMARK(BM_MeansZSharedCar)->Arg(1000)->Unit(benchmark::kMillisecond);

void BM_MeansZExactExchangeable(benchmark::State& state) {
    const int p = static_cast<int>(state.range(0));
    const fab::CounterRng rng(22);
    Vector y(p);
    for (int i = 0; i < p; ++i) y(i) = 0.7 + 1.2 * rng.normal(i);
    const Vector var = Vector::Ones(p);
    const Vector nulls = Vector::Zero(p);
    const fab::LinkingChoice exch{fab::FitFamily{fab::LinkingFamily::exchangeable()}};
    for (auto _ : state) {
        benchmark::DoNotOptimize(
            fab::fab_means_z(y, fab::DiagonalKnown{var}, exch, fab::Mode::exact(), nulls, 1));
    }
}
BENCHMARK(BM_MeansZExactExchangeable)->Arg(200)->Unit(benchmark::kMillisecond);

void BM_HmmDatasetShared(benchmark::State& state) {
    fab::HmmStudyConfig cfg;
    cfg.hmm = fab::HmmSpec::defaults(1000);
    cfg.datasets = 1;
    cfg.run_exact = false;
    cfg.threads = 1;
    for (auto _ : state) {
        benchmark::DoNotOptimize(fab::run_hmm_study(cfg));
    }
}
BENCHMARK(BM_HmmDatasetShared)->Unit(benchmark::kMillisecond);

} // namespace
