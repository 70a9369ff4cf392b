#include "fab/pvalue.hpp"
#include "fab/rng.hpp"
#include "fab/student_t.hpp"

#include <benchmark/benchmark.h>

namespace {

void BM_FabPNormal(benchmark::State& state) {
    const fab::CounterRng rng(1);
    std::uint64_t i = 0;
    for (auto _ : state) {
        const double z = 6.0 * (rng.uniform(i++) - 0.5);
        benchmark::DoNotOptimize(fab::fab_p_normal(z, 1.3));
    }
}
BENCHMARK(BM_FabPNormal);

void BM_FabPStudentT(benchmark::State& state) {
    const fab::CounterRng rng(2);
    std::uint64_t i = 0;
    for (auto _ : state) {
        const double t = 6.0 * (rng.uniform(i++) - 0.5);
        benchmark::DoNotOptimize(fab::fab_p_student_t(t, 1.3, static_cast<double>(state.range(0))));
    }
}
BENCHMARK(BM_FabPStudentT)->Arg(5)->Arg(50);

void BM_FabThreshold(benchmark::State& state) {
    for (auto _ : state) {
        benchmark::DoNotOptimize(fab::fab_threshold({1.0, 0.5, 2.0}, 0.05));
    }
}
BENCHMARK(BM_FabThreshold);

void BM_AltPdf(benchmark::State& state) {
    const fab::CounterRng rng(3);
    std::uint64_t i = 0;
    for (auto _ : state) {
        const double u = 0.98 * rng.uniform(i++) + 0.01;
        benchmark::DoNotOptimize(fab::alt_pdf(u, 1.0, 0.5));
    }
}
BENCHMARK(BM_AltPdf);

} // namespace
