#include <benchmark/benchmark.h>

#include "cghf/facts.hpp"

using namespace cghf;

static void BM_Aggregate(benchmark::State& state) {
    const auto fn = static_cast<AggregateFn>(state.range(1));
    std::vector<Sample> s;
    const Millis window = 60'000;
    for (Millis t = 0; t < window; t += window / state.range(0)) s.push_back({"x", t, 1.0 + 0.001 * static_cast<double>(t), ""});
    for (auto _ : state) benchmark::DoNotOptimize(aggregate_samples(s, fn, window, window, 60'000));
}
BENCHMARK(BM_Aggregate)->ArgsProduct({{60, 600, 6000}, {0, 1, 2, 3}});

static void BM_Ingest(benchmark::State& state) {
    Storage storage(600'000);
    Millis t = 0;
    for (auto _ : state) storage.ingest({"raw/cell/Y1/load", t += 100, 0.5, "ratio"});
}
BENCHMARK(BM_Ingest);
