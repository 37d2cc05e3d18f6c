#include <benchmark/benchmark.h>

#include "cghf/bus.hpp"

using namespace cghf;

static void BM_TopicMatch(benchmark::State& state) {
    auto pattern = TopicPattern::parse("raw/*/*/density/#");
    auto wide = TopicPattern::parse("raw/*/AP7/#");
    auto topic = Topic::parse("raw/ap/AP7/density/now");
    for (auto _ : state) {
        benchmark::DoNotOptimize(wide.matches(topic));
        benchmark::DoNotOptimize(pattern.matches(topic));
    }
}
BENCHMARK(BM_TopicMatch);

static void BM_PublishFanOut(benchmark::State& state) {
    Bus bus("b", BusOptions{1u << 16, 1u << 16});
    std::vector<SubscriptionHandle> subs;
    for (int i = 0; i < state.range(0); ++i) subs.push_back(bus.subscribe(i % 2 ? "raw/#" : "raw/ap/*/density", "s"));
    std::uint64_t seq = 0;
    for (auto _ : state) {
        Envelope e;
        e.topic = "raw/ap/AP1/density";
        e.source = "nf";
        e.seq = ++seq;
        e.payload = {{"value", 0.5}};
        bus.publish(std::move(e));
        if (seq % 1024 == 0)
            for (auto h : subs) bus.poll(h, 1u << 20, 0);
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_PublishFanOut)->Arg(1)->Arg(16)->Arg(128);
