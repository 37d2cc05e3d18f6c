#include <benchmark/benchmark.h>

#include <fstream>
#include <sstream>

#include "cghf/rules.hpp"

using namespace cghf;

static std::string shipped(const char* name) {
    std::ifstream in(std::string(CGHF_SOURCE_DIR) + "/rules/" + name);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

static void BM_Parse(benchmark::State& state) {
    const std::string text = shipped("model.rules") + shipped("congestion.rules") + shipped("anchor.rules") +
                             shipped("service_point.rules") + shipped("multi_access.rules");
    for (auto _ : state) benchmark::DoNotOptimize(parse_rules(text));
    state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(text.size()));
}
BENCHMARK(BM_Parse);

static void BM_PrettyPrint(benchmark::State& state) {
    auto rs = *parse_rules(shipped("multi_access.rules")).ruleset;
    for (auto _ : state) benchmark::DoNotOptimize(pretty_print(rs));
}
BENCHMARK(BM_PrettyPrint);
