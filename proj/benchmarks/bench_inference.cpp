#include <benchmark/benchmark.h>

#include <string>

#include "cghf/inference.hpp"
#include "cghf/rules.hpp"

using namespace cghf;

namespace {

const char* kRules = R"(
rule overload_risk priority 5 ttl 30s {
    when fact($ap, "density_above_90", true)
     and fact($ap, "connected_gw", $g)
    then publish context "context/overload_risk/$g" { ap: $ap }
}
)";

Fact make(const std::string& subject, const std::string& attribute, Value v) {
    Fact f;
    f.fact_id = subject + "/" + attribute;
    f.subject = subject;
    f.attribute = attribute;
    f.value = std::move(v);
    f.ttl = kForever;
    return f;
}

}  // namespace

static void BM_RunCycle(benchmark::State& state) {
    auto rs = *parse_rules(kRules).ruleset;
    for (auto _ : state) {
        state.PauseTiming();
        KnowledgeBase kb;
        for (const auto& r : rs.rules) kb.add_rule(r);
        for (int i = 0; i < state.range(0); ++i) {
            const std::string ap = "AP" + std::to_string(i);
            kb.assert_fact(make(ap, "connected_gw", std::string("GW") + std::to_string(i % 4)));
            kb.assert_fact(make(ap, "density_above_90", i % 3 == 0));
        }
        state.ResumeTiming();
        benchmark::DoNotOptimize(run_cycle(kb, nullptr, 1));
    }
}
BENCHMARK(BM_RunCycle)->Arg(10)->Arg(100)->Arg(1000);
