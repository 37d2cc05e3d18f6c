#include <doctest.h>

#include "cghf/node.hpp"

using namespace cghf;

namespace {

const char* kModel = R"(
entity AccessPoint {
    attr density_above_90: bool dynamic
    attr connected_gw: ref static
}
)";

const char* kRules = R"(
factdef ap_density {
    stream "raw/ap/{ap}/density"
    aggregate mean window 10s
    when $value > 0.9 emit fact($ap, "density_above_90", true)
    ttl 10s
}

rule overload_risk priority 5 ttl 30s {
    when fact($ap, "density_above_90", true)
     and fact($ap, "connected_gw", $g)
    then publish context "context/overload_risk/$g" { ap: $ap }
}
)";

RuleSet parse(const char* text) {
    auto r = parse_rules(text);
    REQUIRE(r.ok());
    return *r.ruleset;
}

void push(Bus& bus, const std::string& topic, std::uint64_t seq, Millis t, double v) {
    Envelope e;
    e.topic = topic;
    e.source = "access-nf";
    e.seq = seq;
    e.timestamp = t;
    e.payload = {{"value", v}, {"unit", "ratio"}};
    bus.publish(std::move(e));
}

Fact static_fact(std::string subject, std::string attribute, Value v) {
    Fact f;
    f.fact_id = "topology/" + subject + "/" + attribute + "@0";
    f.subject = std::move(subject);
    f.attribute = std::move(attribute);
    f.value = std::move(v);
    f.ttl = kForever;
    f.provenance = {"topology"};
    return f;
}

}  // namespace

TEST_CASE("raw information becomes facts and then contexts") {
    Bus bus("mcn");
    Node node(bus, ContextModel::from(parse(kModel)));
    REQUIRE(node.install(parse(kRules)).empty());
    auto facts_sub = bus.subscribe("facts/#", "observer");
    auto ctx_sub = bus.subscribe("context/#", "nf");

    node.assert_fact(static_fact("AP1", "connected_gw", std::string("Z")));
    CHECK(bus.poll(facts_sub, 10, 0).size() == 1);

    for (int i = 0; i < 10; ++i) push(bus, "raw/ap/AP1/density", i + 1, i * 1000, 0.95);
    auto report = node.tick(10'000);
    CHECK(report.ingested == 10);
    REQUIRE(report.facts.size() == 1);
    CHECK(report.facts[0].attribute == "density_above_90");
    REQUIRE(report.cycle.contexts.size() == 1);
    CHECK(report.cycle.contexts[0].matched_facts ==
          std::vector<std::string>{"ap_density/raw/ap/AP1/density@10000", "topology/AP1/connected_gw@0"});

    auto published = bus.poll(facts_sub, 10, 10'000);
    REQUIRE(published.size() == 1);
    CHECK(published[0].topic == "facts/AP1/density_above_90");
    CHECK(fact_from_json(published[0].payload).fact_id == report.facts[0].fact_id);

    auto ctx = bus.poll(ctx_sub, 10, 10'000);
    REQUIRE(ctx.size() == 1);
    CHECK(ctx[0].topic == "context/overload_risk/Z");
    CHECK(ctx[0].source == "cghf");
}

TEST_CASE("ingest only fills history") {
    Bus bus("mcn");
    Node node(bus, ContextModel::from(parse(kModel)));
    REQUIRE(node.install(parse(kRules)).empty());
    for (int i = 0; i < 10; ++i) push(bus, "raw/ap/AP1/density", i + 1, i * 1000, 0.95);
    auto r = node.ingest(10'000);
    CHECK(r.ingested == 10);
    CHECK(r.facts.empty());
    CHECK(node.kb().size() == 0);
    CHECK(node.storage().query("raw/ap/AP1/density", 0, 10'000).size() == 10);
}

TEST_CASE("non-numeric raw payloads are reported, not ingested") {
    Bus bus("mcn");
    Node node(bus, ContextModel::from(parse(kModel)));
    Envelope e;
    e.topic = "raw/ap/AP1/density";
    e.source = "x";
    e.seq = 1;
    e.payload = {{"value", "high"}};
    bus.publish(e);
    auto r = node.tick(1000);
    CHECK(r.ingested == 0);
    CHECK(r.diagnostics.size() == 1);
}

TEST_CASE("install validates and refuses clashes") {
    Bus bus("mcn");
    Node node(bus, ContextModel::from(parse(kModel)));
    REQUIRE(node.install(parse(kRules)).empty());

    auto again = node.install(parse(kRules));
    CHECK(again.size() == 2);

    auto bad = node.install(parse(R"(rule r priority 1 ttl 1s { when fact($a, "densty", true) then publish context "c/x" { a: $a } })"));
    REQUIRE(bad.size() == 1);
    CHECK(bad[0].kind == ValidationKind::UndeclaredAttribute);
    CHECK(node.kb().find_rule("r") == nullptr);

    try {
        node.install_or_throw(parse(kRules));
        FAIL("expected RuleLoadError");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::RuleLoadError);
    }

    node.uninstall({"overload_risk"}, {"ap_density"});
    CHECK(node.kb().rules().empty());
    CHECK(node.pipeline().definitions().empty());
    CHECK(node.install(parse(kRules)).empty());
}

TEST_CASE("entities declared alongside rules extend the model") {
    Bus bus("mcn");
    Node node(bus, ContextModel{});
    auto errors = node.install(parse(R"(
        entity App { attr slow: bool dynamic }
        rule app_slow priority 1 ttl 1s { when fact($a, "slow", true) then publish context "context/app/$a" { app: $a } }
    )"));
    CHECK(errors.empty());
    CHECK(node.model().find_attribute("slow") != nullptr);
}

TEST_CASE("cycle budget from options") {
    Bus bus("mcn");
    NodeOptions opt;
    opt.cycle_budget = 5;
    Node node(bus, ContextModel{}, opt);
    REQUIRE(node.install(parse(R"(
        entity C { attr n: number dynamic }
        rule grow priority 1 ttl 1s { when fact($c, "n", $n) then assert fact($c, "n", $n + 1, ttl 5s) }
    )")).empty());
    Fact f = static_fact("c", "n", 0.0);
    f.ttl = 10'000;
    node.assert_fact(f);
    auto r = node.tick(1);
    CHECK(r.cycle.fired.size() == 5);
    CHECK(r.cycle.error == std::optional<ErrorCode>(ErrorCode::CycleBudgetExceeded));
}
