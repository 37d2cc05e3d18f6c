#include <doctest.h>

#include <algorithm>
#include <thread>

#include "cghf/facts.hpp"
#include "support/oracles.hpp"

using namespace cghf;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("no error thrown");
    return ErrorCode::BadRequest;
}

std::vector<Sample> samples(const std::string& stream, const std::vector<std::pair<Millis, double>>& tv) {
    std::vector<Sample> out;
    for (const auto& [t, v] : tv) out.push_back({stream, t, v, ""});
    return out;
}

FactDefinition density_def() {
    FactDefinition d;
    d.name = "ap_density";
    d.stream = "raw/ap/AP1/density";
    d.fn = AggregateFn::Mean;
    d.window = 60'000;
    ClassifierEntry c;
    c.predicate = Expr::binary(Expr::Op::Gt, Expr::var("value"), Expr::lit(0.9));
    c.subject = Term::of(std::string("AP1"));
    c.attribute = "density_above_90";
    c.value = Expr::lit(true);
    d.classifier.push_back(c);
    d.ttl = 60'000;
    return d;
}

void fill(Storage& s, const std::string& stream, Millis from, Millis to, Millis step, double v) {
    for (Millis t = from; t < to; t += step) s.ingest({stream, t, v, ""});
}

}  // namespace

TEST_CASE("ingest and query") {
    Storage s;
    s.ingest({"s1", 100, 5.0, "ms"});
    auto q = s.query("s1", 0, 200);
    REQUIRE(q.size() == 1);
    CHECK(q[0].value == 5.0);
    CHECK(code_of([&] { s.ingest({"s1", 99, 1.0, ""}); }) == ErrorCode::TimestampRegression);
    CHECK_NOTHROW(s.ingest({"s1", 100, 6.0, ""}));
    CHECK(code_of([&] { s.query("nope", 0, 1); }) == ErrorCode::UnknownStream);
}

TEST_CASE("half-open ranges") {
    Storage s;
    for (Millis t = 1; t <= 3; ++t) s.ingest({"s", t, static_cast<double>(t), ""});
    auto q = s.query("s", 1, 3);
    REQUIRE(q.size() == 2);
    CHECK(q[0].timestamp == 1);
    CHECK(q[1].timestamp == 2);
    CHECK(s.query("s", 5, 5).empty());
}

TEST_CASE("retention eviction boundary") {
    Storage s(60'000);
    s.ingest({"s", 0, 1, ""});
    s.ingest({"s", 70'000, 2, ""});
    auto q = s.query("s", 0, 70'001);
    REQUIRE(q.size() == 1);
    CHECK(q[0].timestamp == 70'000);
}

TEST_CASE("randomized query equals filter oracle") {
    oracle::Gen g(11);
    Storage s(1'000'000);
    std::vector<Sample> log;
    std::map<std::string, Millis> clock;
    for (int i = 0; i < 2000; ++i) {
        std::string stream = "s" + std::to_string(g.uniform(0, 3));
        Millis t = clock[stream] += g.uniform(0, 20);
        Sample x{stream, t, g.real(-5, 5), ""};
        s.ingest(x);
        log.push_back(x);
    }
    for (int i = 0; i < 200; ++i) {
        std::string stream = "s" + std::to_string(g.uniform(0, 3));
        Millis a = g.uniform(0, 12000), b = a + g.uniform(0, 3000);
        std::vector<Sample> expect;
        for (const auto& x : log)
            if (x.stream_id == stream && x.timestamp >= a && x.timestamp < b) expect.push_back(x);
        auto got = s.query(stream, a, b);
        REQUIRE(got.size() == expect.size());
        for (std::size_t k = 0; k < got.size(); ++k) {
            CHECK(got[k].timestamp == expect[k].timestamp);
            CHECK(got[k].value == expect[k].value);
        }
    }
}

TEST_CASE("aggregate closed forms") {
    auto c = samples("s", {{0, 5}, {100, 5}, {200, 5}});
    CHECK(aggregate_samples(c, AggregateFn::Mean, 300, 300) == 5.0);
    CHECK(aggregate_samples(c, AggregateFn::RateOfChange, 300, 300) == 0.0);

    auto line = samples("s", {{0, 0}, {10, 10}, {20, 20}});
    CHECK(aggregate_samples(line, AggregateFn::TrendSlope, 30, 30) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(aggregate_samples(line, AggregateFn::Forecast, 30, 30, 10) == doctest::Approx(30.0).epsilon(1e-12));
}

TEST_CASE("jitter rises twenty percent over thirty minutes") {
    const Millis window = 30 * 60'000, now = window;
    std::vector<Sample> in;
    for (Millis t = 0; t < now; t += 60'000) in.push_back({"raw/gw/Z/jitter", t, t < now / 2 ? 10.0 : 12.0, "ms"});
    double r = aggregate_samples(in, AggregateFn::RateOfChange, window, now);
    CHECK(std::fabs(r - 0.20) <= 1e-12);
}

TEST_CASE("aggregate errors") {
    CHECK(code_of([] { aggregate_samples({}, AggregateFn::Mean, 10, 10); }) == ErrorCode::InsufficientSamples);
    auto one = samples("s", {{5, 1}});
    CHECK(code_of([&] { aggregate_samples(one, AggregateFn::RateOfChange, 10, 10); }) == ErrorCode::InsufficientSamples);
    CHECK(code_of([&] { aggregate_samples(one, AggregateFn::Forecast, 10, 10); }) == ErrorCode::InsufficientSamples);
    auto zero = samples("s", {{0, 0}, {8, 3}});
    CHECK(code_of([&] { aggregate_samples(zero, AggregateFn::RateOfChange, 10, 10); }) == ErrorCode::DivisionByZero);
}

TEST_CASE("aggregates match extended-precision recomputation") {
    oracle::Gen g(3);
    for (int i = 0; i < 300; ++i) {
        const Millis now = 100'000, window = g.uniform(2, 60) * 1000;
        oracle::Series series;
        std::vector<Sample> in;
        Millis t = now - window;
        while (true) {
            t += g.uniform(1, 2000);
            if (t >= now) break;
            double v = g.real(0.5, 100);
            series.emplace_back(t, v);
            in.push_back({"s", t, v, ""});
        }
        if (series.empty()) continue;
        CHECK(oracle::close_rel(aggregate_samples(in, AggregateFn::Mean, window, now), oracle::mean(series), 1e-9));
        CHECK(oracle::close_rel(aggregate_samples(in, AggregateFn::TrendSlope, window, now), oracle::ols_slope(series), 1e-9));
    }
}

TEST_CASE("storage aggregate uses exactly the window") {
    Storage s;
    s.ingest({"s", 0, 100, ""});
    s.ingest({"s", 40, 1, ""});
    s.ingest({"s", 99, 3, ""});
    s.ingest({"s", 100, 1000, ""});
    CHECK(s.aggregate("s", AggregateFn::Mean, 60, 100) == 2.0);
    auto v = s.view();
    CHECK(v.aggregate("s", AggregateFn::Mean, 60, 100) == 2.0);
    CHECK(v.streams() == std::vector<std::string>{"s"});
}

TEST_CASE("stream pattern captures") {
    auto b = match_stream("raw/cell/{cell}/load", "raw/cell/Y1/load");
    REQUIRE(b);
    CHECK(std::get<std::string>(b->at("cell")) == "Y1");
    CHECK_FALSE(match_stream("raw/cell/{cell}/load", "raw/cell/Y1/density"));
    CHECK_FALSE(match_stream("raw/cell/{cell}/load", "raw/cell/Y1/load/x"));
    CHECK(match_stream("raw/t", "raw/t"));
}

TEST_CASE("pipeline emits the density fact") {
    Storage s;
    fill(s, "raw/ap/AP1/density", 0, 60'000, 1000, 0.95);
    EmissionLedger ledger;
    std::vector<PipelineDiagnostic> diag;
    auto facts = run_fact_pipeline(s.view(), {density_def()}, 60'000, ledger, &diag);
    REQUIRE(facts.size() == 1);
    const Fact& f = facts[0];
    CHECK(f.subject == "AP1");
    CHECK(f.attribute == "density_above_90");
    CHECK(f.value == Value{true});
    CHECK(f.asserted_at == 60'000);
    CHECK(f.ttl == 60'000);
    REQUIRE(f.provenance.size() == 1);
    CHECK(f.provenance[0] == "raw/ap/AP1/density[0,60000)");
    CHECK(f.fact_id == "ap_density/raw/ap/AP1/density@60000");

    json j = to_json(f);
    for (const char* k : {"fact_id", "subject", "attribute", "value", "asserted_at", "ttl_ms", "provenance"}) CHECK(j.contains(k));
    CHECK(fact_from_json(j).fact_id == f.fact_id);
}

TEST_CASE("pipeline emits nothing below the threshold or without data") {
    Storage s;
    fill(s, "raw/ap/AP1/density", 0, 60'000, 1000, 0.5);
    EmissionLedger ledger;
    std::vector<PipelineDiagnostic> diag;
    CHECK(run_fact_pipeline(s.view(), {density_def()}, 60'000, ledger, &diag).empty());
    CHECK_FALSE(diag.empty());

    Storage empty;
    diag.clear();
    CHECK(run_fact_pipeline(empty.view(), {density_def()}, 60'000, ledger, &diag).empty());
}

TEST_CASE("re-emit suppression") {
    Storage s;
    fill(s, "raw/ap/AP1/density", 0, 80'000, 1000, 0.95);
    auto def = density_def();
    def.reemit = 30'000;
    EmissionLedger ledger;
    CHECK(run_fact_pipeline(s.view(), {def}, 60'000, ledger).size() == 1);
    CHECK(run_fact_pipeline(s.view(), {def}, 70'000, ledger).empty());
    CHECK(run_fact_pipeline(s.view(), {def}, 90'000, ledger).size() == 1);
}

TEST_CASE("first matching classifier entry wins and captures bind") {
    FactDefinition d;
    d.name = "load";
    d.stream = "raw/cell/{cell}/load";
    d.fn = AggregateFn::Mean;
    d.window = 10'000;
    d.ttl = 10'000;
    ClassifierEntry hi, mid;
    hi.predicate = Expr::binary(Expr::Op::Gt, Expr::var("value"), Expr::lit(0.9));
    hi.subject = Term::variable("cell");
    hi.attribute = "level";
    hi.value = Expr::lit(std::string("high"));
    mid.predicate = Expr::binary(Expr::Op::Gt, Expr::var("value"), Expr::lit(0.5));
    mid.subject = Term::variable("cell");
    mid.attribute = "level";
    mid.value = Expr::binary(Expr::Op::Mul, Expr::var("value"), Expr::lit(100.0));
    d.classifier = {hi, mid};

    Storage s;
    fill(s, "raw/cell/A/load", 0, 10'000, 1000, 0.95);
    fill(s, "raw/cell/B/load", 0, 10'000, 1000, 0.75);
    fill(s, "raw/cell/C/load", 0, 10'000, 1000, 0.25);
    EmissionLedger ledger;
    auto facts = run_fact_pipeline(s.view(), {d}, 10'000, ledger);
    std::sort(facts.begin(), facts.end(), [](const Fact& a, const Fact& b) { return a.subject < b.subject; });
    REQUIRE(facts.size() == 2);
    CHECK(facts[0].subject == "A");
    CHECK(facts[0].value == Value{std::string("high")});
    CHECK(facts[1].subject == "B");
    CHECK(std::get<double>(facts[1].value) == doctest::Approx(75.0));
}

TEST_CASE("pipeline is a pure function of its inputs") {
    Storage s;
    oracle::Gen g(5);
    for (Millis t = 0; t < 60'000; t += 500) s.ingest({"raw/ap/AP1/density", t, g.real(0.85, 1.0), ""});
    EmissionLedger l1, l2;
    auto a = run_fact_pipeline(s.view(), {density_def()}, 60'000, l1);
    auto b = run_fact_pipeline(s.view(), {density_def()}, 60'000, l2);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(to_json(a[i]) == to_json(b[i]));
    CHECK(l1 == l2);
}

TEST_CASE("FactPipeline wrapper") {
    Storage s;
    FactPipeline p(s);
    p.add_definition(density_def());
    CHECK(p.has_definition("ap_density"));
    fill(s, "raw/ap/AP1/density", 0, 60'000, 1000, 0.95);
    CHECK(p.run(60'000).size() == 1);
    CHECK(p.remove_definition("ap_density"));
    CHECK_FALSE(p.remove_definition("ap_density"));
    CHECK(p.run(200'000).empty());
}

TEST_CASE("concurrent ingest on distinct streams") {
    Storage s;
    std::vector<std::thread> ts;
    for (int k = 0; k < 4; ++k)
        ts.emplace_back([&, k] {
            for (Millis t = 0; t < 5000; ++t) s.ingest({"s" + std::to_string(k), t, 1.0, ""});
        });
    for (auto& t : ts) t.join();
    for (int k = 0; k < 4; ++k) CHECK(s.query("s" + std::to_string(k), 0, 5000).size() == 5000);
}
