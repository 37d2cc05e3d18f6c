#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cghf/rules.hpp"
#include "support/oracles.hpp"

using namespace cghf;

namespace {

const std::string kRulesDir = std::string(CGHF_SOURCE_DIR) + "/rules/";

RuleSet parse_ok(std::string_view text) {
    auto r = parse_rules(text);
    if (!r.ok()) {
        for (const auto& e : r.errors) MESSAGE(e.message());
    }
    REQUIRE(r.ok());
    return *r.ruleset;
}

ContextModel shipped_model() { return ContextModel::from(*parse_rules_file(kRulesDir + "model.rules").ruleset); }

const char* kOverload = R"(
entity AccessPoint {
    attr density_above_90: bool dynamic
    attr connected_gw: ref static
    attr density: number unit "ratio" dynamic
}

rule overload_risk priority 5 ttl 30s {
    when fact($ap, "density_above_90", true)
     and fact($ap, "connected_gw", $g)
    then publish context "context/overload_risk/$g" { ap: $ap }
}
)";

}  // namespace

TEST_CASE("empty input") {
    auto rs = parse_ok("");
    CHECK(rs.empty());
    CHECK(parse_ok("  # only a comment\n\n").empty());
    CHECK(pretty_print(RuleSet{}).find_first_not_of(" \n\t") == std::string::npos);
}

TEST_CASE("shipped congestion file has one rule and two fact definitions") {
    auto r = parse_rules_file(kRulesDir + "congestion.rules");
    REQUIRE(r.ok());
    CHECK(r.ruleset->rules.size() == 1);
    CHECK(r.ruleset->factdefs.size() == 2);
    const auto& rule = r.ruleset->rules[0];
    CHECK(rule.name == "congestion");
    CHECK(rule.priority == 10);
    CHECK(rule.ttl == 300'000);
    CHECK(r.ruleset->factdefs[0].window == 60'000);
}

TEST_CASE("shipped rule files validate against the shipped model") {
    auto model = shipped_model();
    for (const char* f : {"congestion.rules", "anchor.rules", "service_point.rules", "multi_access.rules"}) {
        INFO(f);
        auto r = parse_rules_file(kRulesDir + f);
        REQUIRE(r.ok());
        auto errors = validate(*r.ruleset, model);
        for (const auto& e : errors) MESSAGE(e.message);
        CHECK(errors.empty());
    }
}

TEST_CASE("unreadable file") {
    try {
        parse_rules_file(kRulesDir + "does-not-exist.rules");
        FAIL("expected RuleLoadError");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::RuleLoadError);
    }
}

TEST_CASE("structure of a parsed rule") {
    auto rs = parse_ok(kOverload);
    REQUIRE(rs.entities.size() == 1);
    CHECK(rs.entities[0].attributes.size() == 3);
    CHECK(rs.entities[0].attributes[1].type == ValueType::Ref);
    CHECK(rs.entities[0].attributes[1].is_static);
    CHECK(rs.entities[0].attributes[2].unit == std::optional<std::string>("ratio"));
    REQUIRE(rs.rules.size() == 1);
    const Rule& r = rs.rules[0];
    CHECK(r.ttl == 30'000);
    REQUIRE(r.event.size() == 2);
    CHECK(r.event[0].subject == Term::variable("ap"));
    CHECK(r.event[0].value == Term::of(true));
    CHECK(r.event[1].attribute == "connected_gw");
    REQUIRE(r.actions.size() == 1);
    const auto& pub = std::get<PublishAction>(r.actions[0]);
    CHECK(pub.topic == "context/overload_risk/$g");
    REQUIRE(pub.fields.size() == 1);
    CHECK(pub.fields[0].value == Expr::var("ap"));
    CHECK(validate(rs, ContextModel::from(rs)).empty());
}

TEST_CASE("durations") {
    CHECK(format_duration(500) == "500ms");
    CHECK(format_duration(30'000) == "30s");
    CHECK(format_duration(120'000) == "2min");
    CHECK(format_duration(90'000) == "90s");
    auto rs = parse_ok("rule r priority 0 ttl 1500ms { when fact($a, \"x\", 1) then publish context \"c/d\" { a: $a } }");
    CHECK(rs.rules[0].ttl == 1500);
}

TEST_CASE("expression precedence and printing") {
    auto rs = parse_ok(R"(rule r priority 0 ttl 1s {
        when fact($a, "x", $v)
        where not $v > 1 + 2 * 3 and $v != 0 or $v == -4
        then publish context "c/r" { a: $a }
    })");
    const Expr& e = *rs.rules[0].condition;
    using Op = Expr::Op;
    CHECK(e.op == Op::Or);
    CHECK(e.args[0].op == Op::And);
    CHECK(e.args[0].args[0].op == Op::Not);
    CHECK(e.args[0].args[0].args[0].op == Op::Gt);
    CHECK(e.args[0].args[0].args[0].args[1].op == Op::Add);
    CHECK(e.args[1].args[1] == Expr::lit(-4.0));

    Expr sub = Expr::binary(Op::Sub, Expr::var("a"), Expr::binary(Op::Sub, Expr::var("b"), Expr::var("c")));
    CHECK(pretty_print(sub) == "$a - ($b - $c)");
    CHECK(pretty_print(Expr::unary(Op::Neg, Expr::lit(3.0))) != pretty_print(Expr::lit(-3.0)));
}

TEST_CASE("string literal escapes survive a round trip") {
    RuleSet rs;
    Rule r;
    r.name = "esc";
    r.ttl = 1000;
    r.event.push_back({Term::variable("a"), "x", Term::of(std::string("quote \" and \\ back")), std::nullopt, {}});
    r.actions.push_back(PublishAction{"c/e", {{"a", Expr::var("a")}}, {}});
    rs.rules.push_back(r);
    auto back = parse_ok(pretty_print(rs));
    CHECK(back == rs);
}

TEST_CASE("round trip on shipped files") {
    for (const char* f : {"model.rules", "congestion.rules", "anchor.rules", "service_point.rules", "multi_access.rules"}) {
        INFO(f);
        auto rs = *parse_rules_file(kRulesDir + f).ruleset;
        auto text = pretty_print(rs);
        auto again = parse_ok(text);
        CHECK(again == rs);
        CHECK(pretty_print(again) == text);
    }
}

TEST_CASE("round trip on generated rule sets") {
    oracle::Gen g(2024);
    for (int i = 0; i < 300; ++i) {
        auto rs = g.ruleset();
        auto text = pretty_print(rs);
        auto r = parse_rules(text);
        INFO(text);
        REQUIRE(r.ok());
        CHECK(*r.ruleset == rs);
    }
}

TEST_CASE("parse errors are located and name expected tokens") {
    auto r = parse_rules("rule r priority 1 ttl 1s {\n  when fact($a, \"x\" 1)\n}");
    REQUIRE_FALSE(r.ok());
    REQUIRE_FALSE(r.errors.empty());
    const auto& e = r.errors[0];
    CHECK(e.line == 2);
    CHECK(e.col == 21);
    CHECK(std::find(e.expected.begin(), e.expected.end(), "','") != e.expected.end());
    CHECK(e.message().find("2:21") != std::string::npos);
}

TEST_CASE("unbound variable is reported with its location") {
    const char* text = "entity E { attr x: number dynamic }\n"
                       "rule r priority 1 ttl 1s {\n"
                       "  when fact($a, \"x\", $v)\n"
                       "  where $x > 1\n"
                       "  then publish context \"c/r\" { a: $a }\n"
                       "}\n";
    auto rs = parse_ok(text);
    auto errs = validate(rs, ContextModel::from(rs));
    REQUIRE(errs.size() == 1);
    CHECK(errs[0].kind == ValidationKind::UnboundVariable);
    CHECK(errs[0].subject == "$x");
    CHECK(errs[0].loc.line == 4);
    CHECK(errs[0].loc.col == 9);
    auto lines = lint(text, ContextModel::from(rs));
    REQUIRE(lines.size() == 1);
    CHECK(lines[0].rfind("4:9:", 0) == 0);
}

TEST_CASE("validation errors") {
    auto model = shipped_model();
    auto kinds = [&](const char* text) {
        std::vector<ValidationKind> out;
        for (const auto& e : validate(parse_ok(text), model)) out.push_back(e.kind);
        return out;
    };
    using VK = ValidationKind;
    CHECK(kinds(R"(rule r1 priority 1 ttl 1s { when fact($a, "densty", true) then publish context "c/x" { a: $a } })") ==
          std::vector<VK>{VK::UndeclaredAttribute});
    CHECK(kinds(R"(rule r1 priority 1 ttl 1s { when fact($a, "dense", true) then publish context "c/x" { a: $a } }
                   rule r1 priority 2 ttl 1s { when fact($a, "dense", true) then publish context "c/y" { a: $a } })") ==
          std::vector<VK>{VK::DuplicateRuleName});
    CHECK(kinds(R"(rule r1 priority 1 ttl 1s { when fact($a, "dense", true) then publish context "c/#/x" { a: $a } })") ==
          std::vector<VK>{VK::MalformedTopic});
    CHECK(kinds(R"(factdef d { stream "raw/cell/{c}/load" aggregate mean window 1s when $value > 1 emit fact($c, "region", "Y") ttl 1s })") ==
          std::vector<VK>{VK::StaticAttributeWrite});
    CHECK(kinds(R"(factdef d { stream "raw/cell/{c}/load" aggregate mean window 1s when $value > 1 emit fact($q, "dense", true) ttl 1s })") ==
          std::vector<VK>{VK::UnboundVariable});
    CHECK(kinds(R"(factdef d { stream "raw/cell/{c}/load" aggregate mean window 1s when $value > 1 emit fact($c, "dense", true) ttl 1s }
                   factdef d { stream "raw/cell/{c}/load" aggregate mean window 1s when $value > 1 emit fact($c, "dense", true) ttl 1s })") ==
          std::vector<VK>{VK::DuplicateFactDef});
    CHECK(kinds(R"(rule r1 priority 1 ttl 0ms { when fact($a, "dense", true) then publish context "c/x" { a: $a } })") ==
          std::vector<VK>{VK::InvalidDuration});
}

TEST_CASE("every invalid fixture yields a located error") {
    auto model = shipped_model();
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(std::string(CGHF_SOURCE_DIR) + "/tests/fixtures/invalid"))
        files.push_back(e.path());
    std::sort(files.begin(), files.end());
    REQUIRE(files.size() >= 16);
    for (const auto& path : files) {
        INFO(path.filename().string());
        std::ifstream in(path);
        std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        auto lines = lint(text, model);
        REQUIRE_FALSE(lines.empty());
        auto r = parse_rules(text);
        std::vector<std::pair<int, int>> locs;
        if (!r.ok()) {
            for (const auto& e : r.errors) locs.emplace_back(e.line, e.col);
        } else {
            auto errors = validate(*r.ruleset, model);
            REQUIRE_FALSE(errors.empty());
            for (const auto& e : errors) locs.emplace_back(e.loc.line, e.loc.col);
        }
        const int nlines = static_cast<int>(std::count(text.begin(), text.end(), '\n')) + 1;
        for (auto [line, col] : locs) {
            CHECK(line >= 1);
            CHECK(col >= 1);
            CHECK(line <= nlines);
        }
    }
}
