#include "cghf/node.hpp"

#include <limits>

namespace cghf {

Node::Node(Bus& bus, ContextModel model, NodeOptions options)
    : bus_(&bus),
      model_(std::move(model)),
      options_(std::move(options)),
      storage_(options_.retention),
      pipeline_(storage_),
      publisher_(bus, options_.id),
      raw_sub_(bus.subscribe(options_.raw_pattern, options_.id + "/fact-generator")) {}

std::vector<ValidationError> Node::install(const RuleSet& rs) {
    std::lock_guard lk(mu_);
    ContextModel merged = model_;
    for (const auto& e : rs.entities) merged.add(e);
    auto errors = validate(rs, merged);
    for (const auto& r : rs.rules) {
        if (kb_.find_rule(r.name))
            errors.push_back({ValidationKind::DuplicateRuleName, r.loc, r.name, "rule '" + r.name + "' is already installed"});
    }
    for (const auto& d : rs.factdefs) {
        if (pipeline_.has_definition(d.name))
            errors.push_back(
                {ValidationKind::DuplicateFactDef, d.loc, d.name, "fact definition '" + d.name + "' is already installed"});
    }
    if (!errors.empty()) return errors;
    for (const auto& e : rs.entities) model_.add(e);
    for (const auto& d : rs.factdefs) pipeline_.add_definition(d);
    for (const auto& r : rs.rules) kb_.add_rule(r);
    return {};
}

void Node::install_or_throw(const RuleSet& rs) {
    auto errors = install(rs);
    if (errors.empty()) return;
    std::string detail;
    for (const auto& e : errors) {
        if (!detail.empty()) detail += "; ";
        detail += std::to_string(e.loc.line) + ":" + std::to_string(e.loc.col) + ": " + e.message;
    }
    throw Error(ErrorCode::RuleLoadError, detail);
}

void Node::uninstall(const std::vector<std::string>& rule_names, const std::vector<std::string>& factdef_names) {
    std::lock_guard lk(mu_);
    for (const auto& r : rule_names) kb_.remove_rule(r);
    for (const auto& d : factdef_names) pipeline_.remove_definition(d);
}

void Node::publish_fact(const Fact& f, std::vector<std::string>& diagnostics) {
    if (!Topic::valid_segment(f.subject) || !Topic::valid_segment(f.attribute)) {
        diagnostics.push_back("fact " + f.fact_id + " not published: subject/attribute is not a topic segment");
        return;
    }
    Envelope env;
    env.topic = "facts/" + f.subject + "/" + f.attribute;
    env.source = options_.id + "/facts";
    env.timestamp = f.asserted_at;
    env.seq = ++fact_seq_[env.topic];
    env.payload = to_json(f);
    env.ttl = f.ttl;
    bus_->publish(std::move(env));
}

void Node::assert_fact(const Fact& fact) {
    std::lock_guard lk(mu_);
    std::vector<std::string> ignored;
    publish_fact(fact, ignored);
    kb_.assert_fact(fact);
}

TickReport Node::ingest(Millis now) {
    std::lock_guard lk(mu_);
    TickReport report;
    drain(now, report);
    return report;
}

void Node::drain(Millis now, TickReport& report) {
    for (auto& env : bus_->poll(raw_sub_, std::numeric_limits<std::size_t>::max(), now)) {
        const auto& p = env.payload;
        if (!p.contains("value") || !p["value"].is_number()) {
            report.diagnostics.push_back(env.msg_id + ": raw payload has no numeric 'value'");
            continue;
        }
        Sample s{env.topic, env.timestamp, p["value"].get<double>(), p.value("unit", std::string{})};
        try {
            storage_.ingest(s);
            ++report.ingested;
        } catch (const Error& e) {
            report.diagnostics.push_back(e.what());
        }
    }
}

TickReport Node::tick(Millis now) {
    std::lock_guard lk(mu_);
    TickReport report;
    drain(now, report);

    report.facts = pipeline_.run(now);
    for (const auto& d : pipeline_.diagnostics()) report.diagnostics.push_back(d.definition + " on " + d.stream + ": " + d.message);
    for (const auto& f : report.facts) {
        publish_fact(f, report.diagnostics);
        kb_.assert_fact(f);
    }

    report.cycle = run_cycle(kb_, &publisher_, now, options_.cycle_budget);
    for (const auto& f : report.cycle.inferred_facts) publish_fact(f, report.diagnostics);
    return report;
}

}  // namespace cghf
