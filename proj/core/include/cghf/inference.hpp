#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "cghf/bus.hpp"
#include "cghf/facts.hpp"
#include "cghf/rules.hpp"

namespace cghf {

/// One rule instantiation whose event patterns and condition hold.
struct Activation {
    std::string rule;
    int priority = 0;
    Bindings bindings;
    /// Fact ids in event-pattern order.
    std::vector<std::string> matched_facts;
    Millis newest = 0;
    std::string fingerprint;
};

/// Canonical "name=value;" rendering of bindings, sorted by name.
std::string binding_fingerprint(const Bindings& b);

/// Total order used for conflict resolution: priority desc, newest matched fact desc,
/// rule name asc, binding fingerprint asc.
bool fires_before(const Activation& a, const Activation& b);
std::vector<Activation> resolve(std::vector<Activation> agenda);

/// Relevant context produced by one rule firing.
struct Context {
    std::string topic;
    std::map<std::string, Value> fields;
    Millis produced_at = 0;
    Millis ttl = 0;
    std::string rule;
    std::vector<std::string> matched_facts;
    std::string msg_id;
};

/// Envelope payload: keys fields, rule, matched_facts, ttl_ms.
json context_payload(const Context& c);
Context context_from_envelope(const Envelope& env);
/// Flat record used in logs and NBI responses (topic, fields, produced_at, ttl_ms, rule, matched_facts, msg_id).
json to_json(const Context& c);

/// Live facts (one per subject/attribute), loaded rules and the refraction ledger.
class KnowledgeBase {
public:
    /// Makes `fact` the live value for its (subject, attribute); returns the superseded id.
    std::optional<std::string> assert_fact(Fact fact);
    /// Removes exactly the facts with asserted_at + ttl < now.
    std::vector<std::string> retract_expired(Millis now);

    /// All unrefracted activations over facts live at `now`. Condition evaluation
    /// failures exclude the activation and are appended to `diagnostics` when given.
    std::vector<Activation> match(Millis now, std::vector<std::string>* diagnostics = nullptr) const;

    void add_rule(Rule rule);
    bool remove_rule(const std::string& name);
    const std::vector<Rule>& rules() const noexcept { return rules_; }
    const Rule* find_rule(const std::string& name) const;

    const Fact* find(const std::string& subject, const std::string& attribute) const;
    std::vector<Fact> facts() const;
    std::size_t size() const noexcept { return count_; }

    bool refracted(const Activation& a) const;
    void record_firing(const Activation& a);

    /// Sequence for ids of facts inferred by rules.
    std::uint64_t next_inferred_seq() noexcept { return ++inferred_seq_; }

private:
    void match_rule(const Rule& rule, std::size_t idx, Millis now, Bindings& bindings, std::vector<const Fact*>& matched,
                    std::vector<Activation>& out, std::vector<std::string>* diagnostics) const;

    // attribute -> subject -> fact
    std::map<std::string, std::map<std::string, Fact>> by_attr_;
    std::size_t count_ = 0;
    std::vector<Rule> rules_;
    std::set<std::tuple<std::string, std::string, Millis>> refraction_;
    std::uint64_t inferred_seq_ = 0;
};

/// Turns produced contexts into bus envelopes, keeping per-topic sequence numbers.
class ContextPublisher {
public:
    ContextPublisher(Bus& bus, std::string source) : bus_(&bus), source_(std::move(source)) {}

    /// Publishes and stores the assigned msg_id in `ctx`.
    void publish(Context& ctx);
    const std::string& source() const noexcept { return source_; }

private:
    Bus* bus_;
    std::string source_;
    std::map<std::string, std::uint64_t> seq_;
};

inline constexpr std::size_t kDefaultCycleBudget = 1000;

struct CycleResult {
    /// In firing order.
    std::vector<Context> contexts;
    std::vector<Fact> inferred_facts;
    std::vector<Activation> fired;
    std::vector<std::string> retracted;
    std::vector<std::string> diagnostics;
    /// CycleBudgetExceeded when the agenda was still non-empty after the budget; results are partial.
    std::optional<ErrorCode> error;
};

/// Forward chaining to quiescence: retract expired, match, resolve, fire the head
/// activation, record refraction; repeat until the agenda is empty or the budget is spent.
/// `publisher` may be null (contexts are still returned).
CycleResult run_cycle(KnowledgeBase& kb, ContextPublisher* publisher, Millis now,
                      std::size_t budget = kDefaultCycleBudget);

}  // namespace cghf
