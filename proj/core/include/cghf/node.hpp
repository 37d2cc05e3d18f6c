#pragma once

#include <mutex>
#include <string>
#include <vector>

#include "cghf/bus.hpp"
#include "cghf/facts.hpp"
#include "cghf/inference.hpp"
#include "cghf/rules.hpp"

namespace cghf {

struct NodeOptions {
    std::string id = "cghf";
    Millis retention = 3'600'000;
    std::size_t cycle_budget = kDefaultCycleBudget;
    /// Raw information the node turns into information streams.
    std::string raw_pattern = "raw/#";
};

struct TickReport {
    std::size_t ingested = 0;
    std::vector<Fact> facts;
    CycleResult cycle;
    std::vector<std::string> diagnostics;
};

/// One context generation and handling function: drains raw information from the bus into
/// Storage, runs the fact pipeline, publishes facts on `facts/<subject>/<attribute>`, and runs
/// inference, publishing contexts back onto the bus. All methods are serialized.
class Node {
public:
    Node(Bus& bus, ContextModel model, NodeOptions options = {});
    Node(const Node&) = delete;
    Node& operator=(const Node&) = delete;

    /// Validates `rs` against the model (plus any entities it declares) and against names
    /// already installed. Returns the validation errors; installs nothing unless empty.
    std::vector<ValidationError> install(const RuleSet& rs);
    /// Throws Error(RuleLoadError) listing every problem.
    void install_or_throw(const RuleSet& rs);
    void uninstall(const std::vector<std::string>& rule_names, const std::vector<std::string>& factdef_names);

    /// Asserts a fact that does not come from the pipeline (topology, stakeholder config) and
    /// publishes it like any other fact.
    void assert_fact(const Fact& fact);

    TickReport tick(Millis now);
    /// Only moves pending raw information into Storage (history warm-up).
    TickReport ingest(Millis now);

    Bus& bus() noexcept { return *bus_; }
    const ContextModel& model() const noexcept { return model_; }
    const Storage& storage() const noexcept { return storage_; }
    const KnowledgeBase& kb() const noexcept { return kb_; }
    const FactPipeline& pipeline() const noexcept { return pipeline_; }
    const NodeOptions& options() const noexcept { return options_; }

private:
    void publish_fact(const Fact& f, std::vector<std::string>& diagnostics);
    void drain(Millis now, TickReport& report);

    mutable std::mutex mu_;
    Bus* bus_;
    ContextModel model_;
    NodeOptions options_;
    Storage storage_;
    FactPipeline pipeline_;
    KnowledgeBase kb_;
    ContextPublisher publisher_;
    SubscriptionHandle raw_sub_;
    std::map<std::string, std::uint64_t> fact_seq_;
};

}  // namespace cghf
