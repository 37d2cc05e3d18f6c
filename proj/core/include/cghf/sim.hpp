#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "cghf/bus.hpp"
#include "cghf/inference.hpp"
#include "cghf/metrics.hpp"
#include "cghf/node.hpp"
#include "cghf/topology.hpp"

namespace cghf::sim {

/// Candidate scoring weights. All objectives are minimized.
struct Weights {
    double jitter = 1.0;
    double path_delay = 1.0;
    double service_delay = 1.0;
    double ap_density = 1.0;
    double ap_bandwidth = 1.0;
};

struct SimParams {
    Weights weights;
    /// QoS cap the policy function applies to subscribers in a congested region.
    double policy_qos_cap = 0.5;
    /// Gateways above this load are not eligible as new anchors.
    double max_gateway_load = 0.8;
    /// Contexts about a target an NF acted on less than this long ago are ignored.
    Millis hold_down = 60'000;
};

enum class NFKind { PolicyFunction, AnchorManager, ServicePlacer, AccessFunction };

std::string_view to_string(NFKind kind);
/// Throws Error(BadRequest).
NFKind nf_kind_from(std::string_view name);

struct NFSubscriber {
    NFKind kind = NFKind::PolicyFunction;
    std::string pattern;
};

/// context/congestion/#, context/latency/#, context/qoe/#, context/attachment/# respectively.
NFSubscriber default_subscriber(NFKind kind);

struct Candidate {
    std::string id;
    double objective = 0;
    bool feasible = false;
    std::string reason;
};

/// A change an NF made to the simulated network.
struct Action {
    NFKind nf = NFKind::PolicyFunction;
    /// constrain_qos, reselect_anchor, relocate_service or handover.
    std::string type;
    std::string target;
    std::string from;
    std::string to;
    std::optional<double> objective_before;
    std::optional<double> objective_after;
    std::vector<Candidate> candidates;
    json details = json::object();
};

json to_json(const Action& a);
json to_json(const Candidate& c);

/// InfeasibleAction with the candidates that were considered.
class Infeasible : public Error {
public:
    Infeasible(const std::string& detail, std::vector<Candidate> candidates)
        : Error(ErrorCode::InfeasibleAction, detail), candidates_(std::move(candidates)) {}
    const std::vector<Candidate>& candidates() const noexcept { return candidates_; }

private:
    std::vector<Candidate> candidates_;
};

double anchor_objective(const Topology& t, const UE& ue, const Gateway& gw, const Weights& w);
/// Weighted mean delay between the service's users and `dc`; 0 without users.
double placement_objective(const Topology& t, const Service& svc, const DataCenter& dc, const Weights& w);
/// Weighted density plus a bandwidth penalty 100/(100+bandwidth_mbps).
double attachment_objective(const AccessPoint& ap, const Weights& w);

/// Each handler enumerates every candidate, picks the feasible one with the lowest objective
/// (ties by id) and applies it only if it strictly improves on the current assignment.
/// Throws Infeasible (topology unchanged) otherwise, and Error(BadRequest) for unknown targets.
Action constrain_qos(Topology& t, const std::string& region, const SimParams& p);
Action reselect_anchor(Topology& t, const std::string& ue, const SimParams& p);
Action relocate_service(Topology& t, const std::string& service, const SimParams& p);
Action redirect_attachment(Topology& t, const std::string& ue, const SimParams& p);

/// Field of the context naming what the NF acts on; falls back to the last topic segment.
std::string context_target(NFKind kind, const Context& ctx);

/// Dispatches to the handler for nf.kind. Throws Error(BadRequest) if ctx.topic does not
/// match nf.pattern, Infeasible when no candidate qualifies.
Action enforce(const NFSubscriber& nf, const Context& ctx, Topology& t, const SimParams& p);

/// Timed change to the ground truth.
struct ScriptEvent {
    Millis t = 0;
    /// set, ramp, move or activate_ap.
    std::string type;
    /// Entity collection for set/ramp: region, cell, access_point, gateway, data_center, ue.
    std::string kind;
    std::string id;
    std::string field;
    double value = 0;
    /// Ramp duration.
    Millis over = 0;
    /// Destination cell (and optionally AP) for move.
    std::string cell;
    std::string ap;
    /// Ground-truth anomaly onset, used for detection latency and control runs.
    bool anomaly = false;
};

json to_json(const ScriptEvent& e);
/// Throws Error(BadRequest).
ScriptEvent script_event_from_json(const json& j);

struct RuleSource {
    std::string name;
    std::string text;
};

struct ScenarioSpec {
    std::string name;
    json topology = json::object();
    std::vector<RuleSource> rules;
    std::vector<ScriptEvent> events;
    std::uint64_t seed = 1;
    Millis duration = 600'000;
    Millis tick = 1000;
    /// Ticks before this time only fill telemetry history; nothing is evaluated or enforced.
    Millis warmup = 0;
    /// Relative standard deviation of telemetry noise.
    double noise = 0.05;
    SimParams params;
    std::vector<NFSubscriber> nfs;

    /// Accepts "topology" and "rules" either inline or as paths relative to `base_dir`.
    /// Throws Error(BadRequest) for malformed specs or unsorted events.
    static ScenarioSpec from_json(const json& j, const std::filesystem::path& base_dir = {});
    /// Fully inlined form; from_json(to_json()) reproduces it.
    json to_json() const;

    /// Same topology and rules with every anomaly event removed.
    ScenarioSpec without_anomalies() const;
};

ScenarioSpec load_scenario_file(const std::filesystem::path& path);

/// Deterministic harness: per tick, applies script events, publishes telemetry, runs the node,
/// and lets NF subscribers enforce contexts. Everything observable goes to the event log.
class Simulation {
public:
    /// Throws Error(InvalidTopology), Error(RuleLoadError).
    explicit Simulation(ScenarioSpec spec);
    ~Simulation();
    Simulation(const Simulation&) = delete;
    Simulation& operator=(const Simulation&) = delete;

    /// Start of the next tick.
    Millis time() const noexcept { return time_; }
    bool done() const noexcept { return time_ >= spec_.duration; }

    /// Log records appended by this tick.
    std::vector<json> step();
    void run();

    const ScenarioSpec& spec() const noexcept { return spec_; }
    const Topology& topology() const noexcept { return topo_; }
    Node& node() noexcept { return *node_; }
    Bus& bus() noexcept { return *bus_; }

    /// One JSON record per line, each with "kind".
    const std::vector<std::string>& log() const noexcept { return log_; }
    std::string log_text() const;
    json metrics() const { return metrics_.report(); }

    /// Called before each enforcement with the pre-action topology.
    using EnforcementObserver = std::function<void(const Topology& before, const NFSubscriber&, const Context&)>;
    void set_enforcement_observer(EnforcementObserver obs) { observer_ = std::move(obs); }

private:
    struct Ramp {
        ScriptEvent event;
        double start = 0;
    };

    void emit(json record, std::vector<json>& out);
    void apply_event(const ScriptEvent& e, std::vector<json>& out);
    void apply_ramps(Millis t);
    void sync_static_facts(const std::string& id, Millis now, std::vector<json>& out);
    void publish_telemetry(Millis t, std::vector<json>& out);
    void publish_sample(const std::string& source, const std::string& topic, double base, const std::string& unit, Millis t,
                        std::vector<json>& out);
    void run_subscribers(Millis now, std::vector<json>& out);
    void finish(std::vector<json>& out);

    ScenarioSpec spec_;
    Topology topo_;
    std::unique_ptr<Bus> bus_;
    std::unique_ptr<Node> node_;
    std::vector<std::pair<NFSubscriber, SubscriptionHandle>> subscribers_;
    std::mt19937_64 rng_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    std::map<std::string, std::uint64_t> seq_;
    std::size_t next_event_ = 0;
    std::vector<Ramp> ramps_;
    std::map<std::pair<NFKind, std::string>, Millis> last_action_;
    Millis time_ = 0;
    bool finished_ = false;
    std::vector<std::string> log_;
    MetricsAccumulator metrics_;
    EnforcementObserver observer_;
};

/// Re-runs the scenario embedded in a log's header record and returns the regenerated log.
std::vector<std::string> replay(const std::vector<std::string>& log_lines);

}  // namespace cghf::sim
