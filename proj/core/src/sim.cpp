#include "cghf/sim.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <sstream>

#include "cghf/rules.hpp"

namespace cghf::sim {

namespace {

[[noreturn]] void bad_request(const std::string& detail) { throw Error(ErrorCode::BadRequest, detail); }

bool subset_of(const std::vector<std::string>& needed, const std::vector<std::string>& offered) {
    return std::all_of(needed.begin(), needed.end(),
                       [&](const std::string& p) { return std::find(offered.begin(), offered.end(), p) != offered.end(); });
}

// Lowest feasible objective, ties by id. Candidates are already in id order.
const Candidate* best_of(const std::vector<Candidate>& cs) {
    const Candidate* best = nullptr;
    for (const auto& c : cs)
        if (c.feasible && (!best || c.objective < best->objective)) best = &c;
    return best;
}

template <class T>
std::vector<const T*> sorted_by_id(const std::vector<T>& v) {
    std::vector<const T*> out;
    for (const auto& x : v) out.push_back(&x);
    std::sort(out.begin(), out.end(), [](const T* a, const T* b) { return a->id < b->id; });
    return out;
}

std::string field_string(const Context& ctx, const std::string& name) {
    auto it = ctx.fields.find(name);
    if (it == ctx.fields.end() || !is_string(it->second)) return {};
    return std::get<std::string>(it->second);
}

std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) bad_request("cannot read " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

json merged(json base, const json& extra) {
    for (const auto& [k, v] : extra.items()) base[k] = v;
    return base;
}

}  // namespace

// ---- NF kinds -----------------------------------------------------------------------------

std::string_view to_string(NFKind kind) {
    switch (kind) {
        case NFKind::PolicyFunction: return "PolicyFunction";
        case NFKind::AnchorManager: return "AnchorManager";
        case NFKind::ServicePlacer: return "ServicePlacer";
        case NFKind::AccessFunction: return "AccessFunction";
    }
    return "?";
}

NFKind nf_kind_from(std::string_view name) {
    for (auto k : {NFKind::PolicyFunction, NFKind::AnchorManager, NFKind::ServicePlacer, NFKind::AccessFunction})
        if (to_string(k) == name) return k;
    bad_request("unknown NF kind '" + std::string(name) + "'");
}

NFSubscriber default_subscriber(NFKind kind) {
    switch (kind) {
        case NFKind::PolicyFunction: return {kind, "context/congestion/#"};
        case NFKind::AnchorManager: return {kind, "context/latency/#"};
        case NFKind::ServicePlacer: return {kind, "context/qoe/#"};
        case NFKind::AccessFunction: return {kind, "context/attachment/#"};
    }
    return {kind, "context/#"};
}

json to_json(const Candidate& c) {
    json j = {{"id", c.id}, {"objective", c.objective}, {"feasible", c.feasible}};
    if (!c.reason.empty()) j["reason"] = c.reason;
    return j;
}

json to_json(const Action& a) {
    json j = {{"nf", to_string(a.nf)}, {"type", a.type}, {"target", a.target}, {"from", a.from}, {"to", a.to}};
    j["objective_before"] = a.objective_before ? json(*a.objective_before) : json(nullptr);
    j["objective_after"] = a.objective_after ? json(*a.objective_after) : json(nullptr);
    j["candidates"] = json::array();
    for (const auto& c : a.candidates) j["candidates"].push_back(to_json(c));
    j["details"] = a.details;
    return j;
}

// ---- Objectives and handlers ----------------------------------------------------------------

double anchor_objective(const Topology& t, const UE& ue, const Gateway& gw, const Weights& w) {
    auto it = gw.path_delay_ms.find(t.region_of(ue));
    double path = it == gw.path_delay_ms.end() ? 0.0 : it->second;
    return w.jitter * gw.jitter_ms * (1.0 + gw.load) + w.path_delay * path;
}

double placement_objective(const Topology& t, const Service& svc, const DataCenter& dc, const Weights& w) {
    double sum = 0;
    std::size_t n = 0;
    for (const auto& u : t.ues) {
        if (u.service != svc.id) continue;
        sum += service_delay(t, u, dc);
        ++n;
    }
    return n == 0 ? 0.0 : w.service_delay * sum / static_cast<double>(n);
}

double attachment_objective(const AccessPoint& ap, const Weights& w) {
    return w.ap_density * ap.density + w.ap_bandwidth * 100.0 / (100.0 + ap.bandwidth_mbps);
}

Action constrain_qos(Topology& t, const std::string& region, const SimParams& p) {
    if (!t.region(region)) bad_request("unknown region '" + region + "'");
    json subscribers = json::array();
    json constrained = json::array();
    for (auto& u : t.ues) {
        if (t.region_of(u) != region) continue;
        subscribers.push_back(u.id);
        if (u.qos_cap > p.policy_qos_cap) constrained.push_back(u.id);
    }
    if (subscribers.empty()) throw Infeasible("no subscribers in region " + region, {});
    for (auto& u : t.ues)
        if (t.region_of(u) == region) u.qos_cap = std::min(u.qos_cap, p.policy_qos_cap);

    Action a;
    a.nf = NFKind::PolicyFunction;
    a.type = "constrain_qos";
    a.target = region;
    a.details = {{"cap", p.policy_qos_cap}, {"subscribers", subscribers}, {"constrained", constrained}};
    return a;
}

Action reselect_anchor(Topology& t, const std::string& ue_id, const SimParams& p) {
    UE* ue = t.ue(ue_id);
    if (!ue) bad_request("unknown ue '" + ue_id + "'");
    const Gateway* current = t.gateway(ue->anchor);
    const double before = anchor_objective(t, *ue, *current, p.weights);

    std::vector<Candidate> cs;
    for (const Gateway* g : sorted_by_id(t.gateways)) {
        if (g->id == ue->anchor) continue;
        Candidate c{g->id, anchor_objective(t, *ue, *g, p.weights), true, {}};
        if (g->load > p.max_gateway_load) {
            c.feasible = false;
            c.reason = "load above " + format_double(p.max_gateway_load);
        }
        cs.push_back(std::move(c));
    }
    const Candidate* best = best_of(cs);
    if (!best) throw Infeasible("no gateway with spare capacity for " + ue_id, cs);
    if (!(best->objective < before)) throw Infeasible("no gateway improves on " + ue->anchor + " for " + ue_id, cs);

    Action a;
    a.nf = NFKind::AnchorManager;
    a.type = "reselect_anchor";
    a.target = ue_id;
    a.from = ue->anchor;
    a.to = best->id;
    a.objective_before = before;
    a.objective_after = best->objective;
    a.details = {{"latency_before_ms", path_latency(t, *ue, *current)},
                 {"latency_after_ms", path_latency(t, *ue, *t.gateway(best->id))},
                 {"app_class", ue->app_class}};
    a.candidates = std::move(cs);
    ue->anchor = a.to;
    return a;
}

Action relocate_service(Topology& t, const std::string& service_id, const SimParams& p) {
    Service* svc = t.service(service_id);
    if (!svc) bad_request("unknown service '" + service_id + "'");
    DataCenter* host = t.data_center(svc->host);
    const double before = placement_objective(t, *svc, *host, p.weights);

    std::vector<Candidate> cs;
    for (const DataCenter* dc : sorted_by_id(t.data_centers)) {
        if (dc->id == svc->host) continue;
        Candidate c{dc->id, placement_objective(t, *svc, *dc, p.weights), true, {}};
        if (dc->headroom < svc->demand) {
            c.feasible = false;
            c.reason = "headroom below demand";
        }
        cs.push_back(std::move(c));
    }
    const Candidate* best = best_of(cs);
    if (!best) throw Infeasible("no data center has headroom for " + service_id, cs);
    if (!(best->objective < before)) throw Infeasible("no data center improves on " + svc->host + " for " + service_id, cs);

    DataCenter* target = t.data_center(best->id);
    json qoe_rows = json::array();
    for (const auto& u : t.ues) {
        if (u.service != svc->id) continue;
        double d0 = service_delay(t, u, *host);
        double d1 = service_delay(t, u, *target);
        qoe_rows.push_back({{"ue", u.id},
                            {"delay_before_ms", d0},
                            {"delay_after_ms", d1},
                            {"before", qoe(d0, svc->delay_req_ms)},
                            {"after", qoe(d1, svc->delay_req_ms)}});
    }

    Action a;
    a.nf = NFKind::ServicePlacer;
    a.type = "relocate_service";
    a.target = service_id;
    a.from = svc->host;
    a.to = best->id;
    a.objective_before = before;
    a.objective_after = best->objective;
    a.details = {{"qoe", qoe_rows}};
    a.candidates = std::move(cs);
    host->headroom += svc->demand;
    target->headroom -= svc->demand;
    svc->host = a.to;
    return a;
}

Action redirect_attachment(Topology& t, const std::string& ue_id, const SimParams& p) {
    UE* ue = t.ue(ue_id);
    if (!ue) bad_request("unknown ue '" + ue_id + "'");
    const AccessPoint* current = t.access_point(ue->ap);
    const double before = attachment_objective(*current, p.weights);

    std::vector<Candidate> cs;
    for (const AccessPoint* ap : sorted_by_id(t.access_points)) {
        if (ap->id == ue->ap || ap->cell != ue->cell) continue;
        Candidate c{ap->id, attachment_objective(*ap, p.weights), true, {}};
        if (!ap->active) {
            c.feasible = false;
            c.reason = "inactive";
        } else if (!subset_of(ue->protocols, ap->protocols)) {
            c.feasible = false;
            c.reason = "protocol mismatch";
        }
        cs.push_back(std::move(c));
    }
    const Candidate* best = best_of(cs);
    if (!best) throw Infeasible("no compatible access point for " + ue_id, cs);
    if (!(best->objective < before)) throw Infeasible("no access point improves on " + ue->ap + " for " + ue_id, cs);

    Action a;
    a.nf = NFKind::AccessFunction;
    a.type = "handover";
    a.target = ue_id;
    a.from = ue->ap;
    a.to = best->id;
    a.objective_before = before;
    a.objective_after = best->objective;
    a.details = {{"technology_before", current->technology}, {"technology_after", t.access_point(best->id)->technology}};
    a.candidates = std::move(cs);
    ue->ap = a.to;
    return a;
}

std::string context_target(NFKind kind, const Context& ctx) {
    const char* field = "";
    switch (kind) {
        case NFKind::PolicyFunction: field = "region"; break;
        case NFKind::AnchorManager: field = "ue"; break;
        case NFKind::ServicePlacer: field = "service"; break;
        case NFKind::AccessFunction: field = "ue"; break;
    }
    auto v = field_string(ctx, field);
    if (!v.empty()) return v;
    auto slash = ctx.topic.rfind('/');
    return slash == std::string::npos ? ctx.topic : ctx.topic.substr(slash + 1);
}

Action enforce(const NFSubscriber& nf, const Context& ctx, Topology& t, const SimParams& p) {
    if (!TopicPattern::parse(nf.pattern).matches(ctx.topic))
        bad_request(std::string(to_string(nf.kind)) + " is not subscribed to " + ctx.topic);
    const std::string target = context_target(nf.kind, ctx);
    switch (nf.kind) {
        case NFKind::PolicyFunction: return constrain_qos(t, target, p);
        case NFKind::AnchorManager: return reselect_anchor(t, target, p);
        case NFKind::ServicePlacer: return relocate_service(t, target, p);
        case NFKind::AccessFunction: return redirect_attachment(t, target, p);
    }
    bad_request("unknown NF kind");
}

// ---- Scenario specs ---------------------------------------------------------------------------

json to_json(const ScriptEvent& e) {
    json j = {{"t_ms", e.t}, {"type", e.type}};
    if (e.type == "set" || e.type == "ramp") {
        j["kind"] = e.kind;
        j["id"] = e.id;
        j["field"] = e.field;
        j["value"] = e.value;
        if (e.type == "ramp") j["over_ms"] = e.over;
    } else if (e.type == "move") {
        j["id"] = e.id;
        j["cell"] = e.cell;
        if (!e.ap.empty()) j["ap"] = e.ap;
    } else {
        j["id"] = e.id;
    }
    if (e.anomaly) j["anomaly"] = true;
    return j;
}

ScriptEvent script_event_from_json(const json& j) {
    try {
        ScriptEvent e;
        e.t = j.at("t_ms").get<Millis>();
        e.type = j.at("type").get<std::string>();
        e.id = j.at("id").get<std::string>();
        e.anomaly = j.value("anomaly", false);
        if (e.type == "set" || e.type == "ramp") {
            e.kind = j.at("kind").get<std::string>();
            e.field = j.at("field").get<std::string>();
            e.value = j.at("value").get<double>();
            if (e.type == "ramp") e.over = j.at("over_ms").get<Millis>();
            if (e.over < 0) bad_request("ramp over_ms must be >= 0");
        } else if (e.type == "move") {
            e.cell = j.at("cell").get<std::string>();
            e.ap = j.value("ap", "");
        } else if (e.type != "activate_ap") {
            bad_request("unknown event type '" + e.type + "'");
        }
        if (e.t < 0) bad_request("event time must be >= 0");
        return e;
    } catch (const json::exception& ex) {
        bad_request(std::string("malformed event: ") + ex.what());
    }
}

ScenarioSpec ScenarioSpec::from_json(const json& j, const std::filesystem::path& base_dir) {
    if (!j.is_object()) bad_request("scenario must be a JSON object");
    ScenarioSpec s;
    try {
        s.name = j.at("name").get<std::string>();
        const auto& topo = j.at("topology");
        if (topo.is_string()) {
            auto path = base_dir / topo.get<std::string>();
            try {
                s.topology = json::parse(read_file(path));
            } catch (const json::parse_error& e) {
                bad_request(path.string() + ": " + e.what());
            }
        } else {
            s.topology = topo;
        }
        for (const auto& r : j.at("rules")) {
            if (r.is_string()) {
                auto path = base_dir / r.get<std::string>();
                s.rules.push_back({path.filename().string(), read_file(path)});
            } else {
                s.rules.push_back({r.at("name").get<std::string>(), r.at("text").get<std::string>()});
            }
        }
        if (j.contains("events"))
            for (const auto& e : j["events"]) s.events.push_back(script_event_from_json(e));
        s.seed = j.value("seed", s.seed);
        s.duration = j.value("duration_ms", s.duration);
        s.tick = j.value("tick_ms", s.tick);
        s.warmup = j.value("warmup_ms", s.warmup);
        s.noise = j.value("noise", s.noise);
        if (j.contains("weights")) {
            const auto& w = j["weights"];
            s.params.weights.jitter = w.value("jitter", 1.0);
            s.params.weights.path_delay = w.value("path_delay", 1.0);
            s.params.weights.service_delay = w.value("service_delay", 1.0);
            s.params.weights.ap_density = w.value("ap_density", 1.0);
            s.params.weights.ap_bandwidth = w.value("ap_bandwidth", 1.0);
        }
        s.params.policy_qos_cap = j.value("policy_qos_cap", s.params.policy_qos_cap);
        s.params.max_gateway_load = j.value("max_gateway_load", s.params.max_gateway_load);
        s.params.hold_down = j.value("hold_down_ms", s.params.hold_down);
        if (j.contains("nfs")) {
            for (const auto& n : j["nfs"]) {
                auto kind = nf_kind_from(n.at("kind").get<std::string>());
                s.nfs.push_back({kind, n.value("pattern", default_subscriber(kind).pattern)});
            }
        } else {
            for (auto k : {NFKind::PolicyFunction, NFKind::AnchorManager, NFKind::ServicePlacer, NFKind::AccessFunction})
                s.nfs.push_back(default_subscriber(k));
        }
    } catch (const json::exception& e) {
        bad_request(std::string("malformed scenario: ") + e.what());
    }
    if (s.tick <= 0) bad_request("tick_ms must be > 0");
    if (s.duration < 0) bad_request("duration_ms must be >= 0");
    if (s.noise < 0) bad_request("noise must be >= 0");
    if (s.warmup < 0) bad_request("warmup_ms must be >= 0");
    if (!std::is_sorted(s.events.begin(), s.events.end(), [](const auto& a, const auto& b) { return a.t < b.t; }))
        bad_request("events must be sorted by t_ms");
    for (const auto& n : s.nfs) TopicPattern::parse(n.pattern);
    return s;
}

json ScenarioSpec::to_json() const {
    json j;
    j["name"] = name;
    j["topology"] = topology;
    j["rules"] = json::array();
    for (const auto& r : rules) j["rules"].push_back({{"name", r.name}, {"text", r.text}});
    j["events"] = json::array();
    for (const auto& e : events) j["events"].push_back(sim::to_json(e));
    j["seed"] = seed;
    j["duration_ms"] = duration;
    j["tick_ms"] = tick;
    j["warmup_ms"] = warmup;
    j["noise"] = noise;
    const auto& w = params.weights;
    j["weights"] = {{"jitter", w.jitter},
                    {"path_delay", w.path_delay},
                    {"service_delay", w.service_delay},
                    {"ap_density", w.ap_density},
                    {"ap_bandwidth", w.ap_bandwidth}};
    j["policy_qos_cap"] = params.policy_qos_cap;
    j["max_gateway_load"] = params.max_gateway_load;
    j["hold_down_ms"] = params.hold_down;
    j["nfs"] = json::array();
    for (const auto& n : nfs) j["nfs"].push_back({{"kind", to_string(n.kind)}, {"pattern", n.pattern}});
    return j;
}

ScenarioSpec ScenarioSpec::without_anomalies() const {
    ScenarioSpec s = *this;
    s.name += "_control";
    s.events.erase(std::remove_if(s.events.begin(), s.events.end(), [](const auto& e) { return e.anomaly; }), s.events.end());
    return s;
}

ScenarioSpec load_scenario_file(const std::filesystem::path& path) {
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        bad_request(path.string() + ": " + e.what());
    }
    return ScenarioSpec::from_json(j, path.parent_path());
}

// ---- Simulation -------------------------------------------------------------------------------

namespace {

double* field_ref(Topology& t, const std::string& kind, const std::string& id, const std::string& field) {
    if (kind == "region") {
        if (auto* r = t.region(id); r && field == "core_util") return &r->core_util;
    } else if (kind == "cell") {
        if (auto* c = t.cell(id)) {
            if (field == "load") return &c->load;
            if (field == "density") return &c->density;
            if (field == "capacity_mbps") return &c->capacity_mbps;
        }
    } else if (kind == "access_point") {
        if (auto* a = t.access_point(id)) {
            if (field == "density") return &a->density;
            if (field == "bandwidth_mbps") return &a->bandwidth_mbps;
        }
    } else if (kind == "gateway") {
        if (auto* g = t.gateway(id)) {
            if (field == "load") return &g->load;
            if (field == "jitter_ms") return &g->jitter_ms;
        }
    } else if (kind == "data_center") {
        if (auto* d = t.data_center(id); d && field == "headroom") return &d->headroom;
    } else if (kind == "ue") {
        if (auto* u = t.ue(id)) {
            if (field == "cpu_load") return &u->cpu_load;
            if (field == "throughput_mbps") return &u->throughput_mbps;
        }
    }
    return nullptr;
}

void check_event(Topology& t, const ScriptEvent& e) {
    auto fail = [&](const std::string& why) {
        throw Error(ErrorCode::InvalidTopology, "event at " + std::to_string(e.t) + " ms: " + why);
    };
    if (e.type == "set" || e.type == "ramp") {
        if (!field_ref(t, e.kind, e.id, e.field)) fail("no settable field " + e.kind + " " + e.id + "." + e.field);
    } else if (e.type == "move") {
        const UE* u = t.ue(e.id);
        if (!u) fail("unknown ue '" + e.id + "'");
        if (!t.cell(e.cell)) fail("unknown cell '" + e.cell + "'");
        if (!e.ap.empty() && !t.access_point(e.ap)) fail("unknown access point '" + e.ap + "'");
    } else if (e.type == "activate_ap") {
        if (!t.access_point(e.id)) fail("unknown access point '" + e.id + "'");
    }
}

ContextModel load_rules(const ScenarioSpec& spec, std::vector<RuleSet>& sets) {
    ContextModel model;
    std::string errors;
    for (const auto& src : spec.rules) {
        auto parsed = parse_rules(src.text);
        if (!parsed.ok()) {
            for (const auto& e : parsed.errors) errors += (errors.empty() ? "" : "; ") + src.name + ":" + e.message();
            continue;
        }
        for (const auto& ent : parsed.ruleset->entities) model.add(ent);
        sets.push_back(std::move(*parsed.ruleset));
    }
    if (!errors.empty()) throw Error(ErrorCode::RuleLoadError, errors);
    return model;
}

}  // namespace

Simulation::Simulation(ScenarioSpec spec)
    : spec_(std::move(spec)), topo_(Topology::from_json(spec_.topology)), rng_(spec_.seed) {
    for (const auto& e : spec_.events) check_event(topo_, e);

    std::vector<RuleSet> sets;
    ContextModel model = load_rules(spec_, sets);

    bus_ = std::make_unique<Bus>("mcn");
    NodeOptions opts;
    opts.id = "cghf";
    node_ = std::make_unique<Node>(*bus_, model, opts);
    for (auto& rs : sets) {
        // Entities were merged into the model above.
        rs.entities.clear();
        node_->install_or_throw(rs);
    }
    for (const auto& nf : spec_.nfs)
        subscribers_.emplace_back(nf, bus_->subscribe(nf.pattern, std::string(to_string(nf.kind))));

    std::vector<json> ignored;
    emit({{"kind", "header"}, {"scenario", spec_.to_json()}}, ignored);
    for (const auto& f : topo_.static_facts(0)) {
        node_->assert_fact(f);
        emit(merged({{"kind", "fact"}}, cghf::to_json(f)), ignored);
    }
}

Simulation::~Simulation() = default;

void Simulation::emit(json record, std::vector<json>& out) {
    log_.push_back(record.dump());
    metrics_.add(record);
    out.push_back(std::move(record));
}

std::string Simulation::log_text() const {
    std::string out;
    for (const auto& l : log_) {
        out += l;
        out += '\n';
    }
    return out;
}

void Simulation::apply_event(const ScriptEvent& e, std::vector<json>& out) {
    emit({{"kind", "script"}, {"t", time_}, {"event", sim::to_json(e)}}, out);
    if (e.type == "set") {
        *field_ref(topo_, e.kind, e.id, e.field) = e.value;
    } else if (e.type == "ramp") {
        ramps_.push_back({e, *field_ref(topo_, e.kind, e.id, e.field)});
    } else if (e.type == "move") {
        UE* u = topo_.ue(e.id);
        u->cell = e.cell;
        if (!e.ap.empty()) u->ap = e.ap;
        sync_static_facts(e.id, time_, out);
    } else if (e.type == "activate_ap") {
        topo_.access_point(e.id)->active = true;
        sync_static_facts(e.id, time_, out);
    }
}

void Simulation::apply_ramps(Millis t) {
    for (auto it = ramps_.begin(); it != ramps_.end();) {
        const auto& e = it->event;
        double frac = e.over <= 0 ? 1.0 : std::clamp(static_cast<double>(t - e.t) / static_cast<double>(e.over), 0.0, 1.0);
        *field_ref(topo_, e.kind, e.id, e.field) = it->start + (e.value - it->start) * frac;
        it = frac >= 1.0 ? ramps_.erase(it) : std::next(it);
    }
}

void Simulation::sync_static_facts(const std::string& id, Millis now, std::vector<json>& out) {
    for (const auto& f : topo_.static_facts_of(id, now)) {
        const Fact* live = node_->kb().find(f.subject, f.attribute);
        if (live && live->value == f.value && !live->expired_at(now)) continue;
        node_->assert_fact(f);
        emit(merged({{"kind", "fact"}}, cghf::to_json(f)), out);
    }
}

void Simulation::publish_sample(const std::string& source, const std::string& topic, double base, const std::string& unit,
                                Millis t, std::vector<json>& out) {
    double v = base;
    if (spec_.noise > 0) v = base * (1.0 + spec_.noise * normal_(rng_));
    Envelope env;
    env.topic = topic;
    env.source = source;
    env.timestamp = t;
    env.seq = ++seq_[source + " " + topic];
    env.payload = {{"value", v}, {"unit", unit}};
    env.msg_id = bus_->publish(env).msg_id;
    emit(merged({{"kind", "envelope"}}, cghf::to_json(env)), out);
}

void Simulation::publish_telemetry(Millis t, std::vector<json>& out) {
    // Access NF: aggregated cell utilization per region, per-cell density and AN load, AP link state.
    for (const auto& r : topo_.regions) {
        double offered = 0, capacity = 0;
        for (const auto& c : topo_.cells) {
            if (c.region != r.id) continue;
            offered += c.load * c.capacity_mbps;
            capacity += c.capacity_mbps;
        }
        if (capacity > 0) publish_sample("access-nf", "raw/region/" + r.id + "/cell_util", offered / capacity, "ratio", t, out);
    }
    for (const auto& c : topo_.cells) {
        publish_sample("access-nf", "raw/cell/" + c.id + "/density", c.density, "ratio", t, out);
        publish_sample("access-nf", "raw/cell/" + c.id + "/load", c.load, "ratio", t, out);
    }
    for (const auto& a : topo_.access_points) {
        if (!a.active) continue;
        publish_sample("access-nf", "raw/ap/" + a.id + "/density", a.density, "ratio", t, out);
        publish_sample("access-nf", "raw/ap/" + a.id + "/bandwidth", a.bandwidth_mbps, "Mbps", t, out);
    }
    // D-plane monitor: core NF utilization and observed per-UE latency.
    for (const auto& r : topo_.regions)
        publish_sample("dplane-monitor", "raw/dpmon/region/" + r.id + "/core_util", r.core_util, "ratio", t, out);
    for (const auto& u : topo_.ues)
        publish_sample("dplane-monitor", "raw/dpmon/ue/" + u.id + "/latency", path_latency(topo_, u, *topo_.gateway(u.anchor)),
                       "ms", t, out);
    // Anchor point monitor.
    for (const auto& g : topo_.gateways) {
        publish_sample("anchor-monitor", "raw/gw/" + g.id + "/load", g.load, "ratio", t, out);
        publish_sample("anchor-monitor", "raw/gw/" + g.id + "/jitter", g.jitter_ms, "ms", t, out);
    }
    // Data center monitor.
    for (const auto& d : topo_.data_centers)
        publish_sample("dc-monitor", "raw/dc/" + d.id + "/headroom", d.headroom, "ratio", t, out);
    // Flow statistics monitor: UE to service point delay.
    for (const auto& u : topo_.ues) {
        if (u.service.empty()) continue;
        const DataCenter* dc = topo_.data_center(topo_.service(u.service)->host);
        publish_sample("flow-monitor", "raw/flow/" + u.id + "/delay", service_delay(topo_, u, *dc), "ms", t, out);
    }
    // UEs: device resources and achieved throughput.
    for (const auto& u : topo_.ues) {
        const Cell* c = topo_.cell(u.cell);
        double share = c->load > 1.0 ? 1.0 / c->load : 1.0;
        publish_sample("ue/" + u.id, "raw/ue/" + u.id + "/cpu_load", u.cpu_load, "ratio", t, out);
        publish_sample("ue/" + u.id, "raw/ue/" + u.id + "/throughput", u.throughput_mbps * std::min(1.0, u.qos_cap) * share,
                       "Mbps", t, out);
    }
}

void Simulation::run_subscribers(Millis now, std::vector<json>& out) {
    for (auto& [nf, handle] : subscribers_) {
        const std::string nf_name(to_string(nf.kind));
        for (const auto& env : bus_->poll(handle, std::numeric_limits<std::size_t>::max(), now)) {
            Context ctx = context_from_envelope(env);
            json base = {{"t", now},
                         {"nf", nf_name},
                         {"context", ctx.msg_id},
                         {"context_topic", ctx.topic},
                         {"rule", ctx.rule},
                         {"matched_facts", ctx.matched_facts}};
            const std::string target = context_target(nf.kind, ctx);

            auto ignore = [&](const std::string& reason) {
                emit(merged({{"kind", "ignored"}, {"reason", reason}}, base), out);
            };
            if (auto it = last_action_.find({nf.kind, target}); it != last_action_.end() && now - it->second < spec_.params.hold_down) {
                ignore("hold-down after action at " + std::to_string(it->second));
                continue;
            }
            std::string stale;
            if (nf.kind == NFKind::AnchorManager) {
                const UE* u = topo_.ue(target);
                auto gw = field_string(ctx, "gateway");
                if (u && !gw.empty() && gw != u->anchor) stale = "ue anchored at " + u->anchor;
            } else if (nf.kind == NFKind::ServicePlacer) {
                const Service* s = topo_.service(target);
                auto host = field_string(ctx, "host");
                if (s && !host.empty() && host != s->host) stale = "service hosted on " + s->host;
            } else if (nf.kind == NFKind::AccessFunction) {
                const UE* u = topo_.ue(target);
                auto cur = field_string(ctx, "current");
                if (u && !cur.empty() && cur != u->ap) stale = "ue attached to " + u->ap;
            }
            if (!stale.empty()) {
                ignore("stale context: " + stale);
                continue;
            }

            if (observer_) observer_(topo_, nf, ctx);
            try {
                Action a = enforce(nf, ctx, topo_, spec_.params);
                last_action_[{nf.kind, target}] = now;
                emit(merged(merged({{"kind", "action"}}, to_json(a)), base), out);
                if (a.type != "constrain_qos") sync_static_facts(a.target, now, out);
            } catch (const Infeasible& e) {
                json cands = json::array();
                for (const auto& c : e.candidates()) cands.push_back(to_json(c));
                last_action_[{nf.kind, target}] = now;
                emit(merged({{"kind", "infeasible"}, {"reason", e.detail()}, {"target", target}, {"candidates", cands}}, base), out);
            } catch (const Error& e) {
                emit(merged({{"kind", "ignored"}, {"reason", e.what()}}, base), out);
            }
        }
    }
}

std::vector<json> Simulation::step() {
    std::vector<json> out;
    if (done()) return out;
    const Millis t = time_;
    while (next_event_ < spec_.events.size() && spec_.events[next_event_].t <= t) apply_event(spec_.events[next_event_++], out);
    apply_ramps(t);
    publish_telemetry(t, out);

    const Millis now = t + spec_.tick;
    if (t < spec_.warmup) {
        node_->ingest(now);
        time_ = now;
        if (done()) finish(out);
        return out;
    }
    auto report = node_->tick(now);
    for (const auto& f : report.facts) emit(merged({{"kind", "fact"}}, cghf::to_json(f)), out);
    for (const auto& c : report.cycle.contexts) emit(merged({{"kind", "context"}}, cghf::to_json(c)), out);
    for (const auto& f : report.cycle.inferred_facts) emit(merged({{"kind", "fact"}}, cghf::to_json(f)), out);
    for (const auto& d : report.cycle.diagnostics) emit({{"kind", "diagnostic"}, {"t", now}, {"message", d}}, out);
    if (report.cycle.error)
        emit({{"kind", "diagnostic"}, {"t", now}, {"error", std::string(to_string(*report.cycle.error))}}, out);

    run_subscribers(now, out);
    time_ = now;
    if (done()) finish(out);
    return out;
}

void Simulation::finish(std::vector<json>& out) {
    if (finished_) return;
    finished_ = true;
    emit({{"kind", "summary"}, {"t", time_}, {"bus_dropped", bus_->total_dropped()}}, out);
}

void Simulation::run() {
    while (!done()) step();
    std::vector<json> out;
    finish(out);
}

std::vector<std::string> replay(const std::vector<std::string>& log_lines) {
    if (log_lines.empty()) bad_request("empty log");
    json header = json::parse(log_lines.front());
    if (header.value("kind", "") != "header") bad_request("log does not start with a header record");
    Simulation sim(ScenarioSpec::from_json(header.at("scenario")));
    sim.run();
    return sim.log();
}

}  // namespace cghf::sim
