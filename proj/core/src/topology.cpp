#include "cghf/topology.hpp"

#include <algorithm>
#include <set>

namespace cghf::sim {

namespace {

[[noreturn]] void invalid(const std::string& detail) { throw Error(ErrorCode::InvalidTopology, detail); }

template <class T>
T* find_by_id(std::vector<T>& v, const std::string& id) {
    auto it = std::find_if(v.begin(), v.end(), [&](const T& x) { return x.id == id; });
    return it == v.end() ? nullptr : &*it;
}

template <class T>
const T* find_by_id(const std::vector<T>& v, const std::string& id) {
    auto it = std::find_if(v.begin(), v.end(), [&](const T& x) { return x.id == id; });
    return it == v.end() ? nullptr : &*it;
}

std::string req_string(const json& j, const char* key, const char* what) {
    if (!j.contains(key) || !j[key].is_string() || j[key].get<std::string>().empty())
        invalid(std::string(what) + " needs a non-empty string '" + key + "'");
    return j[key].get<std::string>();
}

double opt_number(const json& j, const char* key, double fallback) {
    if (!j.contains(key)) return fallback;
    if (!j[key].is_number()) invalid(std::string("'") + key + "' must be a number");
    return j[key].get<double>();
}

std::string opt_string(const json& j, const char* key, std::string fallback = {}) {
    if (!j.contains(key)) return fallback;
    if (!j[key].is_string()) invalid(std::string("'") + key + "' must be a string");
    return j[key].get<std::string>();
}

std::vector<std::string> opt_strings(const json& j, const char* key) {
    std::vector<std::string> out;
    if (!j.contains(key)) return out;
    if (!j[key].is_array()) invalid(std::string("'") + key + "' must be an array of strings");
    for (const auto& s : j[key]) {
        if (!s.is_string()) invalid(std::string("'") + key + "' must be an array of strings");
        out.push_back(s.get<std::string>());
    }
    return out;
}

std::map<std::string, double> opt_delays(const json& j, const char* key) {
    std::map<std::string, double> out;
    if (!j.contains(key)) return out;
    if (!j[key].is_object()) invalid(std::string("'") + key + "' must map region ids to numbers");
    for (const auto& [k, v] : j[key].items()) {
        if (!v.is_number()) invalid(std::string("'") + key + "' must map region ids to numbers");
        out[k] = v.get<double>();
    }
    return out;
}

const json& array_at(const json& j, const char* key) {
    static const json empty = json::array();
    if (!j.contains(key)) return empty;
    if (!j[key].is_array()) invalid(std::string("'") + key + "' must be an array");
    return j[key];
}

std::string join(const std::vector<std::string>& v) {
    std::string out;
    for (const auto& s : v) {
        if (!out.empty()) out += ",";
        out += s;
    }
    return out;
}

Fact topo_fact(const std::string& subject, const std::string& attribute, Value value, Millis now) {
    Fact f;
    f.fact_id = "topology/" + subject + "/" + attribute + "@" + std::to_string(now);
    f.subject = subject;
    f.attribute = attribute;
    f.value = std::move(value);
    f.asserted_at = now;
    f.ttl = kForever;
    f.provenance = {"topology"};
    return f;
}

template <class T>
void check_unique(const std::vector<T>& v, std::set<std::string>& seen) {
    for (const auto& x : v)
        if (!seen.insert(x.id).second) invalid("duplicate id '" + x.id + "'");
}

}  // namespace

Topology Topology::from_json(const json& j) {
    if (!j.is_object()) invalid("topology must be a JSON object");
    Topology t;
    try {
        for (const auto& r : array_at(j, "regions")) t.regions.push_back({req_string(r, "id", "region"), opt_number(r, "core_util", 0.5)});
        for (const auto& c : array_at(j, "cells")) {
            Cell cell;
            cell.id = req_string(c, "id", "cell");
            cell.region = req_string(c, "region", "cell");
            cell.capacity_mbps = opt_number(c, "capacity_mbps", cell.capacity_mbps);
            cell.load = opt_number(c, "load", cell.load);
            cell.density = opt_number(c, "density", cell.density);
            t.cells.push_back(std::move(cell));
        }
        for (const auto& a : array_at(j, "access_points")) {
            AccessPoint ap;
            ap.id = req_string(a, "id", "access point");
            ap.technology = req_string(a, "technology", "access point");
            ap.cell = req_string(a, "cell", "access point");
            ap.gateway = opt_string(a, "gateway");
            ap.bandwidth_mbps = opt_number(a, "bandwidth_mbps", ap.bandwidth_mbps);
            ap.channels = static_cast<int>(opt_number(a, "channels", ap.channels));
            ap.qos_classes = opt_strings(a, "qos_classes");
            ap.protocols = opt_strings(a, "protocols");
            ap.density = opt_number(a, "density", ap.density);
            if (a.contains("active")) {
                if (!a["active"].is_boolean()) invalid("'active' must be a boolean");
                ap.active = a["active"].get<bool>();
            }
            t.access_points.push_back(std::move(ap));
        }
        for (const auto& g : array_at(j, "gateways")) {
            Gateway gw;
            gw.id = req_string(g, "id", "gateway");
            gw.capacity = opt_number(g, "capacity", gw.capacity);
            gw.load = opt_number(g, "load", gw.load);
            gw.jitter_ms = opt_number(g, "jitter_ms", gw.jitter_ms);
            gw.path_delay_ms = opt_delays(g, "path_delay_ms");
            t.gateways.push_back(std::move(gw));
        }
        for (const auto& d : array_at(j, "data_centers")) {
            DataCenter dc;
            dc.id = req_string(d, "id", "data center");
            dc.headroom = opt_number(d, "headroom", dc.headroom);
            dc.delay_ms = opt_delays(d, "delay_ms");
            t.data_centers.push_back(std::move(dc));
        }
        for (const auto& s : array_at(j, "services")) {
            Service svc;
            svc.id = req_string(s, "id", "service");
            svc.host = req_string(s, "host", "service");
            svc.demand = opt_number(s, "demand", svc.demand);
            svc.delay_req_ms = opt_number(s, "delay_req_ms", svc.delay_req_ms);
            t.services.push_back(std::move(svc));
        }
        for (const auto& u : array_at(j, "ues")) {
            UE ue;
            ue.id = req_string(u, "id", "ue");
            ue.cell = req_string(u, "cell", "ue");
            ue.anchor = req_string(u, "anchor", "ue");
            ue.ap = req_string(u, "ap", "ue");
            ue.service = opt_string(u, "service");
            ue.app_class = opt_string(u, "app_class", ue.app_class);
            ue.protocols = opt_strings(u, "protocols");
            ue.qos_cap = opt_number(u, "qos_cap", ue.qos_cap);
            ue.cpu_load = opt_number(u, "cpu_load", ue.cpu_load);
            ue.throughput_mbps = opt_number(u, "throughput_mbps", ue.throughput_mbps);
            t.ues.push_back(std::move(ue));
        }
    } catch (const json::exception& e) {
        invalid(e.what());
    }
    t.validate();
    return t;
}

json Topology::to_json() const {
    json j = json::object();
    j["regions"] = json::array();
    for (const auto& r : regions) j["regions"].push_back({{"id", r.id}, {"core_util", r.core_util}});
    j["cells"] = json::array();
    for (const auto& c : cells)
        j["cells"].push_back(
            {{"id", c.id}, {"region", c.region}, {"capacity_mbps", c.capacity_mbps}, {"load", c.load}, {"density", c.density}});
    j["access_points"] = json::array();
    for (const auto& a : access_points) {
        json ap = {{"id", a.id},
                   {"technology", a.technology},
                   {"cell", a.cell},
                   {"bandwidth_mbps", a.bandwidth_mbps},
                   {"channels", a.channels},
                   {"qos_classes", a.qos_classes},
                   {"protocols", a.protocols},
                   {"density", a.density},
                   {"active", a.active}};
        if (!a.gateway.empty()) ap["gateway"] = a.gateway;
        j["access_points"].push_back(std::move(ap));
    }
    j["gateways"] = json::array();
    for (const auto& g : gateways)
        j["gateways"].push_back({{"id", g.id},
                                 {"capacity", g.capacity},
                                 {"load", g.load},
                                 {"jitter_ms", g.jitter_ms},
                                 {"path_delay_ms", g.path_delay_ms}});
    j["data_centers"] = json::array();
    for (const auto& d : data_centers)
        j["data_centers"].push_back({{"id", d.id}, {"headroom", d.headroom}, {"delay_ms", d.delay_ms}});
    j["services"] = json::array();
    for (const auto& s : services)
        j["services"].push_back(
            {{"id", s.id}, {"host", s.host}, {"demand", s.demand}, {"delay_req_ms", s.delay_req_ms}});
    j["ues"] = json::array();
    for (const auto& u : ues) {
        json ue = {{"id", u.id},
                   {"cell", u.cell},
                   {"anchor", u.anchor},
                   {"ap", u.ap},
                   {"app_class", u.app_class},
                   {"protocols", u.protocols},
                   {"qos_cap", u.qos_cap},
                   {"cpu_load", u.cpu_load},
                   {"throughput_mbps", u.throughput_mbps}};
        if (!u.service.empty()) ue["service"] = u.service;
        j["ues"].push_back(std::move(ue));
    }
    return j;
}

void Topology::validate() const {
    std::set<std::string> seen;
    check_unique(regions, seen);
    check_unique(cells, seen);
    check_unique(access_points, seen);
    check_unique(gateways, seen);
    check_unique(data_centers, seen);
    check_unique(services, seen);
    check_unique(ues, seen);

    for (const auto& c : cells) {
        if (!region(c.region)) invalid("cell " + c.id + " references unknown region '" + c.region + "'");
        if (!(c.capacity_mbps > 0)) invalid("cell " + c.id + " capacity must be > 0");
    }
    for (const auto& a : access_points) {
        if (a.technology != "cellular" && a.technology != "wifi")
            invalid("access point " + a.id + " technology must be cellular or wifi");
        if (!cell(a.cell)) invalid("access point " + a.id + " references unknown cell '" + a.cell + "'");
        if (!a.gateway.empty() && !gateway(a.gateway))
            invalid("access point " + a.id + " references unknown gateway '" + a.gateway + "'");
        if (!(a.bandwidth_mbps > 0)) invalid("access point " + a.id + " bandwidth must be > 0");
    }
    for (const auto& g : gateways)
        if (!(g.capacity > 0)) invalid("gateway " + g.id + " capacity must be > 0");
    for (const auto& s : services)
        if (!data_center(s.host)) invalid("service " + s.id + " references unknown data center '" + s.host + "'");
    for (const auto& u : ues) {
        if (!cell(u.cell)) invalid("ue " + u.id + " references unknown cell '" + u.cell + "'");
        if (!gateway(u.anchor)) invalid("ue " + u.id + " references unknown anchor '" + u.anchor + "'");
        if (!access_point(u.ap)) invalid("ue " + u.id + " references unknown access point '" + u.ap + "'");
        if (!u.service.empty() && !service(u.service))
            invalid("ue " + u.id + " references unknown service '" + u.service + "'");
    }
}

Region* Topology::region(const std::string& id) { return find_by_id(regions, id); }
Cell* Topology::cell(const std::string& id) { return find_by_id(cells, id); }
AccessPoint* Topology::access_point(const std::string& id) { return find_by_id(access_points, id); }
Gateway* Topology::gateway(const std::string& id) { return find_by_id(gateways, id); }
DataCenter* Topology::data_center(const std::string& id) { return find_by_id(data_centers, id); }
Service* Topology::service(const std::string& id) { return find_by_id(services, id); }
UE* Topology::ue(const std::string& id) { return find_by_id(ues, id); }
const Region* Topology::region(const std::string& id) const { return find_by_id(regions, id); }
const Cell* Topology::cell(const std::string& id) const { return find_by_id(cells, id); }
const AccessPoint* Topology::access_point(const std::string& id) const { return find_by_id(access_points, id); }
const Gateway* Topology::gateway(const std::string& id) const { return find_by_id(gateways, id); }
const DataCenter* Topology::data_center(const std::string& id) const { return find_by_id(data_centers, id); }
const Service* Topology::service(const std::string& id) const { return find_by_id(services, id); }
const UE* Topology::ue(const std::string& id) const { return find_by_id(ues, id); }

std::string Topology::region_of(const UE& u) const {
    const Cell* c = cell(u.cell);
    return c ? c->region : std::string{};
}

std::vector<Fact> Topology::static_facts_of(const std::string& id, Millis now) const {
    std::vector<Fact> out;
    if (const Cell* c = cell(id)) {
        out.push_back(topo_fact(id, "region", c->region, now));
    } else if (const AccessPoint* a = access_point(id)) {
        if (!a->active) return out;
        out.push_back(topo_fact(id, "serves_cell", a->cell, now));
        out.push_back(topo_fact(id, "technology", a->technology, now));
        out.push_back(topo_fact(id, "channels", static_cast<double>(a->channels), now));
        out.push_back(topo_fact(id, "qos_classes", join(a->qos_classes), now));
        out.push_back(topo_fact(id, "protocols", join(a->protocols), now));
        if (!a->gateway.empty()) out.push_back(topo_fact(id, "connected_gw", a->gateway, now));
    } else if (const Service* s = service(id)) {
        out.push_back(topo_fact(id, "hosted_on", s->host, now));
        out.push_back(topo_fact(id, "delay_req_ms", s->delay_req_ms, now));
    } else if (const UE* u = ue(id)) {
        out.push_back(topo_fact(id, "located_in", u->cell, now));
        out.push_back(topo_fact(id, "in_region", region_of(*u), now));
        out.push_back(topo_fact(id, "anchor", u->anchor, now));
        out.push_back(topo_fact(id, "attached_ap", u->ap, now));
        out.push_back(topo_fact(id, "app_class", u->app_class, now));
        out.push_back(topo_fact(id, "protocols", join(u->protocols), now));
        if (!u->service.empty()) out.push_back(topo_fact(id, "uses_service", u->service, now));
    }
    return out;
}

std::vector<Fact> Topology::static_facts(Millis now) const {
    std::vector<Fact> out;
    auto add = [&](const std::string& id) {
        auto fs = static_facts_of(id, now);
        out.insert(out.end(), fs.begin(), fs.end());
    };
    for (const auto& c : cells) add(c.id);
    for (const auto& a : access_points) add(a.id);
    for (const auto& s : services) add(s.id);
    for (const auto& u : ues) add(u.id);
    return out;
}

double path_latency(const Topology& t, const UE& ue, const Gateway& gw) {
    auto it = gw.path_delay_ms.find(t.region_of(ue));
    double path = it == gw.path_delay_ms.end() ? 0.0 : it->second;
    return path + gw.jitter_ms * (1.0 + gw.load);
}

double service_delay(const Topology& t, const UE& ue, const DataCenter& dc) {
    auto it = dc.delay_ms.find(t.region_of(ue));
    return it == dc.delay_ms.end() ? 0.0 : it->second;
}

double qoe(double delay_ms, double requirement_ms) {
    if (delay_ms <= requirement_ms) return 1.0;
    if (delay_ms >= 3.0 * requirement_ms) return 0.0;
    return 1.0 - (delay_ms - requirement_ms) / (2.0 * requirement_ms);
}

}  // namespace cghf::sim
