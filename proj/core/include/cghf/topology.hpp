#pragma once

#include <map>
#include <string>
#include <vector>

#include "cghf/common.hpp"
#include "cghf/facts.hpp"

namespace cghf::sim {

struct Region {
    std::string id;
    /// Utilization of the core D-plane NFs serving the region, as a fraction.
    double core_util = 0.5;
};

struct Cell {
    std::string id;
    std::string region;
    double capacity_mbps = 1000;
    /// Offered load as a fraction of capacity; may exceed 1 under overload.
    double load = 0.5;
    double density = 0.5;
};

struct AccessPoint {
    std::string id;
    /// "cellular" or "wifi".
    std::string technology;
    std::string cell;
    /// Gateway the AP is connected to; optional.
    std::string gateway;
    double bandwidth_mbps = 100;
    int channels = 1;
    std::vector<std::string> qos_classes;
    std::vector<std::string> protocols;
    /// Associated-station density as a fraction of the AP's limit.
    double density = 0.5;
    bool active = true;
};

struct Gateway {
    std::string id;
    double capacity = 1000;
    double load = 0.5;
    double jitter_ms = 5;
    /// Transport delay from each region; regions not listed have zero delay.
    std::map<std::string, double> path_delay_ms;
};

struct DataCenter {
    std::string id;
    /// Spare processing capacity as a fraction.
    double headroom = 0.5;
    std::map<std::string, double> delay_ms;
};

struct Service {
    std::string id;
    std::string host;
    /// Headroom a host must offer to accept the instance.
    double demand = 0.1;
    double delay_req_ms = 20;
};

struct UE {
    std::string id;
    std::string cell;
    std::string anchor;
    std::string ap;
    /// Service the UE's application uses; optional.
    std::string service;
    std::string app_class = "best_effort";
    std::vector<std::string> protocols;
    double qos_cap = 1.0;
    double cpu_load = 0.3;
    double throughput_mbps = 10;
};

/// Ground-truth state of the simulated network. Enforcement handlers mutate it in place.
class Topology {
public:
    std::vector<Region> regions;
    std::vector<Cell> cells;
    std::vector<AccessPoint> access_points;
    std::vector<Gateway> gateways;
    std::vector<DataCenter> data_centers;
    std::vector<Service> services;
    std::vector<UE> ues;

    /// Parses and validates. Throws Error(InvalidTopology).
    static Topology from_json(const json& j);
    json to_json() const;

    /// Throws Error(InvalidTopology) on duplicate ids, dangling references or non-positive capacities.
    void validate() const;

    Region* region(const std::string& id);
    Cell* cell(const std::string& id);
    AccessPoint* access_point(const std::string& id);
    Gateway* gateway(const std::string& id);
    DataCenter* data_center(const std::string& id);
    Service* service(const std::string& id);
    UE* ue(const std::string& id);
    const Region* region(const std::string& id) const;
    const Cell* cell(const std::string& id) const;
    const AccessPoint* access_point(const std::string& id) const;
    const Gateway* gateway(const std::string& id) const;
    const DataCenter* data_center(const std::string& id) const;
    const Service* service(const std::string& id) const;
    const UE* ue(const std::string& id) const;

    /// Region of the UE's current cell.
    std::string region_of(const UE& ue) const;

    /// Static facts for the whole topology, asserted at `now` with provenance "topology".
    std::vector<Fact> static_facts(Millis now) const;
    /// Static facts about one entity (UE, AP, service, cell or gateway id).
    std::vector<Fact> static_facts_of(const std::string& id, Millis now) const;
};

/// Modeled end-to-end latency of a UE through gateway `gw`: path delay plus load-weighted jitter.
double path_latency(const Topology& t, const UE& ue, const Gateway& gw);
/// Delay between a UE and data center `dc`.
double service_delay(const Topology& t, const UE& ue, const DataCenter& dc);
/// 1 at or below the requirement, falling linearly to 0 at three times the requirement.
double qoe(double delay_ms, double requirement_ms);

}  // namespace cghf::sim
