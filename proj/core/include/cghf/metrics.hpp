#pragma once

#include <istream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "cghf/common.hpp"

namespace cghf::sim {

/// Builds the metrics report from event-log records, one record at a time. The simulation
/// feeds it live; `metrics --log` feeds it a saved log. Both yield the same report.
class MetricsAccumulator {
public:
    void add(const json& record);
    json report() const;

private:
    std::string scenario_;
    Millis tick_ = 0;
    Millis end_ = 0;
    std::optional<Millis> first_anomaly_;
    std::vector<Millis> context_times_;
    std::size_t actions_ = 0;
    std::size_t infeasible_ = 0;
    std::size_t ignored_ = 0;
    std::set<std::string> constrained_;
    json anchor_reselections_ = json::array();
    json service_relocations_ = json::array();
    json handovers_ = json::array();
    std::uint64_t bus_dropped_ = 0;
    std::size_t budget_overruns_ = 0;
    // (tick time, context msg_id) -> NF kinds that acted on it.
    std::map<std::pair<Millis, std::string>, std::set<std::string>> acted_;
};

/// Report for a whole newline-delimited log. Blank lines are skipped; throws json::parse_error.
json metrics_from_log(std::istream& in);
json metrics_from_log(const std::vector<std::string>& lines);

}  // namespace cghf::sim
