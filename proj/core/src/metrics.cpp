#include "cghf/metrics.hpp"

#include <algorithm>

namespace cghf::sim {

void MetricsAccumulator::add(const json& r) {
    const std::string kind = r.value("kind", "");
    if (kind == "header") {
        const auto& s = r.at("scenario");
        scenario_ = s.value("name", "");
        tick_ = s.value("tick_ms", Millis{0});
    } else if (kind == "script") {
        if (r.at("event").value("anomaly", false)) {
            Millis t = r.at("event").at("t_ms").get<Millis>();
            if (!first_anomaly_ || t < *first_anomaly_) first_anomaly_ = t;
        }
    } else if (kind == "context") {
        context_times_.push_back(r.at("produced_at").get<Millis>());
    } else if (kind == "action") {
        ++actions_;
        acted_[{r.at("t").get<Millis>(), r.at("context").get<std::string>()}].insert(r.at("nf").get<std::string>());
        const std::string type = r.at("type").get<std::string>();
        const auto& d = r.at("details");
        if (type == "constrain_qos") {
            for (const auto& u : d.at("constrained")) constrained_.insert(u.get<std::string>());
        } else if (type == "reselect_anchor") {
            anchor_reselections_.push_back({{"ue", r.at("target")},
                                            {"from", r.at("from")},
                                            {"to", r.at("to")},
                                            {"t", r.at("t")},
                                            {"latency_before_ms", d.at("latency_before_ms")},
                                            {"latency_after_ms", d.at("latency_after_ms")}});
        } else if (type == "relocate_service") {
            service_relocations_.push_back(
                {{"service", r.at("target")}, {"from", r.at("from")}, {"to", r.at("to")}, {"t", r.at("t")}, {"qoe", d.at("qoe")}});
        } else if (type == "handover") {
            handovers_.push_back({{"ue", r.at("target")}, {"from", r.at("from")}, {"to", r.at("to")}, {"t", r.at("t")}});
        }
    } else if (kind == "infeasible") {
        ++infeasible_;
    } else if (kind == "ignored") {
        ++ignored_;
    } else if (kind == "diagnostic") {
        if (r.value("error", "") == "CycleBudgetExceeded") ++budget_overruns_;
    } else if (kind == "summary") {
        end_ = r.at("t").get<Millis>();
        bus_dropped_ = r.at("bus_dropped").get<std::uint64_t>();
    }
}

json MetricsAccumulator::report() const {
    json j;
    j["scenario"] = scenario_;
    j["tick_ms"] = tick_;
    j["end_ms"] = end_;
    j["contexts"] = context_times_.size();
    j["actions"] = actions_;
    j["infeasible_actions"] = infeasible_;
    j["ignored_contexts"] = ignored_;

    std::size_t false_positives = 0;
    std::optional<Millis> first_after;
    for (Millis t : context_times_) {
        if (!first_anomaly_ || t < *first_anomaly_)
            ++false_positives;
        else if (!first_after || t < *first_after)
            first_after = t;
    }
    j["first_anomaly_ms"] = first_anomaly_ ? json(*first_anomaly_) : json(nullptr);
    j["first_context_ms"] = context_times_.empty() ? json(nullptr) : json(*std::min_element(context_times_.begin(), context_times_.end()));
    j["detection_latency_ms"] = first_after ? json(*first_after - *first_anomaly_) : json(nullptr);
    j["false_positive_contexts"] = false_positives;

    j["qos_constrained_subscribers"] = constrained_;
    j["qos_constrained_count"] = constrained_.size();
    j["anchor_reselections"] = anchor_reselections_;
    j["service_relocations"] = service_relocations_;
    j["handovers"] = handovers_;
    j["handover_count"] = handovers_.size();
    j["bus_dropped"] = bus_dropped_;
    j["cycle_budget_overruns"] = budget_overruns_;

    std::size_t conflicts = 0;
    for (const auto& [key, nfs] : acted_)
        if (nfs.size() > 1) ++conflicts;
    j["conflicting_actions"] = conflicts;
    return j;
}

json metrics_from_log(std::istream& in) {
    MetricsAccumulator acc;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        acc.add(json::parse(line));
    }
    return acc.report();
}

json metrics_from_log(const std::vector<std::string>& lines) {
    MetricsAccumulator acc;
    for (const auto& line : lines)
        if (!line.empty()) acc.add(json::parse(line));
    return acc.report();
}

}  // namespace cghf::sim
