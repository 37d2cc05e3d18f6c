#include "cghf/facts.hpp"

#include <algorithm>
#include <mutex>

namespace cghf {

json to_json(const Fact& f) {
    return json{{"fact_id", f.fact_id},         {"subject", f.subject}, {"attribute", f.attribute},
                {"value", value_to_json(f.value)}, {"asserted_at", f.asserted_at}, {"ttl_ms", f.ttl},
                {"provenance", f.provenance}};
}

Fact fact_from_json(const json& j) {
    try {
        Fact f;
        f.fact_id = j.at("fact_id").get<std::string>();
        f.subject = j.at("subject").get<std::string>();
        f.attribute = j.at("attribute").get<std::string>();
        f.value = value_from_json(j.at("value"));
        f.asserted_at = j.at("asserted_at").get<Millis>();
        f.ttl = j.at("ttl_ms").get<Millis>();
        f.provenance = j.value("provenance", std::vector<std::string>{});
        return f;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::BadRequest, std::string("fact: ") + e.what());
    }
}

std::string_view to_string(AggregateFn fn) {
    switch (fn) {
        case AggregateFn::Mean: return "mean";
        case AggregateFn::RateOfChange: return "rate_of_change";
        case AggregateFn::TrendSlope: return "trend_slope";
        case AggregateFn::Forecast: return "forecast";
    }
    return "?";
}

std::optional<AggregateFn> aggregate_fn_from(std::string_view name) {
    for (auto fn : {AggregateFn::Mean, AggregateFn::RateOfChange, AggregateFn::TrendSlope, AggregateFn::Forecast})
        if (to_string(fn) == name) return fn;
    return std::nullopt;
}

std::optional<Bindings> match_stream(std::string_view pattern, std::string_view stream_id) {
    Bindings captures;
    while (true) {
        auto pp = pattern.find('/');
        auto sp = stream_id.find('/');
        auto pseg = pattern.substr(0, pp);
        auto sseg = stream_id.substr(0, sp);
        if (pseg.size() >= 2 && pseg.front() == '{' && pseg.back() == '}') {
            if (sseg.empty()) return std::nullopt;
            captures[std::string(pseg.substr(1, pseg.size() - 2))] = std::string(sseg);
        } else if (pseg != sseg) {
            return std::nullopt;
        }
        if ((pp == std::string_view::npos) != (sp == std::string_view::npos)) return std::nullopt;
        if (pp == std::string_view::npos) return captures;
        pattern.remove_prefix(pp + 1);
        stream_id.remove_prefix(sp + 1);
    }
}

namespace {

double ols_slope(const std::vector<Sample>& s) {
    double tm = 0, vm = 0;
    for (const auto& x : s) {
        tm += static_cast<double>(x.timestamp);
        vm += x.value;
    }
    tm /= static_cast<double>(s.size());
    vm /= static_cast<double>(s.size());
    double sxy = 0, sxx = 0;
    for (const auto& x : s) {
        double dt = static_cast<double>(x.timestamp) - tm;
        sxy += dt * (x.value - vm);
        sxx += dt * dt;
    }
    // no spread in time: no trend
    return sxx == 0.0 ? 0.0 : sxy / sxx;
}

// Shifted by the first value, so a constant run yields that value exactly.
double mean_of(const std::vector<Sample>& s, std::size_t begin, std::size_t end) {
    const double base = s[begin].value;
    double sum = 0;
    for (auto i = begin; i < end; ++i) sum += s[i].value - base;
    return base + sum / static_cast<double>(end - begin);
}

}  // namespace

double aggregate_samples(const std::vector<Sample>& s, AggregateFn fn, Millis window, Millis now, Millis horizon) {
    auto insufficient = [&](const char* need) {
        return Error(ErrorCode::InsufficientSamples,
                     std::string(to_string(fn)) + " needs " + need + ", window has " + std::to_string(s.size()));
    };
    switch (fn) {
        case AggregateFn::Mean:
            if (s.empty()) throw insufficient("1 sample");
            return mean_of(s, 0, s.size());
        case AggregateFn::TrendSlope:
            if (s.empty()) throw insufficient("1 sample");
            return ols_slope(s);
        case AggregateFn::Forecast:
            if (s.size() < 2) throw insufficient("2 samples");
            return s.back().value + ols_slope(s) * static_cast<double>(horizon);
        case AggregateFn::RateOfChange: {
            if (s.size() < 2) throw insufficient("2 samples");
            Millis mid = now - window / 2;
            auto split = static_cast<std::size_t>(
                std::partition_point(s.begin(), s.end(), [&](const Sample& x) { return x.timestamp < mid; }) - s.begin());
            if (split == 0 || split == s.size()) throw insufficient("a sample in each half-window");
            double first = mean_of(s, 0, split);
            double second = mean_of(s, split, s.size());
            if (first == 0.0) throw Error(ErrorCode::DivisionByZero, "first half-window mean is 0");
            return (second - first) / first;
        }
    }
    throw Error(ErrorCode::BadRequest, "unknown aggregate");
}

// ---- Storage ----------------------------------------------------------------------------

void Storage::ingest(const Sample& sample) {
    std::unique_lock lk(mu_);
    auto& log = logs_[sample.stream_id];
    if (!log.empty() && sample.timestamp < log.back().timestamp) {
        throw Error(ErrorCode::TimestampRegression, sample.stream_id + ": " + std::to_string(sample.timestamp) + " < " +
                                                        std::to_string(log.back().timestamp));
    }
    log.push_back(sample);
    Millis cutoff = sample.timestamp - retention_;
    auto keep = std::partition_point(log.begin(), log.end(), [&](const Sample& x) { return x.timestamp < cutoff; });
    log.erase(log.begin(), keep);
}

std::vector<Sample> Storage::query_unlocked(const std::string& stream_id, Millis from, Millis to) const {
    auto it = logs_.find(stream_id);
    if (it == logs_.end()) throw Error(ErrorCode::UnknownStream, stream_id);
    const auto& log = it->second;
    if (to <= from) return {};
    auto lo = std::partition_point(log.begin(), log.end(), [&](const Sample& x) { return x.timestamp < from; });
    auto hi = std::partition_point(lo, log.end(), [&](const Sample& x) { return x.timestamp < to; });
    return {lo, hi};
}

std::vector<Sample> Storage::query(const std::string& stream_id, Millis from, Millis to) const {
    return view().query(stream_id, from, to);
}

double Storage::aggregate(const std::string& stream_id, AggregateFn fn, Millis window, Millis now, Millis horizon) const {
    return view().aggregate(stream_id, fn, window, now, horizon);
}

std::vector<std::string> Storage::streams() const { return view().streams(); }

std::vector<Sample> Storage::View::query(const std::string& stream_id, Millis from, Millis to) const {
    if (from > to) throw Error(ErrorCode::BadRequest, "query range has from > to");
    return storage_->query_unlocked(stream_id, from, to);
}

double Storage::View::aggregate(const std::string& stream_id, AggregateFn fn, Millis window, Millis now,
                                Millis horizon) const {
    if (window <= 0) throw Error(ErrorCode::BadRequest, "window must be positive");
    return aggregate_samples(storage_->query_unlocked(stream_id, now - window, now), fn, window, now, horizon);
}

std::vector<std::string> Storage::View::streams() const {
    std::vector<std::string> out;
    out.reserve(storage_->logs_.size());
    for (const auto& [id, log] : storage_->logs_) out.push_back(id);
    return out;
}

// ---- Pipeline ---------------------------------------------------------------------------

std::vector<Fact> run_fact_pipeline(const Storage::View& storage, const std::vector<FactDefinition>& defs, Millis now,
                                    EmissionLedger& ledger, std::vector<PipelineDiagnostic>* diagnostics) {
    std::vector<Fact> out;
    auto note = [&](const FactDefinition& def, const std::string& stream, std::string msg) {
        if (diagnostics) diagnostics->push_back({def.name, stream, std::move(msg)});
    };
    const auto streams = storage.streams();

    for (const auto& def : defs) {
        for (const auto& stream : streams) {
            auto captures = match_stream(def.stream, stream);
            if (!captures) continue;

            const Millis from = now - def.window;
            double agg;
            try {
                agg = aggregate_samples(storage.query(stream, from, now), def.fn, def.window, now, def.forecast_horizon());
            } catch (const Error& e) {
                note(def, stream, e.what());
                continue;
            }

            Bindings bindings = *captures;
            bindings["value"] = agg;
            bool settled = false;
            for (std::size_t i = 0; i < def.classifier.size(); ++i) {
                const auto& entry = def.classifier[i];
                try {
                    auto hit = evaluate(entry.predicate, bindings);
                    if (!is_bool(hit)) throw EvalError("classifier predicate is not boolean");
                    if (!std::get<bool>(hit)) continue;

                    auto key = std::make_tuple(def.name, stream, i);
                    if (auto last = ledger.find(key); last != ledger.end() && now - last->second < def.reemit_interval()) {
                        note(def, stream, "suppressed: re-emit interval");
                        break;
                    }
                    auto subject = evaluate(entry.subject, bindings);
                    if (!is_string(subject)) throw EvalError("fact subject must be a string");

                    Fact f;
                    f.fact_id = def.name + "/" + stream + "@" + std::to_string(now);
                    f.subject = std::get<std::string>(subject);
                    f.attribute = entry.attribute;
                    f.value = evaluate(entry.value, bindings);
                    f.asserted_at = now;
                    f.ttl = def.ttl;
                    f.provenance = {stream + "[" + std::to_string(from) + "," + std::to_string(now) + ")"};
                    out.push_back(std::move(f));
                    ledger[key] = now;
                } catch (const EvalError& e) {
                    note(def, stream, e.what());
                    continue;
                }
                settled = true;
                break;
            }
            if (!settled) note(def, stream, "no classifier entry matched");
        }
    }
    return out;
}

void FactPipeline::add_definition(FactDefinition def) {
    remove_definition(def.name);
    defs_.push_back(std::move(def));
}

bool FactPipeline::remove_definition(const std::string& name) {
    auto it = std::find_if(defs_.begin(), defs_.end(), [&](const auto& d) { return d.name == name; });
    if (it == defs_.end()) return false;
    defs_.erase(it);
    for (auto l = ledger_.begin(); l != ledger_.end();) {
        l = std::get<0>(l->first) == name ? ledger_.erase(l) : std::next(l);
    }
    return true;
}

bool FactPipeline::has_definition(const std::string& name) const {
    return std::any_of(defs_.begin(), defs_.end(), [&](const auto& d) { return d.name == name; });
}

std::vector<Fact> FactPipeline::run(Millis now) {
    diagnostics_.clear();
    auto view = storage_->view();
    return run_fact_pipeline(view, defs_, now, ledger_, &diagnostics_);
}

}  // namespace cghf
