#pragma once

#include <deque>
#include <map>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "cghf/common.hpp"
#include "cghf/expr.hpp"

namespace cghf {

/// One numeric observation of an information stream. stream_id is the raw topic.
struct Sample {
    std::string stream_id;
    Millis timestamp = 0;
    double value = 0.0;
    std::string unit;
};

/// Assertion "subject.attribute = value", valid while asserted_at + ttl >= now.
struct Fact {
    std::string fact_id;
    std::string subject;
    std::string attribute;
    Value value = false;
    Millis asserted_at = 0;
    Millis ttl = 0;
    /// "<stream>[from,to)" for generated facts, "rule:<name>" for inferred ones, "topology" for static ones.
    std::vector<std::string> provenance;

    bool expired_at(Millis now) const noexcept { return asserted_at + ttl < now; }
};

/// Keys fact_id, subject, attribute, value, asserted_at, ttl_ms, provenance.
json to_json(const Fact& f);
Fact fact_from_json(const json& j);

enum class AggregateFn { Mean, RateOfChange, TrendSlope, Forecast };

std::string_view to_string(AggregateFn fn);
std::optional<AggregateFn> aggregate_fn_from(std::string_view name);

inline constexpr Millis kDefaultForecastHorizon = 60'000;

/// First-match-wins classifier entry: when `predicate` holds, emit fact(subject, attribute, value).
/// `$value` is bound to the aggregate; `{name}` captures of the stream pattern bind `$name`.
struct ClassifierEntry {
    Expr predicate;
    Term subject;
    std::string attribute;
    Expr value;
    SourceLoc loc;

    bool operator==(const ClassifierEntry&) const = default;
};

struct FactDefinition {
    std::string name;
    /// Raw topic, optionally with `{name}` segments that match any single segment.
    std::string stream;
    AggregateFn fn = AggregateFn::Mean;
    Millis window = 0;
    std::optional<Millis> horizon;
    std::vector<ClassifierEntry> classifier;
    Millis ttl = 0;
    /// Minimum interval between identical classifications; defaults to the window.
    std::optional<Millis> reemit;
    SourceLoc loc;

    Millis reemit_interval() const noexcept { return reemit.value_or(window); }
    Millis forecast_horizon() const noexcept { return horizon.value_or(kDefaultForecastHorizon); }

    bool operator==(const FactDefinition&) const = default;
};

/// Matches a concrete stream id against a FactDefinition stream pattern and returns the
/// `{name}` captures, or nullopt when it does not match.
std::optional<Bindings> match_stream(std::string_view pattern, std::string_view stream_id);

/// Closed-form aggregate over the samples that fall in [now - window, now).
/// Throws InsufficientSamples or DivisionByZero.
double aggregate_samples(const std::vector<Sample>& in_window, AggregateFn fn, Millis window, Millis now,
                         Millis horizon = kDefaultForecastHorizon);

/// Time-ordered per-stream sample log with retention eviction.
class Storage {
public:
    explicit Storage(Millis retention = 3'600'000) : retention_(retention) {}

    /// Throws TimestampRegression.
    void ingest(const Sample& sample);

    /// Samples with from <= t < to, in time order. Throws UnknownStream.
    std::vector<Sample> query(const std::string& stream_id, Millis from, Millis to) const;
    double aggregate(const std::string& stream_id, AggregateFn fn, Millis window, Millis now,
                     Millis horizon = kDefaultForecastHorizon) const;
    std::vector<std::string> streams() const;
    Millis retention() const noexcept { return retention_; }

    /// Consistent read-only view; ingest blocks while a view is alive.
    class View {
    public:
        std::vector<Sample> query(const std::string& stream_id, Millis from, Millis to) const;
        double aggregate(const std::string& stream_id, AggregateFn fn, Millis window, Millis now,
                         Millis horizon = kDefaultForecastHorizon) const;
        std::vector<std::string> streams() const;

    private:
        friend class Storage;
        explicit View(const Storage& s) : storage_(&s), lock_(s.mu_) {}
        const Storage* storage_;
        std::shared_lock<std::shared_mutex> lock_;
    };
    View view() const { return View(*this); }

private:
    std::vector<Sample> query_unlocked(const std::string& stream_id, Millis from, Millis to) const;

    Millis retention_;
    mutable std::shared_mutex mu_;
    std::map<std::string, std::deque<Sample>> logs_;
};

/// Last emission time per (definition, stream, classifier entry).
using EmissionLedger = std::map<std::tuple<std::string, std::string, std::size_t>, Millis>;

struct PipelineDiagnostic {
    std::string definition;
    std::string stream;
    std::string message;
};

/// Evaluates every definition against every matching stream. A definition emits nothing on
/// insufficient data, no matching classifier entry, or a suppressed re-emission; such cases
/// land in `diagnostics` instead of throwing.
std::vector<Fact> run_fact_pipeline(const Storage::View& storage, const std::vector<FactDefinition>& defs, Millis now,
                                    EmissionLedger& ledger, std::vector<PipelineDiagnostic>* diagnostics = nullptr);

/// Stateful wrapper holding definitions and the emission ledger.
class FactPipeline {
public:
    explicit FactPipeline(const Storage& storage) : storage_(&storage) {}

    void add_definition(FactDefinition def);
    bool remove_definition(const std::string& name);
    bool has_definition(const std::string& name) const;
    const std::vector<FactDefinition>& definitions() const noexcept { return defs_; }

    std::vector<Fact> run(Millis now);
    const std::vector<PipelineDiagnostic>& diagnostics() const noexcept { return diagnostics_; }

private:
    const Storage* storage_;
    std::vector<FactDefinition> defs_;
    EmissionLedger ledger_;
    std::vector<PipelineDiagnostic> diagnostics_;
};

}  // namespace cghf
