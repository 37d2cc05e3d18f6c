#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>

#include <nlohmann/json.hpp>

namespace cghf {

using json = nlohmann::json;

/// Milliseconds on the simulation or wall clock.
using Millis = std::int64_t;

/// Validity that outlives any run (used for topology facts).
inline constexpr Millis kForever = Millis{1} << 52;

/// Scalar carried by facts, bindings and raw payload fields.
using Value = std::variant<bool, double, std::string>;

enum class ErrorCode {
    MalformedTopic,
    MalformedPattern,
    SeqRegression,
    UnknownHandle,
    SelfFederation,
    TimestampRegression,
    InsufficientSamples,
    DivisionByZero,
    UnknownStream,
    CycleBudgetExceeded,
    Unauthorized,
    ScopeViolation,
    ValidationFailed,
    UndeclaredStream,
    InvalidTopology,
    RuleLoadError,
    InfeasibleAction,
    BadRequest,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& detail)
        : std::runtime_error(std::string(to_string(code)) + ": " + detail), code_(code), detail_(detail) {}

    ErrorCode code() const noexcept { return code_; }
    const std::string& detail() const noexcept { return detail_; }

private:
    ErrorCode code_;
    std::string detail_;
};

json value_to_json(const Value& v);
/// Throws Error(BadRequest) for arrays, objects and null.
Value value_from_json(const json& j);

/// Canonical text: strings quoted, numbers in shortest round-trip form.
std::string value_to_string(const Value& v);

/// Shortest decimal that parses back to exactly `d`.
std::string format_double(double d);

inline bool is_number(const Value& v) { return std::holds_alternative<double>(v); }
inline bool is_string(const Value& v) { return std::holds_alternative<std::string>(v); }
inline bool is_bool(const Value& v) { return std::holds_alternative<bool>(v); }

}  // namespace cghf
