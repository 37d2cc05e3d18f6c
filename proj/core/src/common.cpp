#include "cghf/common.hpp"

#include <charconv>
#include <cmath>

namespace cghf {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::MalformedTopic: return "MalformedTopic";
        case ErrorCode::MalformedPattern: return "MalformedPattern";
        case ErrorCode::SeqRegression: return "SeqRegression";
        case ErrorCode::UnknownHandle: return "UnknownHandle";
        case ErrorCode::SelfFederation: return "SelfFederation";
        case ErrorCode::TimestampRegression: return "TimestampRegression";
        case ErrorCode::InsufficientSamples: return "InsufficientSamples";
        case ErrorCode::DivisionByZero: return "DivisionByZero";
        case ErrorCode::UnknownStream: return "UnknownStream";
        case ErrorCode::CycleBudgetExceeded: return "CycleBudgetExceeded";
        case ErrorCode::Unauthorized: return "Unauthorized";
        case ErrorCode::ScopeViolation: return "ScopeViolation";
        case ErrorCode::ValidationFailed: return "ValidationFailed";
        case ErrorCode::UndeclaredStream: return "UndeclaredStream";
        case ErrorCode::InvalidTopology: return "InvalidTopology";
        case ErrorCode::RuleLoadError: return "RuleLoadError";
        case ErrorCode::InfeasibleAction: return "InfeasibleAction";
        case ErrorCode::BadRequest: return "BadRequest";
    }
    return "Unknown";
}

json value_to_json(const Value& v) {
    return std::visit([](const auto& x) { return json(x); }, v);
}

Value value_from_json(const json& j) {
    if (j.is_boolean()) return j.get<bool>();
    if (j.is_number()) return j.get<double>();
    if (j.is_string()) return j.get<std::string>();
    throw Error(ErrorCode::BadRequest, "expected a scalar, got " + j.dump());
}

std::string format_double(double d) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, d);
    return std::string(buf, res.ptr);
}

std::string value_to_string(const Value& v) {
    if (auto b = std::get_if<bool>(&v)) return *b ? "true" : "false";
    if (auto d = std::get_if<double>(&v)) return format_double(*d);
    return json(std::get<std::string>(v)).dump();
}

}  // namespace cghf
