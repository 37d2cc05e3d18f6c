#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "cghf/common.hpp"
#include "cghf/expr.hpp"
#include "cghf/facts.hpp"

namespace cghf {

// ---- Context model ---------------------------------------------------------------------

enum class ValueType { Number, String, Bool, Ref };

std::string_view to_string(ValueType t);
std::optional<ValueType> value_type_from(std::string_view name);

struct AttributeDecl {
    std::string name;
    ValueType type = ValueType::Number;
    std::optional<std::string> unit;
    /// Static attributes are owned by the topology bootstrap; fact definitions may not emit them.
    bool is_static = false;
    SourceLoc loc;

    bool operator==(const AttributeDecl&) const = default;
};

struct EntityDecl {
    std::string name;
    std::vector<AttributeDecl> attributes;
    SourceLoc loc;

    bool operator==(const EntityDecl&) const = default;
};

// ---- Rules -----------------------------------------------------------------------------

/// fact(subject, "attribute", value) [as alias]. The alias binds `$alias` to the matched fact id.
struct FactPattern {
    Term subject;
    std::string attribute;
    Term value;
    std::optional<std::string> alias;
    SourceLoc loc;

    bool operator==(const FactPattern&) const = default;
};

struct ContextField {
    std::string name;
    Expr value;

    bool operator==(const ContextField&) const = default;
};

/// publish context "<topic template>" { field: expr, ... }. Template segments are either
/// literal topic segments or a whole `$variable`.
struct PublishAction {
    std::string topic;
    std::vector<ContextField> fields;
    SourceLoc loc;

    bool operator==(const PublishAction&) const = default;
};

/// assert fact(subject, "attribute", expr, ttl DURATION)
struct AssertAction {
    Term subject;
    std::string attribute;
    Expr value;
    Millis ttl = 0;
    SourceLoc loc;

    bool operator==(const AssertAction&) const = default;
};

using Action = std::variant<PublishAction, AssertAction>;

struct Rule {
    std::string name;
    int priority = 0;
    Millis ttl = 0;
    std::vector<FactPattern> event;
    std::optional<Expr> condition;
    std::vector<Action> actions;
    SourceLoc loc;

    bool operator==(const Rule&) const = default;
};

struct RuleSet {
    std::vector<EntityDecl> entities;
    std::vector<FactDefinition> factdefs;
    std::vector<Rule> rules;

    bool empty() const noexcept { return entities.empty() && factdefs.empty() && rules.empty(); }
    /// Appends everything from `other` (no de-duplication; validation reports clashes).
    void append(const RuleSet& other);

    bool operator==(const RuleSet&) const = default;
};

// ---- Parsing ---------------------------------------------------------------------------

struct ParseError {
    int line = 0;
    int col = 0;
    std::vector<std::string> expected;
    std::string found;

    std::string message() const;
};

struct ParseResult {
    std::optional<RuleSet> ruleset;
    std::vector<ParseError> errors;

    bool ok() const noexcept { return ruleset.has_value(); }
};

/// Parses `.rules` text. Never throws on bad input; errors carry position and expected tokens.
ParseResult parse_rules(std::string_view text);

/// Reads and parses a file; throws Error(RuleLoadError) if unreadable.
ParseResult parse_rules_file(const std::string& path);

/// Canonical text form; parse_rules(pretty_print(rs)) == rs for every valid RuleSet.
std::string pretty_print(const RuleSet& rs);
std::string pretty_print(const Expr& e);

/// Duration literal in the largest exact unit (`min`, `s`, `ms`).
std::string format_duration(Millis ms);

// ---- Validation ------------------------------------------------------------------------

/// Flat schema of entity kinds and their attributes.
class ContextModel {
public:
    ContextModel() = default;
    static ContextModel from(const RuleSet& rs);
    void add(const EntityDecl& entity);

    /// Declaration of `attribute` in any kind, or nullptr.
    const AttributeDecl* find_attribute(const std::string& attribute) const;
    const std::vector<EntityDecl>& entities() const noexcept { return entities_; }

private:
    std::vector<EntityDecl> entities_;
    std::map<std::string, AttributeDecl> attributes_;
};

enum class ValidationKind {
    UndeclaredAttribute,
    UnboundVariable,
    DuplicateRuleName,
    DuplicateFactDef,
    DuplicateEntity,
    DuplicateAttribute,
    MalformedTopic,
    StaticAttributeWrite,
    TypeMismatch,
    InvalidDuration,
    InvalidStream,
};

std::string_view to_string(ValidationKind k);

struct ValidationError {
    ValidationKind kind;
    SourceLoc loc;
    /// The offending name: attribute, `$variable`, rule name, topic, ...
    std::string subject;
    std::string message;
};

/// Empty iff attributes are declared, variables bound, names unique and topics well formed.
std::vector<ValidationError> validate(const RuleSet& rs, const ContextModel& model);

/// Convenience: errors from either stage, formatted as "line:col: message".
std::vector<std::string> lint(std::string_view text, const ContextModel& model);

}  // namespace cghf
