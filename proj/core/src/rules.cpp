#include <algorithm>
#include <limits>
#include <set>
#include <sstream>

#include "cghf/bus.hpp"
#include "cghf/rules.hpp"

namespace cghf {

std::string_view to_string(ValueType t) {
    switch (t) {
        case ValueType::Number: return "number";
        case ValueType::String: return "string";
        case ValueType::Bool: return "bool";
        case ValueType::Ref: return "ref";
    }
    return "?";
}

std::optional<ValueType> value_type_from(std::string_view name) {
    for (auto t : {ValueType::Number, ValueType::String, ValueType::Bool, ValueType::Ref})
        if (to_string(t) == name) return t;
    return std::nullopt;
}

std::string_view to_string(ValidationKind k) {
    switch (k) {
        case ValidationKind::UndeclaredAttribute: return "UndeclaredAttribute";
        case ValidationKind::UnboundVariable: return "UnboundVariable";
        case ValidationKind::DuplicateRuleName: return "DuplicateRuleName";
        case ValidationKind::DuplicateFactDef: return "DuplicateFactDef";
        case ValidationKind::DuplicateEntity: return "DuplicateEntity";
        case ValidationKind::DuplicateAttribute: return "DuplicateAttribute";
        case ValidationKind::MalformedTopic: return "MalformedTopic";
        case ValidationKind::StaticAttributeWrite: return "StaticAttributeWrite";
        case ValidationKind::TypeMismatch: return "TypeMismatch";
        case ValidationKind::InvalidDuration: return "InvalidDuration";
        case ValidationKind::InvalidStream: return "InvalidStream";
    }
    return "?";
}

// ---- Printing --------------------------------------------------------------------------

namespace {

std::string quote(const std::string& s) {
    std::string out = "\"";
    for (char c : s) {
        switch (c) {
            case '"': out += "\\\""; break;
            case '\\': out += "\\\\"; break;
            case '\n': out += "\\n"; break;
            case '\t': out += "\\t"; break;
            default: out += c;
        }
    }
    return out + '"';
}

std::string print_value(const Value& v) {
    if (auto s = std::get_if<std::string>(&v)) return quote(*s);
    return value_to_string(v);
}

std::string print_term(const Term& t) { return t.is_var ? "$" + t.var : print_value(t.literal); }

int expr_precedence(const Expr& e) {
    if (e.kind == Expr::Kind::Binary || e.kind == Expr::Kind::Unary) return precedence(e.op);
    return std::numeric_limits<int>::max();
}

bool is_comparison(Expr::Op op) { return precedence(op) == precedence(Expr::Op::Eq); }

std::string print_expr(const Expr& e) {
    auto wrap = [](const Expr& child, bool paren) { return paren ? "(" + print_expr(child) + ")" : print_expr(child); };
    switch (e.kind) {
        case Expr::Kind::Literal: return print_value(e.literal);
        case Expr::Kind::Variable: return "$" + e.name;
        case Expr::Kind::Unary: {
            const auto& arg = e.args[0];
            if (e.op == Expr::Op::Not) return "not " + wrap(arg, expr_precedence(arg) < precedence(Expr::Op::Not));
            bool paren = arg.kind == Expr::Kind::Binary || (arg.kind == Expr::Kind::Literal && is_number(arg.literal)) ||
                         (arg.kind == Expr::Kind::Unary && arg.op == Expr::Op::Not);
            return "-" + wrap(arg, paren);
        }
        case Expr::Kind::Binary: {
            int p = precedence(e.op);
            int lp = expr_precedence(e.args[0]);
            int rp = expr_precedence(e.args[1]);
            bool lparen = lp < p || (lp == p && is_comparison(e.op));
            bool rparen = rp <= p;
            return wrap(e.args[0], lparen) + " " + std::string(op_symbol(e.op)) + " " + wrap(e.args[1], rparen);
        }
    }
    return {};
}

}  // namespace

std::string format_duration(Millis ms) {
    if (ms != 0 && ms % 60000 == 0) return std::to_string(ms / 60000) + "min";
    if (ms != 0 && ms % 1000 == 0) return std::to_string(ms / 1000) + "s";
    return std::to_string(ms) + "ms";
}

std::string pretty_print(const Expr& e) { return print_expr(e); }

std::string pretty_print(const RuleSet& rs) {
    std::ostringstream out;
    bool first = true;
    auto gap = [&] {
        if (!first) out << '\n';
        first = false;
    };

    for (const auto& ent : rs.entities) {
        gap();
        out << "entity " << ent.name << " {\n";
        for (const auto& a : ent.attributes) {
            out << "    attr " << a.name << ": " << to_string(a.type);
            if (a.unit) out << " unit " << quote(*a.unit);
            out << (a.is_static ? " static" : " dynamic") << '\n';
        }
        out << "}\n";
    }

    for (const auto& d : rs.factdefs) {
        gap();
        out << "factdef " << d.name << " {\n";
        out << "    stream " << quote(d.stream) << '\n';
        out << "    aggregate " << to_string(d.fn) << " window " << format_duration(d.window);
        if (d.horizon) out << " horizon " << format_duration(*d.horizon);
        out << '\n';
        for (const auto& c : d.classifier) {
            out << "    when " << print_expr(c.predicate) << " emit fact(" << print_term(c.subject) << ", "
                << quote(c.attribute) << ", " << print_expr(c.value) << ")\n";
        }
        out << "    ttl " << format_duration(d.ttl) << '\n';
        if (d.reemit) out << "    reemit " << format_duration(*d.reemit) << '\n';
        out << "}\n";
    }

    for (const auto& r : rs.rules) {
        gap();
        out << "rule " << r.name << " priority " << r.priority << " ttl " << format_duration(r.ttl) << " {\n";
        for (std::size_t i = 0; i < r.event.size(); ++i) {
            const auto& p = r.event[i];
            out << (i == 0 ? "    when " : "     and ") << "fact(" << print_term(p.subject) << ", " << quote(p.attribute)
                << ", " << print_term(p.value) << ")";
            if (p.alias) out << " as " << *p.alias;
            out << '\n';
        }
        if (r.condition) out << "    where " << print_expr(*r.condition) << '\n';
        for (std::size_t i = 0; i < r.actions.size(); ++i) {
            out << (i == 0 ? "    then " : "         ");
            if (const auto* pub = std::get_if<PublishAction>(&r.actions[i])) {
                out << "publish context " << quote(pub->topic) << " {";
                for (std::size_t f = 0; f < pub->fields.size(); ++f) {
                    out << (f ? ", " : " ") << pub->fields[f].name << ": " << print_expr(pub->fields[f].value);
                }
                out << " }\n";
            } else {
                const auto& a = std::get<AssertAction>(r.actions[i]);
                out << "assert fact(" << print_term(a.subject) << ", " << quote(a.attribute) << ", " << print_expr(a.value)
                    << ", ttl " << format_duration(a.ttl) << ")\n";
            }
        }
        out << "}\n";
    }
    return out.str();
}

// ---- Context model ---------------------------------------------------------------------

ContextModel ContextModel::from(const RuleSet& rs) {
    ContextModel m;
    for (const auto& e : rs.entities) m.add(e);
    return m;
}

void ContextModel::add(const EntityDecl& entity) {
    entities_.push_back(entity);
    for (const auto& a : entity.attributes) attributes_.emplace(a.name, a);
}

const AttributeDecl* ContextModel::find_attribute(const std::string& attribute) const {
    auto it = attributes_.find(attribute);
    return it == attributes_.end() ? nullptr : &it->second;
}

// ---- Validation ------------------------------------------------------------------------

namespace {

bool type_accepts(ValueType t, const Value& v) {
    switch (t) {
        case ValueType::Number: return is_number(v);
        case ValueType::Bool: return is_bool(v);
        case ValueType::String:
        case ValueType::Ref: return is_string(v);
    }
    return false;
}

class Validator {
public:
    Validator(const RuleSet& rs, const ContextModel& model) : rs_(rs), model_(model) {}

    std::vector<ValidationError> run() {
        check_entities();
        std::set<std::string> names;
        for (const auto& d : rs_.factdefs) {
            if (!names.insert(d.name).second)
                add(ValidationKind::DuplicateFactDef, d.loc, d.name, "fact definition '" + d.name + "' defined twice");
            check_factdef(d);
        }
        names.clear();
        for (const auto& r : rs_.rules) {
            if (!names.insert(r.name).second)
                add(ValidationKind::DuplicateRuleName, r.loc, r.name, "rule '" + r.name + "' defined twice");
            check_rule(r);
        }
        return std::move(errors_);
    }

private:
    void add(ValidationKind kind, SourceLoc loc, std::string subject, std::string message) {
        errors_.push_back(ValidationError{kind, loc, std::move(subject), std::move(message)});
    }

    void check_entities() {
        std::set<std::string> kinds;
        for (const auto& e : rs_.entities) {
            if (!kinds.insert(e.name).second)
                add(ValidationKind::DuplicateEntity, e.loc, e.name, "entity '" + e.name + "' declared twice");
            std::set<std::string> attrs;
            for (const auto& a : e.attributes) {
                if (!attrs.insert(a.name).second)
                    add(ValidationKind::DuplicateAttribute, a.loc, a.name,
                        "attribute '" + a.name + "' declared twice in '" + e.name + "'");
            }
        }
    }

    const AttributeDecl* attribute(const std::string& name, SourceLoc loc) {
        const auto* decl = model_.find_attribute(name);
        if (!decl) add(ValidationKind::UndeclaredAttribute, loc, name, "attribute '" + name + "' is not declared");
        return decl;
    }

    void check_write(const std::string& attr, SourceLoc loc) {
        if (const auto* decl = attribute(attr, loc); decl && decl->is_static)
            add(ValidationKind::StaticAttributeWrite, loc, attr, "attribute '" + attr + "' is static (topology-owned)");
    }

    void check_literal(const AttributeDecl* decl, const Value& v, SourceLoc loc) {
        if (decl && !type_accepts(decl->type, v))
            add(ValidationKind::TypeMismatch, loc, decl->name,
                "attribute '" + decl->name + "' is " + std::string(to_string(decl->type)) + ", got " + value_to_string(v));
    }

    void require_bound(const std::string& var, SourceLoc loc, const std::set<std::string>& bound) {
        if (!bound.count(var)) add(ValidationKind::UnboundVariable, loc, "$" + var, "variable $" + var + " is not bound");
    }

    void require_bound(const Expr& e, const std::set<std::string>& bound) {
        std::vector<std::pair<std::string, SourceLoc>> vars;
        collect_variables(e, vars);
        for (const auto& [v, loc] : vars) require_bound(v, loc, bound);
    }

    void require_bound(const Term& t, const std::set<std::string>& bound) {
        if (t.is_var) require_bound(t.var, t.loc, bound);
    }

    void check_duration(Millis d, SourceLoc loc, const std::string& what) {
        if (d <= 0) add(ValidationKind::InvalidDuration, loc, what, what + " must be positive");
    }

    void check_factdef(const FactDefinition& d) {
        check_duration(d.window, d.loc, "window");
        check_duration(d.ttl, d.loc, "ttl");
        if (d.reemit && *d.reemit < 0) add(ValidationKind::InvalidDuration, d.loc, "reemit", "reemit must not be negative");
        if (d.horizon && *d.horizon < 0) add(ValidationKind::InvalidDuration, d.loc, "horizon", "horizon must not be negative");

        std::set<std::string> bound{"value"};
        bool stream_ok = !d.stream.empty();
        std::string_view rest = d.stream;
        while (stream_ok) {
            auto pos = rest.find('/');
            auto seg = rest.substr(0, pos);
            if (seg.size() >= 2 && seg.front() == '{' && seg.back() == '}') {
                auto name = std::string(seg.substr(1, seg.size() - 2));
                stream_ok = std::all_of(name.begin(), name.end(), [](char c) { return std::isalnum((unsigned char)c) || c == '_'; });
                bound.insert(name);
            } else {
                stream_ok = Topic::valid_segment(seg) && seg.find_first_of("{}") == std::string_view::npos;
            }
            if (pos == std::string_view::npos) break;
            rest.remove_prefix(pos + 1);
        }
        if (!stream_ok) add(ValidationKind::InvalidStream, d.loc, d.stream, "stream pattern '" + d.stream + "' is malformed");

        for (const auto& c : d.classifier) {
            require_bound(c.predicate, bound);
            require_bound(c.subject, bound);
            require_bound(c.value, bound);
            check_write(c.attribute, c.loc);
            if (c.value.kind == Expr::Kind::Literal) check_literal(model_.find_attribute(c.attribute), c.value.literal, c.loc);
        }
    }

    void check_rule(const Rule& r) {
        check_duration(r.ttl, r.loc, "ttl");
        std::set<std::string> bound;
        for (const auto& p : r.event) {
            const auto* decl = attribute(p.attribute, p.loc);
            if (!p.value.is_var) check_literal(decl, p.value.literal, p.value.loc);
            if (p.subject.is_var) bound.insert(p.subject.var);
            if (p.value.is_var) bound.insert(p.value.var);
            if (p.alias) bound.insert(*p.alias);
        }
        if (r.condition) require_bound(*r.condition, bound);
        for (const auto& action : r.actions) {
            if (const auto* pub = std::get_if<PublishAction>(&action)) {
                check_topic_template(pub->topic, pub->loc, bound);
                for (const auto& f : pub->fields) require_bound(f.value, bound);
            } else {
                const auto& a = std::get<AssertAction>(action);
                require_bound(a.subject, bound);
                require_bound(a.value, bound);
                check_duration(a.ttl, a.loc, "ttl");
                check_write(a.attribute, a.loc);
                if (a.value.kind == Expr::Kind::Literal) check_literal(model_.find_attribute(a.attribute), a.value.literal, a.loc);
            }
        }
    }

    void check_topic_template(const std::string& topic, SourceLoc loc, const std::set<std::string>& bound) {
        bool ok = !topic.empty();
        std::string_view rest = topic;
        while (ok) {
            auto pos = rest.find('/');
            auto seg = rest.substr(0, pos);
            if (!seg.empty() && seg.front() == '$') {
                auto name = std::string(seg.substr(1));
                ok = !name.empty();
                if (ok) require_bound(name, loc, bound);
            } else {
                ok = Topic::valid_segment(seg) && seg.find('$') == std::string_view::npos;
            }
            if (pos == std::string_view::npos) break;
            rest.remove_prefix(pos + 1);
        }
        if (!ok) add(ValidationKind::MalformedTopic, loc, topic, "context topic '" + topic + "' is malformed");
    }

    const RuleSet& rs_;
    const ContextModel& model_;
    std::vector<ValidationError> errors_;
};

}  // namespace

std::vector<ValidationError> validate(const RuleSet& rs, const ContextModel& model) { return Validator(rs, model).run(); }

std::vector<std::string> lint(std::string_view text, const ContextModel& model) {
    std::vector<std::string> out;
    auto parsed = parse_rules(text);
    if (!parsed.ok()) {
        for (const auto& e : parsed.errors) out.push_back(e.message());
        return out;
    }
    ContextModel merged = model;
    for (const auto& e : parsed.ruleset->entities) merged.add(e);
    for (const auto& e : validate(*parsed.ruleset, merged)) {
        out.push_back(std::to_string(e.loc.line) + ":" + std::to_string(e.loc.col) + ": " + std::string(to_string(e.kind)) +
                      ": " + e.message);
    }
    return out;
}

}  // namespace cghf
