#include "cghf/expr.hpp"

namespace cghf {

Expr Expr::lit(Value v, SourceLoc loc) {
    Expr e;
    e.kind = Kind::Literal;
    e.literal = std::move(v);
    e.loc = loc;
    return e;
}

Expr Expr::var(std::string name, SourceLoc loc) {
    Expr e;
    e.kind = Kind::Variable;
    e.name = std::move(name);
    e.loc = loc;
    return e;
}

Expr Expr::unary(Op op, Expr operand, SourceLoc loc) {
    Expr e;
    e.kind = Kind::Unary;
    e.op = op;
    e.args.push_back(std::move(operand));
    e.loc = loc;
    return e;
}

Expr Expr::binary(Op op, Expr lhs, Expr rhs, SourceLoc loc) {
    Expr e;
    e.kind = Kind::Binary;
    e.op = op;
    e.args.push_back(std::move(lhs));
    e.args.push_back(std::move(rhs));
    e.loc = loc;
    return e;
}

std::string_view op_symbol(Expr::Op op) {
    switch (op) {
        case Expr::Op::Or: return "or";
        case Expr::Op::And: return "and";
        case Expr::Op::Not: return "not";
        case Expr::Op::Neg: return "-";
        case Expr::Op::Eq: return "==";
        case Expr::Op::Ne: return "!=";
        case Expr::Op::Lt: return "<";
        case Expr::Op::Le: return "<=";
        case Expr::Op::Gt: return ">";
        case Expr::Op::Ge: return ">=";
        case Expr::Op::Add: return "+";
        case Expr::Op::Sub: return "-";
        case Expr::Op::Mul: return "*";
        case Expr::Op::Div: return "/";
    }
    return "?";
}

int precedence(Expr::Op op) {
    switch (op) {
        case Expr::Op::Or: return 1;
        case Expr::Op::And: return 2;
        case Expr::Op::Not: return 3;
        case Expr::Op::Eq:
        case Expr::Op::Ne:
        case Expr::Op::Lt:
        case Expr::Op::Le:
        case Expr::Op::Gt:
        case Expr::Op::Ge: return 4;
        case Expr::Op::Add:
        case Expr::Op::Sub: return 5;
        case Expr::Op::Mul:
        case Expr::Op::Div: return 6;
        case Expr::Op::Neg: return 7;
    }
    return 0;
}

namespace {

bool as_bool(const Value& v, Expr::Op op) {
    if (auto b = std::get_if<bool>(&v)) return *b;
    throw EvalError("operator '" + std::string(op_symbol(op)) + "' expects a boolean, got " + value_to_string(v));
}

double as_number(const Value& v, Expr::Op op) {
    if (auto d = std::get_if<double>(&v)) return *d;
    throw EvalError("operator '" + std::string(op_symbol(op)) + "' expects a number, got " + value_to_string(v));
}

}  // namespace

Value evaluate(const Term& t, const Bindings& bindings) {
    if (!t.is_var) return t.literal;
    auto it = bindings.find(t.var);
    if (it == bindings.end()) throw EvalError("unbound variable $" + t.var);
    return it->second;
}

Value evaluate(const Expr& e, const Bindings& bindings) {
    using Op = Expr::Op;
    switch (e.kind) {
        case Expr::Kind::Literal: return e.literal;
        case Expr::Kind::Variable: {
            auto it = bindings.find(e.name);
            if (it == bindings.end()) throw EvalError("unbound variable $" + e.name);
            return it->second;
        }
        case Expr::Kind::Unary: {
            auto v = evaluate(e.args[0], bindings);
            if (e.op == Op::Not) return !as_bool(v, e.op);
            return -as_number(v, e.op);
        }
        case Expr::Kind::Binary: break;
    }

    // short-circuit
    if (e.op == Op::And) return as_bool(evaluate(e.args[0], bindings), e.op) && as_bool(evaluate(e.args[1], bindings), e.op);
    if (e.op == Op::Or) return as_bool(evaluate(e.args[0], bindings), e.op) || as_bool(evaluate(e.args[1], bindings), e.op);

    auto lhs = evaluate(e.args[0], bindings);
    auto rhs = evaluate(e.args[1], bindings);
    switch (e.op) {
        case Op::Eq: return lhs == rhs;
        case Op::Ne: return lhs != rhs;
        case Op::Lt:
        case Op::Le:
        case Op::Gt:
        case Op::Ge: {
            int cmp;
            if (is_number(lhs) && is_number(rhs)) {
                auto a = std::get<double>(lhs), b = std::get<double>(rhs);
                cmp = a < b ? -1 : (a > b ? 1 : 0);
            } else if (is_string(lhs) && is_string(rhs)) {
                cmp = std::get<std::string>(lhs).compare(std::get<std::string>(rhs));
            } else {
                throw EvalError("cannot order " + value_to_string(lhs) + " and " + value_to_string(rhs));
            }
            if (e.op == Op::Lt) return cmp < 0;
            if (e.op == Op::Le) return cmp <= 0;
            if (e.op == Op::Gt) return cmp > 0;
            return cmp >= 0;
        }
        case Op::Add:
            if (is_string(lhs) && is_string(rhs)) return std::get<std::string>(lhs) + std::get<std::string>(rhs);
            return as_number(lhs, e.op) + as_number(rhs, e.op);
        case Op::Sub: return as_number(lhs, e.op) - as_number(rhs, e.op);
        case Op::Mul: return as_number(lhs, e.op) * as_number(rhs, e.op);
        case Op::Div: {
            auto d = as_number(rhs, e.op);
            if (d == 0.0) throw EvalError("division by zero");
            return as_number(lhs, e.op) / d;
        }
        default: break;
    }
    throw EvalError("unsupported operator");
}

void collect_variables(const Expr& e, std::vector<std::pair<std::string, SourceLoc>>& out) {
    if (e.kind == Expr::Kind::Variable) out.emplace_back(e.name, e.loc);
    for (const auto& a : e.args) collect_variables(a, out);
}

}  // namespace cghf
