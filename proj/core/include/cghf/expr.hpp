#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "cghf/common.hpp"

namespace cghf {

/// Position in rule-language source (1-based). Compares equal to every other
/// location so that structural equality of syntax trees ignores layout.
struct SourceLoc {
    int line = 0;
    int col = 0;

    friend bool operator==(const SourceLoc&, const SourceLoc&) { return true; }
};

/// Variable name (without the leading `$`) → bound value.
using Bindings = std::map<std::string, Value>;

struct Expr {
    enum class Kind { Literal, Variable, Unary, Binary };
    enum class Op { Or, And, Not, Neg, Eq, Ne, Lt, Le, Gt, Ge, Add, Sub, Mul, Div };

    Kind kind = Kind::Literal;
    Value literal = false;
    std::string name;
    Op op = Op::Or;
    std::vector<Expr> args;
    SourceLoc loc;

    static Expr lit(Value v, SourceLoc loc = {});
    static Expr var(std::string name, SourceLoc loc = {});
    static Expr unary(Op op, Expr operand, SourceLoc loc = {});
    static Expr binary(Op op, Expr lhs, Expr rhs, SourceLoc loc = {});

    bool operator==(const Expr&) const = default;
};

/// A pattern slot: either a literal value or a `$variable`.
struct Term {
    bool is_var = false;
    std::string var;
    Value literal = false;
    SourceLoc loc;

    static Term of(Value v, SourceLoc loc = {}) { return Term{false, {}, std::move(v), loc}; }
    static Term variable(std::string name, SourceLoc loc = {}) { return Term{true, std::move(name), false, loc}; }

    bool operator==(const Term&) const = default;
};

class EvalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Throws EvalError on unbound variables, type mismatches and division by zero.
Value evaluate(const Expr& e, const Bindings& bindings);
Value evaluate(const Term& t, const Bindings& bindings);

/// Every variable reference in `e`, in source order.
void collect_variables(const Expr& e, std::vector<std::pair<std::string, SourceLoc>>& out);

std::string_view op_symbol(Expr::Op op);
/// Binding strength; higher binds tighter.
int precedence(Expr::Op op);

}  // namespace cghf
