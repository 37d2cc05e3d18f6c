#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "cghf/rules.hpp"

namespace cghf {

void RuleSet::append(const RuleSet& other) {
    entities.insert(entities.end(), other.entities.begin(), other.entities.end());
    factdefs.insert(factdefs.end(), other.factdefs.begin(), other.factdefs.end());
    rules.insert(rules.end(), other.rules.begin(), other.rules.end());
}

std::string ParseError::message() const {
    std::string out = std::to_string(line) + ":" + std::to_string(col) + ": expected ";
    for (std::size_t i = 0; i < expected.size(); ++i) {
        if (i) out += i + 1 == expected.size() ? " or " : ", ";
        out += expected[i];
    }
    out += ", found " + found;
    return out;
}

namespace {

enum class Tok { Ident, Var, String, Number, Duration, Punct, End, Bad };

struct Token {
    Tok kind = Tok::End;
    std::string text;
    double number = 0;
    Millis duration = 0;
    int line = 1;
    int col = 1;

    SourceLoc loc() const { return SourceLoc{line, col}; }
};

bool ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

class Lexer {
public:
    explicit Lexer(std::string_view src) : src_(src) {}

    std::vector<Token> run() {
        std::vector<Token> out;
        while (true) {
            skip_space();
            Token t;
            t.line = line_;
            t.col = col_;
            if (pos_ >= src_.size()) {
                t.kind = Tok::End;
                t.text = "end of input";
                out.push_back(t);
                return out;
            }
            char c = src_[pos_];
            if (ident_start(c)) {
                t.kind = Tok::Ident;
                t.text = take_while(ident_char);
            } else if (c == '$') {
                advance();
                if (pos_ < src_.size() && ident_start(src_[pos_])) {
                    t.kind = Tok::Var;
                    t.text = take_while(ident_char);
                } else {
                    t.kind = Tok::Bad;
                    t.text = "'$' without a variable name";
                }
            } else if (c == '"') {
                lex_string(t);
            } else if (std::isdigit(static_cast<unsigned char>(c))) {
                lex_number(t);
            } else {
                lex_punct(t);
            }
            out.push_back(std::move(t));
        }
    }

private:
    void advance() {
        if (src_[pos_] == '\n') {
            ++line_;
            col_ = 1;
        } else {
            ++col_;
        }
        ++pos_;
    }

    void skip_space() {
        while (pos_ < src_.size()) {
            char c = src_[pos_];
            if (c == '#') {
                while (pos_ < src_.size() && src_[pos_] != '\n') advance();
            } else if (std::isspace(static_cast<unsigned char>(c))) {
                advance();
            } else {
                break;
            }
        }
    }

    template <class Pred>
    std::string take_while(Pred p) {
        auto start = pos_;
        while (pos_ < src_.size() && p(src_[pos_])) advance();
        return std::string(src_.substr(start, pos_ - start));
    }

    void lex_string(Token& t) {
        advance();
        std::string out;
        while (pos_ < src_.size() && src_[pos_] != '"' && src_[pos_] != '\n') {
            char c = src_[pos_];
            if (c == '\\' && pos_ + 1 < src_.size()) {
                advance();
                char e = src_[pos_];
                switch (e) {
                    case 'n': out += '\n'; break;
                    case 't': out += '\t'; break;
                    case '"': out += '"'; break;
                    case '\\': out += '\\'; break;
                    default:
                        t.kind = Tok::Bad;
                        t.text = std::string("unknown escape '\\") + e + "'";
                        advance();
                        return;
                }
                advance();
            } else {
                out += c;
                advance();
            }
        }
        if (pos_ >= src_.size() || src_[pos_] != '"') {
            t.kind = Tok::Bad;
            t.text = "unterminated string";
            return;
        }
        advance();
        t.kind = Tok::String;
        t.text = std::move(out);
    }

    void lex_number(Token& t) {
        auto start = pos_;
        auto digits = [&] {
            while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) advance();
        };
        digits();
        if (pos_ + 1 < src_.size() && src_[pos_] == '.' && std::isdigit(static_cast<unsigned char>(src_[pos_ + 1]))) {
            advance();
            digits();
        }
        if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
            auto save = std::make_tuple(pos_, line_, col_);
            advance();
            if (pos_ < src_.size() && (src_[pos_] == '+' || src_[pos_] == '-')) advance();
            if (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) {
                digits();
            } else {
                std::tie(pos_, line_, col_) = save;
            }
        }
        auto numtext = src_.substr(start, pos_ - start);
        double value = 0;
        std::from_chars(numtext.data(), numtext.data() + numtext.size(), value);

        auto suffix = take_while(ident_char);
        if (suffix.empty()) {
            t.kind = Tok::Number;
            t.text = std::string(numtext);
            t.number = value;
            return;
        }
        double scale = suffix == "ms" ? 1.0 : suffix == "s" ? 1000.0 : suffix == "min" ? 60000.0 : 0.0;
        double ms = value * scale;
        t.text = std::string(numtext) + suffix;
        if (scale == 0.0 || ms != std::floor(ms) || ms > 9.0e15) {
            t.kind = Tok::Bad;
            t.text = "invalid duration '" + t.text + "'";
            return;
        }
        t.kind = Tok::Duration;
        t.duration = static_cast<Millis>(ms);
    }

    void lex_punct(Token& t) {
        static constexpr std::string_view two[] = {"==", "!=", "<=", ">="};
        for (auto op : two) {
            if (src_.substr(pos_, 2) == op) {
                advance();
                advance();
                t.kind = Tok::Punct;
                t.text = std::string(op);
                return;
            }
        }
        char c = src_[pos_];
        advance();
        if (std::string_view("{}(),:<>+-*/").find(c) != std::string_view::npos) {
            t.kind = Tok::Punct;
            t.text = std::string(1, c);
        } else {
            t.kind = Tok::Bad;
            t.text = std::string("unexpected character '") + c + "'";
        }
    }

    std::string_view src_;
    std::size_t pos_ = 0;
    int line_ = 1;
    int col_ = 1;
};

struct Failure {};

class Parser {
public:
    explicit Parser(std::vector<Token> toks) : toks_(std::move(toks)) {}

    ParseResult run() {
        RuleSet rs;
        while (peek().kind != Tok::End) {
            try {
                if (is_word("entity")) {
                    rs.entities.push_back(entity());
                } else if (is_word("factdef")) {
                    rs.factdefs.push_back(factdef());
                } else if (is_word("rule")) {
                    rs.rules.push_back(rule());
                } else {
                    fail({"'entity'", "'factdef'", "'rule'"});
                }
            } catch (const Failure&) {
                recover();
            }
        }
        ParseResult result;
        if (errors_.empty()) {
            result.ruleset = std::move(rs);
        } else {
            result.errors = std::move(errors_);
        }
        return result;
    }

private:
    const Token& peek(std::size_t ahead = 0) const { return toks_[std::min(pos_ + ahead, toks_.size() - 1)]; }
    const Token& next() {
        const auto& t = peek();
        if (pos_ < toks_.size() - 1) ++pos_;
        return t;
    }

    bool is_word(std::string_view w) const { return peek().kind == Tok::Ident && peek().text == w; }
    bool is_punct(std::string_view p) const { return peek().kind == Tok::Punct && peek().text == p; }

    [[noreturn]] void fail(std::vector<std::string> expected) {
        const auto& t = peek();
        std::string found;
        switch (t.kind) {
            case Tok::End: found = "end of input"; break;
            case Tok::Bad: found = t.text; break;
            case Tok::String: found = "string \"" + t.text + "\""; break;
            case Tok::Var: found = "'$" + t.text + "'"; break;
            default: found = "'" + t.text + "'";
        }
        errors_.push_back(ParseError{t.line, t.col, std::move(expected), std::move(found)});
        throw Failure{};
    }

    void recover() {
        next();
        while (peek().kind != Tok::End) {
            const auto& t = peek();
            if (t.kind == Tok::Ident && t.col == 1 && (t.text == "entity" || t.text == "factdef" || t.text == "rule")) return;
            next();
        }
    }

    void word(std::string_view w) {
        if (!is_word(w)) fail({"'" + std::string(w) + "'"});
        next();
    }
    void punct(std::string_view p) {
        if (!is_punct(p)) fail({"'" + std::string(p) + "'"});
        next();
    }
    std::string ident() {
        if (peek().kind != Tok::Ident) fail({"identifier"});
        return next().text;
    }
    std::string string_lit() {
        if (peek().kind != Tok::String) fail({"string"});
        return next().text;
    }
    Millis duration() {
        if (peek().kind != Tok::Duration) fail({"duration (e.g. 500ms, 30s, 5min)"});
        return next().duration;
    }
    int integer() {
        bool neg = false;
        if (is_punct("-")) {
            neg = true;
            next();
        }
        const auto& t = peek();
        if (t.kind != Tok::Number || t.number != std::floor(t.number) || std::fabs(t.number) > 1e9) fail({"integer"});
        next();
        auto v = static_cast<int>(t.number);
        return neg ? -v : v;
    }

    // entity IDENT { (attr IDENT : TYPE [unit STRING] [static|dynamic])* }
    EntityDecl entity() {
        EntityDecl e;
        e.loc = peek().loc();
        word("entity");
        e.name = ident();
        punct("{");
        while (!is_punct("}")) {
            if (!is_word("attr")) fail({"'attr'", "'}'"});
            AttributeDecl a;
            a.loc = peek().loc();
            next();
            a.name = ident();
            punct(":");
            if (peek().kind != Tok::Ident || !value_type_from(peek().text)) fail({"'number'", "'string'", "'bool'", "'ref'"});
            a.type = *value_type_from(next().text);
            if (is_word("unit")) {
                next();
                a.unit = string_lit();
            }
            if (is_word("static")) {
                next();
                a.is_static = true;
            } else if (is_word("dynamic")) {
                next();
            }
            e.attributes.push_back(std::move(a));
        }
        next();
        return e;
    }

    // factdef IDENT { stream STRING aggregate FN window D [horizon D] (when expr emit fact(...))+ ttl D [reemit D] }
    FactDefinition factdef() {
        FactDefinition d;
        d.loc = peek().loc();
        word("factdef");
        d.name = ident();
        punct("{");
        word("stream");
        d.stream = string_lit();
        word("aggregate");
        if (peek().kind != Tok::Ident || !aggregate_fn_from(peek().text))
            fail({"'mean'", "'rate_of_change'", "'trend_slope'", "'forecast'"});
        d.fn = *aggregate_fn_from(next().text);
        word("window");
        d.window = duration();
        if (is_word("horizon")) {
            next();
            d.horizon = duration();
        }
        if (!is_word("when")) fail({"'horizon'", "'when'"});
        while (is_word("when")) {
            ClassifierEntry c;
            c.loc = peek().loc();
            next();
            c.predicate = expr();
            word("emit");
            word("fact");
            punct("(");
            c.subject = term();
            punct(",");
            c.attribute = string_lit();
            punct(",");
            c.value = expr();
            punct(")");
            d.classifier.push_back(std::move(c));
        }
        if (!is_word("ttl")) fail({"'when'", "'ttl'"});
        next();
        d.ttl = duration();
        if (is_word("reemit")) {
            next();
            d.reemit = duration();
        }
        if (!is_punct("}")) fail({"'reemit'", "'}'"});
        next();
        return d;
    }

    // rule IDENT priority INT ttl D { when pattern (and pattern)* [where expr] then action+ }
    Rule rule() {
        Rule r;
        r.loc = peek().loc();
        word("rule");
        r.name = ident();
        word("priority");
        r.priority = integer();
        word("ttl");
        r.ttl = duration();
        punct("{");
        word("when");
        r.event.push_back(pattern());
        while (is_word("and")) {
            next();
            r.event.push_back(pattern());
        }
        if (is_word("where")) {
            next();
            r.condition = expr();
        } else if (!is_word("then")) {
            fail({"'and'", "'where'", "'then'"});
        }
        word("then");
        r.actions.push_back(action());
        while (!is_punct("}")) {
            if (!is_word("publish") && !is_word("assert")) fail({"'publish'", "'assert'", "'}'"});
            r.actions.push_back(action());
        }
        next();
        return r;
    }

    FactPattern pattern() {
        FactPattern p;
        p.loc = peek().loc();
        word("fact");
        punct("(");
        p.subject = term();
        punct(",");
        p.attribute = string_lit();
        punct(",");
        p.value = term();
        punct(")");
        if (is_word("as")) {
            next();
            p.alias = ident();
        }
        return p;
    }

    Action action() {
        auto loc = peek().loc();
        if (is_word("publish")) {
            next();
            word("context");
            PublishAction a;
            a.loc = loc;
            a.topic = string_lit();
            punct("{");
            a.fields.push_back(field());
            while (is_punct(",")) {
                next();
                a.fields.push_back(field());
            }
            if (!is_punct("}")) fail({"','", "'}'"});
            next();
            return a;
        }
        if (is_word("assert")) {
            next();
            word("fact");
            AssertAction a;
            a.loc = loc;
            punct("(");
            a.subject = term();
            punct(",");
            a.attribute = string_lit();
            punct(",");
            a.value = expr();
            punct(",");
            word("ttl");
            a.ttl = duration();
            punct(")");
            return a;
        }
        fail({"'publish'", "'assert'"});
    }

    ContextField field() {
        ContextField f;
        f.name = ident();
        punct(":");
        f.value = expr();
        return f;
    }

    Term term() {
        const auto& t = peek();
        auto loc = t.loc();
        if (t.kind == Tok::Var) return Term::variable(next().text, loc);
        if (t.kind == Tok::String) return Term::of(next().text, loc);
        if (t.kind == Tok::Number) return Term::of(next().number, loc);
        if (is_punct("-") && peek(1).kind == Tok::Number) {
            next();
            return Term::of(-next().number, loc);
        }
        if (is_word("true") || is_word("false")) return Term::of(next().text == "true", loc);
        fail({"variable", "string", "number", "'true'", "'false'"});
    }

    // or < and < not < comparison < additive < multiplicative < unary minus
    Expr expr() { return or_expr(); }

    Expr or_expr() {
        auto lhs = and_expr();
        while (is_word("or")) {
            auto loc = next().loc();
            lhs = Expr::binary(Expr::Op::Or, std::move(lhs), and_expr(), loc);
        }
        return lhs;
    }

    Expr and_expr() {
        auto lhs = not_expr();
        while (is_word("and")) {
            auto loc = next().loc();
            lhs = Expr::binary(Expr::Op::And, std::move(lhs), not_expr(), loc);
        }
        return lhs;
    }

    Expr not_expr() {
        if (is_word("not")) {
            auto loc = next().loc();
            return Expr::unary(Expr::Op::Not, not_expr(), loc);
        }
        return comparison();
    }

    Expr comparison() {
        auto lhs = additive();
        static const std::pair<std::string_view, Expr::Op> ops[] = {{"==", Expr::Op::Eq}, {"!=", Expr::Op::Ne},
                                                                    {"<=", Expr::Op::Le}, {">=", Expr::Op::Ge},
                                                                    {"<", Expr::Op::Lt},  {">", Expr::Op::Gt}};
        for (auto [sym, op] : ops) {
            if (is_punct(sym)) {
                auto loc = next().loc();
                return Expr::binary(op, std::move(lhs), additive(), loc);
            }
        }
        return lhs;
    }

    Expr additive() {
        auto lhs = multiplicative();
        while (is_punct("+") || is_punct("-")) {
            const auto& t = next();
            auto op = t.text == "+" ? Expr::Op::Add : Expr::Op::Sub;
            lhs = Expr::binary(op, std::move(lhs), multiplicative(), t.loc());
        }
        return lhs;
    }

    Expr multiplicative() {
        auto lhs = unary();
        while (is_punct("*") || is_punct("/")) {
            const auto& t = next();
            auto op = t.text == "*" ? Expr::Op::Mul : Expr::Op::Div;
            lhs = Expr::binary(op, std::move(lhs), unary(), t.loc());
        }
        return lhs;
    }

    Expr unary() {
        if (is_punct("-")) {
            auto loc = next().loc();
            // `-3` is a negative literal, not a negation node
            if (peek().kind == Tok::Number) return Expr::lit(-next().number, loc);
            return Expr::unary(Expr::Op::Neg, unary(), loc);
        }
        return primary();
    }

    Expr primary() {
        const auto& t = peek();
        auto loc = t.loc();
        switch (t.kind) {
            case Tok::Number: return Expr::lit(next().number, loc);
            case Tok::String: return Expr::lit(next().text, loc);
            case Tok::Var: return Expr::var(next().text, loc);
            default: break;
        }
        if (is_word("true") || is_word("false")) return Expr::lit(next().text == "true", loc);
        if (is_punct("(")) {
            next();
            auto e = expr();
            punct(")");
            return e;
        }
        fail({"number", "string", "variable", "'true'", "'false'", "'('", "'-'", "'not'"});
    }

    std::vector<Token> toks_;
    std::size_t pos_ = 0;
    std::vector<ParseError> errors_;
};

}  // namespace

ParseResult parse_rules(std::string_view text) { return Parser(Lexer(text).run()).run(); }

ParseResult parse_rules_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::RuleLoadError, "cannot read " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_rules(ss.str());
}

}  // namespace cghf
