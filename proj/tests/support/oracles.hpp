#pragma once

// Independent reference implementations used as test oracles, plus random generators.
// Nothing here calls into the code under test except for plain data types and
// value_to_string (canonical number formatting, needed for tie-break order).

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "cghf/expr.hpp"
#include "cghf/facts.hpp"
#include "cghf/rules.hpp"

namespace oracle {

using cghf::Bindings;
using cghf::Expr;
using cghf::Fact;
using cghf::Millis;
using cghf::Value;

// ---- Topics ---------------------------------------------------------------------------

inline std::vector<std::string> split(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == '/') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

inline bool match_from(const std::vector<std::string>& p, std::size_t i, const std::vector<std::string>& t, std::size_t j) {
    if (i == p.size()) return j == t.size();
    if (p[i] == "#") return true;
    if (j == t.size()) return false;
    if (p[i] != "*" && p[i] != t[j]) return false;
    return match_from(p, i + 1, t, j + 1);
}

inline bool topic_matches(const std::string& pattern, const std::string& topic) {
    return match_from(split(pattern), 0, split(topic), 0);
}

// ---- Aggregates -----------------------------------------------------------------------

using Series = std::vector<std::pair<Millis, double>>;

inline long double mean(const Series& s) {
    long double sum = 0;
    for (const auto& [t, v] : s) sum += v;
    return sum / static_cast<long double>(s.size());
}

// Textbook two-pass least squares in extended precision.
inline long double ols_slope(const Series& s) {
    long double tm = 0, vm = 0;
    for (const auto& [t, v] : s) {
        tm += t;
        vm += v;
    }
    tm /= s.size();
    vm /= s.size();
    long double sxy = 0, sxx = 0;
    for (const auto& [t, v] : s) {
        sxy += (t - tm) * (v - vm);
        sxx += (t - tm) * (t - tm);
    }
    return sxx == 0 ? 0 : sxy / sxx;
}

inline long double rate_of_change(const Series& s, Millis window, Millis now) {
    const Millis mid = now - window / 2;
    Series first, second;
    for (const auto& x : s) (x.first < mid ? first : second).push_back(x);
    return (mean(second) - mean(first)) / mean(first);
}

inline long double forecast(const Series& s, Millis horizon) { return s.back().second + ols_slope(s) * horizon; }

inline bool close_rel(long double a, long double b, long double rel) {
    long double scale = std::max<long double>(1.0L, std::max(std::fabs(a), std::fabs(b)));
    return std::fabs(a - b) <= rel * scale;
}

// ---- Expressions ----------------------------------------------------------------------

// Separate evaluator: nullopt stands for any evaluation error.
inline std::optional<Value> eval(const Expr& e, const Bindings& b) {
    using K = Expr::Kind;
    using Op = Expr::Op;
    if (e.kind == K::Literal) return e.literal;
    if (e.kind == K::Variable) {
        auto it = b.find(e.name);
        if (it == b.end()) return std::nullopt;
        return it->second;
    }
    if (e.kind == K::Unary) {
        auto v = eval(e.args[0], b);
        if (!v) return std::nullopt;
        if (e.op == Op::Not) {
            if (v->index() != 0) return std::nullopt;
            return Value{!std::get<bool>(*v)};
        }
        if (v->index() != 1) return std::nullopt;
        return Value{-std::get<double>(*v)};
    }
    if (e.op == Op::And || e.op == Op::Or) {
        auto l = eval(e.args[0], b);
        if (!l || l->index() != 0) return std::nullopt;
        bool lv = std::get<bool>(*l);
        if (e.op == Op::And && !lv) return Value{false};
        if (e.op == Op::Or && lv) return Value{true};
        auto r = eval(e.args[1], b);
        if (!r || r->index() != 0) return std::nullopt;
        return Value{std::get<bool>(*r)};
    }
    auto l = eval(e.args[0], b);
    if (!l) return std::nullopt;
    auto r = eval(e.args[1], b);
    if (!r) return std::nullopt;
    switch (e.op) {
        case Op::Eq: return Value{*l == *r};
        case Op::Ne: return Value{!(*l == *r)};
        case Op::Lt:
        case Op::Le:
        case Op::Gt:
        case Op::Ge: {
            int c;
            if (l->index() == 1 && r->index() == 1) {
                double x = std::get<double>(*l), y = std::get<double>(*r);
                c = x < y ? -1 : x > y ? 1 : 0;
            } else if (l->index() == 2 && r->index() == 2) {
                const auto& x = std::get<std::string>(*l);
                const auto& y = std::get<std::string>(*r);
                c = x < y ? -1 : x > y ? 1 : 0;
            } else {
                return std::nullopt;
            }
            if (e.op == Op::Lt) return Value{c < 0};
            if (e.op == Op::Le) return Value{c <= 0};
            if (e.op == Op::Gt) return Value{c > 0};
            return Value{c >= 0};
        }
        case Op::Add:
            if (l->index() == 2 && r->index() == 2) return Value{std::get<std::string>(*l) + std::get<std::string>(*r)};
            [[fallthrough]];
        case Op::Sub:
        case Op::Mul:
        case Op::Div: {
            if (l->index() != 1 || r->index() != 1) return std::nullopt;
            double x = std::get<double>(*l), y = std::get<double>(*r);
            if (e.op == Op::Add) return Value{x + y};
            if (e.op == Op::Sub) return Value{x - y};
            if (e.op == Op::Mul) return Value{x * y};
            if (y == 0) return std::nullopt;
            return Value{x / y};
        }
        default: return std::nullopt;
    }
}

inline std::optional<Value> eval(const cghf::Term& t, const Bindings& b) {
    if (!t.is_var) return t.literal;
    auto it = b.find(t.var);
    if (it == b.end()) return std::nullopt;
    return it->second;
}

// ---- Inference --------------------------------------------------------------------------

struct OContext {
    std::string topic;
    std::map<std::string, Value> fields;
    std::string rule;
    std::vector<std::string> matched_facts;
    bool operator==(const OContext&) const = default;
};

struct OInferred {
    std::string id;
    std::string subject;
    std::string attribute;
    Value value;
    bool operator==(const OInferred&) const = default;
};

struct OResult {
    std::vector<OContext> contexts;
    std::vector<OInferred> inferred;
    std::vector<std::tuple<std::string, std::string, Millis>> fired;  // rule, fingerprint, newest
    bool budget_exceeded = false;
};

struct OActivation {
    const cghf::Rule* rule;
    Bindings bindings;
    std::vector<std::string> facts;
    Millis newest = 0;
    std::string fingerprint;
};

inline std::string fingerprint(const Bindings& b) {
    std::string s;
    for (const auto& [k, v] : b) s += k + "=" + cghf::value_to_string(v) + ";";
    return s;
}

// Enumerates every combination of live facts per pattern, then filters.
class Inference {
public:
    explicit Inference(std::vector<cghf::Rule> rules) : rules_(std::move(rules)) {}

    void assert_fact(const Fact& f) {
        facts_.erase(std::remove_if(facts_.begin(), facts_.end(),
                                    [&](const Fact& g) { return g.subject == f.subject && g.attribute == f.attribute; }),
                     facts_.end());
        facts_.push_back(f);
    }

    std::vector<OActivation> activations(Millis now) const {
        std::vector<OActivation> out;
        for (const auto& r : rules_) {
            const std::size_t k = r.event.size();
            // per-pattern candidates by attribute and liveness
            std::vector<Candidates> cand(k);
            bool empty = false;
            for (std::size_t i = 0; i < k; ++i) {
                for (std::size_t j = 0; j < facts_.size(); ++j)
                    if (facts_[j].attribute == r.event[i].attribute && facts_[j].asserted_at + facts_[j].ttl >= now) {
                        cand[i].all.push_back(j);
                        cand[i].by_subject[facts_[j].subject].push_back(j);
                    }
                if (cand[i].all.empty()) empty = true;
            }
            if (empty) continue;
            std::vector<std::size_t> idx(k, 0);
            extend(r, cand, 0, idx, Bindings{}, out);
        }
        return out;
    }

    OResult run_cycle(Millis now, std::size_t budget) {
        OResult res;
        while (true) {
            facts_.erase(std::remove_if(facts_.begin(), facts_.end(), [&](const Fact& f) { return f.asserted_at + f.ttl < now; }),
                         facts_.end());
            auto acts = activations(now);
            if (acts.empty()) break;
            if (res.fired.size() >= budget) {
                res.budget_exceeded = true;
                break;
            }
            auto best = std::min_element(acts.begin(), acts.end(), [](const OActivation& a, const OActivation& b) {
                if (a.rule->priority != b.rule->priority) return a.rule->priority > b.rule->priority;
                if (a.newest != b.newest) return a.newest > b.newest;
                if (a.rule->name != b.rule->name) return a.rule->name < b.rule->name;
                return a.fingerprint < b.fingerprint;
            });
            OActivation head = *best;
            fired_.insert({head.rule->name, head.fingerprint, head.newest});
            res.fired.emplace_back(head.rule->name, head.fingerprint, head.newest);
            fire(head, now, res);
        }
        return res;
    }

private:
    struct Candidates {
        std::vector<std::size_t> all;
        std::map<std::string, std::vector<std::size_t>> by_subject;
    };

    // Nested-loop join: picks a fact for pattern i, drops the branch on the first conflicting binding.
    void extend(const cghf::Rule& r, const std::vector<Candidates>& cand, std::size_t i,
                std::vector<std::size_t>& idx, const Bindings& so_far, std::vector<OActivation>& out) const {
        if (i == r.event.size()) {
            finish(r, idx, so_far, out);
            return;
        }
        const auto& p = r.event[i];
        // A subject fixed by a literal or an earlier binding only needs that subject's facts.
        const Value* fixed = p.subject.is_var ? nullptr : &p.subject.literal;
        if (auto it = p.subject.is_var ? so_far.find(p.subject.var) : so_far.end(); it != so_far.end()) fixed = &it->second;
        static const std::vector<std::size_t> none;
        const std::vector<std::size_t>* pool = &cand[i].all;
        if (fixed) {
            auto hit = fixed->index() == 2 ? cand[i].by_subject.find(std::get<std::string>(*fixed)) : cand[i].by_subject.end();
            pool = hit == cand[i].by_subject.end() ? &none : &hit->second;
        }
        for (std::size_t j : *pool) {
            const Fact& f = facts_[j];
            Bindings b = so_far;
            if (!bind(p.subject, Value{f.subject}, b)) continue;
            if (!bind(p.value, f.value, b)) continue;
            if (p.alias && !bind(cghf::Term::variable(*p.alias), Value{f.fact_id}, b)) continue;
            idx[i] = j;
            extend(r, cand, i + 1, idx, b, out);
        }
    }

    void finish(const cghf::Rule& r, const std::vector<std::size_t>& idx, const Bindings& b, std::vector<OActivation>& out) const {
        std::vector<std::string> ids;
        Millis newest = 0;
        for (std::size_t i : idx) {
            ids.push_back(facts_[i].fact_id);
            newest = std::max(newest, facts_[i].asserted_at);
        }
        if (r.condition) {
            auto c = eval(*r.condition, b);
            if (!c || c->index() != 0 || !std::get<bool>(*c)) return;
        }
        OActivation a{&r, b, ids, newest, fingerprint(b)};
        if (fired_.count({r.name, a.fingerprint, a.newest})) return;
        out.push_back(std::move(a));
    }

    static bool bind(const cghf::Term& t, const Value& v, Bindings& b) {
        if (!t.is_var) return t.literal == v;
        auto [it, fresh] = b.emplace(t.var, v);
        return fresh || it->second == v;
    }

    void fire(const OActivation& a, Millis now, OResult& res) {
        for (const auto& action : a.rule->actions) {
            if (const auto* pub = std::get_if<cghf::PublishAction>(&action)) {
                std::string topic;
                bool ok = true;
                for (const auto& seg : split(pub->topic)) {
                    std::string piece = seg;
                    if (!seg.empty() && seg[0] == '$') {
                        auto it = a.bindings.find(seg.substr(1));
                        if (it == a.bindings.end()) {
                            ok = false;
                            break;
                        }
                        piece = it->second.index() == 2 ? std::get<std::string>(it->second) : cghf::value_to_string(it->second);
                    }
                    if (piece.empty() || piece.find_first_of("/*#") != std::string::npos) ok = false;
                    topic += (topic.empty() ? "" : "/") + piece;
                }
                if (!ok) continue;
                OContext c{topic, {}, a.rule->name, a.facts};
                for (const auto& f : pub->fields) {
                    auto v = eval(f.value, a.bindings);
                    if (!v) {
                        ok = false;
                        break;
                    }
                    c.fields[f.name] = *v;
                }
                if (ok) res.contexts.push_back(std::move(c));
            } else {
                const auto& as = std::get<cghf::AssertAction>(action);
                auto subj = eval(as.subject, a.bindings);
                if (!subj || subj->index() != 2) continue;
                auto val = eval(as.value, a.bindings);
                if (!val) continue;
                Fact f;
                f.fact_id = a.rule->name + "@" + std::to_string(now) + "#" + std::to_string(++inferred_seq_);
                f.subject = std::get<std::string>(*subj);
                f.attribute = as.attribute;
                f.value = *val;
                f.asserted_at = now;
                f.ttl = as.ttl;
                res.inferred.push_back({f.fact_id, f.subject, f.attribute, f.value});
                assert_fact(f);
            }
        }
    }

    std::vector<cghf::Rule> rules_;
    std::vector<Fact> facts_;
    std::set<std::tuple<std::string, std::string, Millis>> fired_;
    std::uint64_t inferred_seq_ = 0;
};

// ---- Random generators -------------------------------------------------------------------

class Gen {
public:
    explicit Gen(std::uint64_t seed) : rng_(seed) {}

    int uniform(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
    bool chance(double p) { return std::uniform_real_distribution<double>(0, 1)(rng_) < p; }
    double real(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
    template <class T>
    const T& pick(const std::vector<T>& v) {
        return v[static_cast<std::size_t>(uniform(0, static_cast<int>(v.size()) - 1))];
    }
    std::mt19937_64& rng() { return rng_; }

    std::string ident(const std::string& prefix, int n) { return prefix + std::to_string(uniform(0, n - 1)); }

    // Numbers that print and parse exactly.
    double number() {
        switch (uniform(0, 3)) {
            case 0: return uniform(0, 100);
            case 1: return uniform(-50, 50) / 8.0;
            case 2: return uniform(0, 1000) / 100.0;
            default: return uniform(1, 9) * 1e-3;
        }
    }

    std::string word() {
        static const std::vector<std::string> words = {"alpha", "beta", "gamma", "cell7", "ue_1", "GW-2", "x y", "Y"};
        return pick(words);
    }

    Value value() {
        switch (uniform(0, 2)) {
            case 0: return Value{chance(0.5)};
            case 1: return Value{number()};
            default: return Value{word()};
        }
    }

    Millis duration() {
        switch (uniform(0, 2)) {
            case 0: return uniform(1, 999);
            case 1: return uniform(1, 120) * 1000;
            default: return uniform(1, 30) * 60000;
        }
    }

    // Random expression over `vars`; depth-limited.
    Expr expr(const std::vector<std::string>& vars, int depth) {
        using Op = Expr::Op;
        if (depth <= 0 || chance(0.3)) {
            if (!vars.empty() && chance(0.5)) return Expr::var(pick(vars));
            return Expr::lit(value());
        }
        int k = uniform(0, 13);
        if (k == 0) return Expr::unary(Op::Not, expr(vars, depth - 1));
        if (k == 1) return Expr::unary(Op::Neg, expr(vars, depth - 1));
        static const std::vector<Op> bin = {Op::Or, Op::And, Op::Eq, Op::Ne, Op::Lt, Op::Le,
                                            Op::Gt, Op::Ge, Op::Add, Op::Sub, Op::Mul, Op::Div};
        return Expr::binary(pick(bin), expr(vars, depth - 1), expr(vars, depth - 1));
    }

    // Boolean-typed condition built from comparisons of variables and literals.
    Expr condition(const std::vector<std::string>& vars, int depth) {
        using Op = Expr::Op;
        if (depth <= 0 || chance(0.4)) {
            static const std::vector<Op> cmp = {Op::Eq, Op::Ne, Op::Lt, Op::Le, Op::Gt, Op::Ge};
            auto side = [&] { return !vars.empty() && chance(0.7) ? Expr::var(pick(vars)) : Expr::lit(value()); };
            return Expr::binary(pick(cmp), side(), side());
        }
        if (chance(0.2)) return Expr::unary(Op::Not, condition(vars, depth - 1));
        return Expr::binary(chance(0.5) ? Op::And : Op::Or, condition(vars, depth - 1), condition(vars, depth - 1));
    }

    cghf::Term term(const std::vector<std::string>& vars) {
        if (chance(0.6)) return cghf::Term::variable(pick(vars));
        return cghf::Term::of(value());
    }

    // Structurally arbitrary RuleSet (not necessarily valid against a model).
    cghf::RuleSet ruleset() {
        cghf::RuleSet rs;
        const std::vector<std::string> vars = {"a", "b", "c", "value", "x1"};
        int ne = uniform(0, 2), nd = uniform(0, 2), nr = uniform(0, 3);
        for (int i = 0; i < ne; ++i) {
            cghf::EntityDecl e;
            e.name = "Kind" + std::to_string(i);
            int na = uniform(1, 3);
            for (int j = 0; j < na; ++j) {
                cghf::AttributeDecl a;
                a.name = "attr" + std::to_string(i) + "_" + std::to_string(j);
                a.type = static_cast<cghf::ValueType>(uniform(0, 3));
                if (chance(0.4)) a.unit = pick(std::vector<std::string>{"ms", "Mbps", "%", "load ratio"});
                a.is_static = chance(0.5);
                e.attributes.push_back(a);
            }
            rs.entities.push_back(e);
        }
        for (int i = 0; i < nd; ++i) {
            cghf::FactDefinition d;
            d.name = "def" + std::to_string(i);
            d.stream = pick(std::vector<std::string>{"raw/cell/{cell}/load", "raw/gw/GW1/jitter", "raw/{a}/{b}/x", "raw/t"});
            d.fn = static_cast<cghf::AggregateFn>(uniform(0, 3));
            d.window = duration();
            if (d.fn == cghf::AggregateFn::Forecast && chance(0.5)) d.horizon = duration();
            int nc = uniform(1, 3);
            for (int j = 0; j < nc; ++j) {
                cghf::ClassifierEntry c;
                c.predicate = condition({"value"}, 2);
                c.subject = term({"a", "b", "cell"});
                c.attribute = "attr_" + std::to_string(j);
                c.value = expr({"value"}, 2);
                d.classifier.push_back(c);
            }
            d.ttl = duration();
            if (chance(0.4)) d.reemit = duration();
            rs.factdefs.push_back(d);
        }
        for (int i = 0; i < nr; ++i) {
            cghf::Rule r;
            r.name = "rule" + std::to_string(i);
            r.priority = uniform(0, 50);
            r.ttl = duration();
            int np = uniform(1, 3);
            for (int j = 0; j < np; ++j) {
                cghf::FactPattern p;
                p.subject = term(vars);
                p.attribute = "attr_" + std::to_string(uniform(0, 4));
                p.value = term(vars);
                if (chance(0.2)) p.alias = "f" + std::to_string(j);
                r.event.push_back(p);
            }
            if (chance(0.6)) r.condition = expr(vars, 3);
            int na = uniform(1, 2);
            for (int j = 0; j < na; ++j) {
                if (chance(0.6)) {
                    cghf::PublishAction pub;
                    pub.topic = pick(std::vector<std::string>{"context/x/$a", "context/congestion/Y", "context/$a/$b", "context/q"});
                    int nf = uniform(1, 3);
                    for (int k = 0; k < nf; ++k) pub.fields.push_back({"f" + std::to_string(k), expr(vars, 2)});
                    r.actions.push_back(pub);
                } else {
                    cghf::AssertAction as;
                    as.subject = term(vars);
                    as.attribute = "derived_" + std::to_string(j);
                    as.value = expr(vars, 2);
                    as.ttl = duration();
                    r.actions.push_back(as);
                }
            }
            rs.rules.push_back(r);
        }
        return rs;
    }

    // Small value pool so that joins actually succeed.
    Value kb_value() {
        static const std::vector<Value> pool = {Value{1.0}, Value{2.0}, Value{std::string("x")}, Value{std::string("s1")},
                                                Value{true}};
        return pick(pool);
    }

    std::vector<Fact> kb_facts(int n, Millis now) {
        std::vector<Fact> out;
        for (int i = 0; i < n; ++i) {
            Fact f;
            f.fact_id = "f" + std::to_string(i);
            f.subject = ident("s", 5);
            f.attribute = ident("a", 4);
            f.value = kb_value();
            f.asserted_at = uniform(0, static_cast<int>(now));
            f.ttl = uniform(1, 2 * static_cast<int>(now));
            out.push_back(f);
        }
        return out;
    }

    // Rules over attributes a0..a3. Assert actions feed the same attributes back, so chains
    // (and occasionally loops that hit the budget) occur.
    std::vector<cghf::Rule> kb_rules(int n) {
        std::vector<cghf::Rule> out;
        const std::vector<std::string> subj_vars = {"s", "t"};
        const std::vector<std::string> val_vars = {"v", "w"};
        for (int i = 0; i < n; ++i) {
            cghf::Rule r;
            r.name = "r" + std::to_string(i);
            r.priority = uniform(0, 3);
            r.ttl = 1000;
            std::vector<std::string> bound;
            auto note = [&](const cghf::Term& t) {
                if (t.is_var && std::find(bound.begin(), bound.end(), t.var) == bound.end()) bound.push_back(t.var);
            };
            int np = uniform(1, 3);
            for (int j = 0; j < np; ++j) {
                cghf::FactPattern p;
                p.subject = j == 0 || chance(0.8) ? cghf::Term::variable(pick(subj_vars)) : cghf::Term::of(Value{ident("s", 5)});
                p.attribute = ident("a", 4);
                p.value = chance(0.6) ? cghf::Term::variable(pick(val_vars)) : cghf::Term::of(kb_value());
                if (chance(0.15)) p.alias = "id" + std::to_string(j);
                note(p.subject);
                note(p.value);
                if (p.alias) bound.push_back(*p.alias);
                r.event.push_back(p);
            }
            if (chance(0.5)) r.condition = condition(bound, 2);
            int na = uniform(1, 2);
            for (int j = 0; j < na; ++j) {
                if (chance(0.7)) {
                    cghf::PublishAction pub;
                    const std::string& seg = pick(bound);
                    pub.topic = "context/" + r.name + "/$" + seg;
                    int nf = uniform(1, 2);
                    for (int k = 0; k < nf; ++k) pub.fields.push_back({"f" + std::to_string(k), expr(bound, 2)});
                    r.actions.push_back(pub);
                } else {
                    cghf::AssertAction as;
                    as.subject = cghf::Term::variable(pick(bound));
                    as.attribute = ident("a", 4);
                    as.value = chance(0.5) ? Expr::lit(kb_value()) : expr(bound, 1);
                    as.ttl = uniform(1, 100);
                    r.actions.push_back(as);
                }
            }
            out.push_back(r);
        }
        return out;
    }

private:
    std::mt19937_64 rng_;
};

}  // namespace oracle
