#include "cghf/inference.hpp"

#include <algorithm>

namespace cghf {

std::string binding_fingerprint(const Bindings& b) {
    std::string out;
    for (const auto& [name, value] : b) {
        out += name;
        out += '=';
        out += value_to_string(value);
        out += ';';
    }
    return out;
}

bool fires_before(const Activation& a, const Activation& b) {
    if (a.priority != b.priority) return a.priority > b.priority;
    if (a.newest != b.newest) return a.newest > b.newest;
    if (a.rule != b.rule) return a.rule < b.rule;
    return a.fingerprint < b.fingerprint;
}

std::vector<Activation> resolve(std::vector<Activation> agenda) {
    std::sort(agenda.begin(), agenda.end(), fires_before);
    return agenda;
}

json context_payload(const Context& c) {
    json fields = json::object();
    for (const auto& [k, v] : c.fields) fields[k] = value_to_json(v);
    return json{{"fields", fields}, {"rule", c.rule}, {"matched_facts", c.matched_facts}, {"ttl_ms", c.ttl}};
}

Context context_from_envelope(const Envelope& env) {
    Context c;
    c.topic = env.topic;
    c.produced_at = env.timestamp;
    c.msg_id = env.msg_id;
    const auto& p = env.payload;
    if (p.contains("fields") && p["fields"].is_object())
        for (const auto& [k, v] : p["fields"].items()) c.fields[k] = value_from_json(v);
    c.rule = p.value("rule", std::string{});
    c.matched_facts = p.value("matched_facts", std::vector<std::string>{});
    c.ttl = p.value("ttl_ms", env.ttl.value_or(0));
    return c;
}

json to_json(const Context& c) {
    auto j = context_payload(c);
    j["topic"] = c.topic;
    j["produced_at"] = c.produced_at;
    j["msg_id"] = c.msg_id;
    return j;
}

// ---- KnowledgeBase ---------------------------------------------------------------------

std::optional<std::string> KnowledgeBase::assert_fact(Fact fact) {
    auto& slot = by_attr_[fact.attribute];
    auto it = slot.find(fact.subject);
    if (it == slot.end()) {
        ++count_;
        slot.emplace(fact.subject, std::move(fact));
        return std::nullopt;
    }
    auto old = std::move(it->second.fact_id);
    it->second = std::move(fact);
    return old;
}

std::vector<std::string> KnowledgeBase::retract_expired(Millis now) {
    std::vector<std::string> removed;
    for (auto& [attr, slot] : by_attr_) {
        for (auto it = slot.begin(); it != slot.end();) {
            if (it->second.expired_at(now)) {
                removed.push_back(it->second.fact_id);
                it = slot.erase(it);
                --count_;
            } else {
                ++it;
            }
        }
    }
    return removed;
}

const Fact* KnowledgeBase::find(const std::string& subject, const std::string& attribute) const {
    auto a = by_attr_.find(attribute);
    if (a == by_attr_.end()) return nullptr;
    auto s = a->second.find(subject);
    return s == a->second.end() ? nullptr : &s->second;
}

std::vector<Fact> KnowledgeBase::facts() const {
    std::vector<Fact> out;
    out.reserve(count_);
    for (const auto& [attr, slot] : by_attr_)
        for (const auto& [subj, f] : slot) out.push_back(f);
    return out;
}

void KnowledgeBase::add_rule(Rule rule) {
    remove_rule(rule.name);
    rules_.push_back(std::move(rule));
}

bool KnowledgeBase::remove_rule(const std::string& name) {
    auto it = std::find_if(rules_.begin(), rules_.end(), [&](const Rule& r) { return r.name == name; });
    if (it == rules_.end()) return false;
    rules_.erase(it);
    for (auto r = refraction_.begin(); r != refraction_.end();) {
        r = std::get<0>(*r) == name ? refraction_.erase(r) : std::next(r);
    }
    return true;
}

const Rule* KnowledgeBase::find_rule(const std::string& name) const {
    auto it = std::find_if(rules_.begin(), rules_.end(), [&](const Rule& r) { return r.name == name; });
    return it == rules_.end() ? nullptr : &*it;
}

bool KnowledgeBase::refracted(const Activation& a) const {
    return refraction_.count(std::make_tuple(a.rule, a.fingerprint, a.newest)) != 0;
}

void KnowledgeBase::record_firing(const Activation& a) { refraction_.emplace(a.rule, a.fingerprint, a.newest); }

namespace {

// Unifies a pattern term with a fact field; binds the variable when unbound.
bool unify(const Term& t, const Value& v, Bindings& b, std::vector<std::string>& newly) {
    if (!t.is_var) return t.literal == v;
    auto it = b.find(t.var);
    if (it != b.end()) return it->second == v;
    b.emplace(t.var, v);
    newly.push_back(t.var);
    return true;
}

}  // namespace

void KnowledgeBase::match_rule(const Rule& rule, std::size_t idx, Millis now, Bindings& bindings,
                               std::vector<const Fact*>& matched, std::vector<Activation>& out,
                               std::vector<std::string>* diagnostics) const {
    if (idx == rule.event.size()) {
        if (rule.condition) {
            try {
                auto ok = evaluate(*rule.condition, bindings);
                if (!is_bool(ok)) throw EvalError("condition is not boolean");
                if (!std::get<bool>(ok)) return;
            } catch (const EvalError& e) {
                if (diagnostics) diagnostics->push_back("rule " + rule.name + ": " + e.what());
                return;
            }
        }
        Activation a;
        a.rule = rule.name;
        a.priority = rule.priority;
        a.bindings = bindings;
        for (const auto* f : matched) {
            a.matched_facts.push_back(f->fact_id);
            a.newest = std::max(a.newest, f->asserted_at);
        }
        a.fingerprint = binding_fingerprint(a.bindings);
        if (!refracted(a)) out.push_back(std::move(a));
        return;
    }

    const auto& p = rule.event[idx];
    auto slot = by_attr_.find(p.attribute);
    if (slot == by_attr_.end()) return;

    auto try_fact = [&](const Fact& f) {
        if (f.expired_at(now)) return;
        std::vector<std::string> newly;
        if (unify(p.subject, Value{f.subject}, bindings, newly) && unify(p.value, f.value, bindings, newly)) {
            bool alias_ok = true;
            if (p.alias) alias_ok = unify(Term::variable(*p.alias), Value{f.fact_id}, bindings, newly);
            if (alias_ok) {
                matched.push_back(&f);
                match_rule(rule, idx + 1, now, bindings, matched, out, diagnostics);
                matched.pop_back();
            }
        }
        for (const auto& n : newly) bindings.erase(n);
    };

    // Subject already known: direct lookup instead of a scan.
    std::optional<std::string> subject;
    if (!p.subject.is_var && is_string(p.subject.literal)) subject = std::get<std::string>(p.subject.literal);
    if (p.subject.is_var) {
        if (auto b = bindings.find(p.subject.var); b != bindings.end()) {
            if (!is_string(b->second)) return;
            subject = std::get<std::string>(b->second);
        }
    }
    if (!p.subject.is_var && !subject) return;
    if (subject) {
        if (auto f = slot->second.find(*subject); f != slot->second.end()) try_fact(f->second);
        return;
    }
    for (const auto& [subj, f] : slot->second) try_fact(f);
}

std::vector<Activation> KnowledgeBase::match(Millis now, std::vector<std::string>* diagnostics) const {
    std::vector<Activation> out;
    Bindings bindings;
    std::vector<const Fact*> matched;
    for (const auto& rule : rules_) match_rule(rule, 0, now, bindings, matched, out, diagnostics);
    return out;
}

// ---- Firing ----------------------------------------------------------------------------

void ContextPublisher::publish(Context& ctx) {
    Envelope env;
    env.topic = ctx.topic;
    env.source = source_;
    env.timestamp = ctx.produced_at;
    env.seq = ++seq_[ctx.topic];
    env.payload = context_payload(ctx);
    env.ttl = ctx.ttl;
    ctx.msg_id = bus_->publish(std::move(env)).msg_id;
}

namespace {

std::optional<std::string> instantiate_topic(const std::string& tmpl, const Bindings& b, std::string& why) {
    std::string out;
    std::string_view rest = tmpl;
    while (true) {
        auto pos = rest.find('/');
        auto seg = rest.substr(0, pos);
        std::string piece;
        if (!seg.empty() && seg.front() == '$') {
            auto it = b.find(std::string(seg.substr(1)));
            if (it == b.end()) {
                why = "unbound topic variable " + std::string(seg);
                return std::nullopt;
            }
            piece = is_string(it->second) ? std::get<std::string>(it->second) : value_to_string(it->second);
        } else {
            piece = std::string(seg);
        }
        if (!Topic::valid_segment(piece)) {
            why = "topic segment '" + piece + "' is not a valid segment";
            return std::nullopt;
        }
        out += piece;
        if (pos == std::string_view::npos) return out;
        out += '/';
        rest.remove_prefix(pos + 1);
    }
}

}  // namespace

CycleResult run_cycle(KnowledgeBase& kb, ContextPublisher* publisher, Millis now, std::size_t budget) {
    CycleResult result;
    while (true) {
        auto gone = kb.retract_expired(now);
        result.retracted.insert(result.retracted.end(), gone.begin(), gone.end());

        auto agenda = kb.match(now, &result.diagnostics);
        if (agenda.empty()) break;
        if (result.fired.size() >= budget) {
            result.error = ErrorCode::CycleBudgetExceeded;
            break;
        }
        auto head = *std::min_element(agenda.begin(), agenda.end(), fires_before);
        const Rule* rule = kb.find_rule(head.rule);
        kb.record_firing(head);

        for (const auto& action : rule->actions) {
            try {
                if (const auto* pub = std::get_if<PublishAction>(&action)) {
                    std::string why;
                    auto topic = instantiate_topic(pub->topic, head.bindings, why);
                    if (!topic) {
                        result.diagnostics.push_back("rule " + rule->name + ": " + why);
                        continue;
                    }
                    Context ctx;
                    ctx.topic = *topic;
                    for (const auto& f : pub->fields) ctx.fields[f.name] = evaluate(f.value, head.bindings);
                    ctx.produced_at = now;
                    ctx.ttl = rule->ttl;
                    ctx.rule = rule->name;
                    ctx.matched_facts = head.matched_facts;
                    if (publisher) publisher->publish(ctx);
                    result.contexts.push_back(std::move(ctx));
                } else {
                    const auto& a = std::get<AssertAction>(action);
                    auto subject = evaluate(a.subject, head.bindings);
                    if (!is_string(subject)) throw EvalError("asserted fact subject must be a string");
                    Fact f;
                    f.value = evaluate(a.value, head.bindings);
                    f.fact_id = rule->name + "@" + std::to_string(now) + "#" + std::to_string(kb.next_inferred_seq());
                    f.subject = std::get<std::string>(subject);
                    f.attribute = a.attribute;
                    f.asserted_at = now;
                    f.ttl = a.ttl;
                    f.provenance = {"rule:" + rule->name};
                    result.inferred_facts.push_back(f);
                    kb.assert_fact(std::move(f));
                }
            } catch (const EvalError& e) {
                result.diagnostics.push_back("rule " + rule->name + ": " + e.what());
            }
        }
        result.fired.push_back(std::move(head));
    }
    return result;
}

}  // namespace cghf
