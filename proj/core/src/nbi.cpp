#include "cghf/nbi.hpp"

#include <algorithm>

namespace cghf::nbi {

namespace {

std::string join(const std::vector<std::string>& v, std::string_view sep) {
    std::string out;
    for (const auto& s : v) {
        if (!out.empty()) out += sep;
        out += s;
    }
    return out;
}

// A pattern is confined to context/ only when its first segment is the literal "context".
bool under_context(const TopicPattern& p) { return p.segments().front() == "context"; }

}  // namespace

ValidationFailed::ValidationFailed(std::vector<std::string> errors)
    : Error(ErrorCode::ValidationFailed, join(errors, "; ")), errors_(std::move(errors)) {}

Principal principal_from_json(const json& j) {
    try {
        Principal p{j.at("id").get<std::string>(), j.at("token").get<std::string>(),
                    TopicPattern::parse(j.at("publish_scope").get<std::string>()),
                    TopicPattern::parse(j.at("subscribe_scope").get<std::string>()), j.value("revoked", false)};
        return p;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::BadRequest, std::string("principal: ") + e.what());
    }
}

ServiceManifest manifest_from_json(const json& j) {
    try {
        ServiceManifest m;
        m.service = j.at("service").get<std::string>();
        for (const auto& s : j.value("streams", json::array())) {
            StreamDecl d;
            d.topic = s.at("topic").get<std::string>();
            d.unit = s.value("unit", std::string{});
            auto type = s.value("type", std::string("number"));
            auto t = value_type_from(type);
            if (!t) throw Error(ErrorCode::BadRequest, "stream type '" + type + "'");
            d.type = *t;
            m.streams.push_back(std::move(d));
        }
        m.context_topics = j.value("context_topics", std::vector<std::string>{});
        m.rules = j.value("rules", std::string{});
        return m;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::BadRequest, std::string("manifest: ") + e.what());
    }
}

json to_json(const ServiceManifest& m) {
    json streams = json::array();
    for (const auto& s : m.streams)
        streams.push_back({{"topic", s.topic}, {"unit", s.unit}, {"type", std::string(to_string(s.type))}});
    return json{{"service", m.service}, {"streams", streams}, {"context_topics", m.context_topics}, {"rules", m.rules}};
}

json to_json(const Registration& r) {
    return json{{"id", r.id},
                {"principal", r.principal_id},
                {"service", r.manifest.service},
                {"rules", r.rule_names},
                {"factdefs", r.factdef_names},
                {"status", r.status == Registration::Status::Active ? "active" : "revoked"}};
}

ExposureService::ExposureService(Node& node, Clock clock) : node_(&node), clock_(std::move(clock)) {}

void ExposureService::add_principal(Principal p) {
    static const auto facts = TopicPattern::parse("facts/#");
    static const auto context = TopicPattern::parse("context/#");
    if (p.allowed_publish_scope.overlaps(facts) || p.allowed_publish_scope.overlaps(context))
        throw Error(ErrorCode::ScopeViolation, p.id + ": publish scope '" + p.allowed_publish_scope.str() +
                                                   "' reaches facts/ or context/");
    std::lock_guard lk(mu_);
    for (const auto& [id, other] : principals_)
        if (other.token == p.token && id != p.id) throw Error(ErrorCode::BadRequest, "token already assigned to " + id);
    principals_.insert_or_assign(p.id, std::move(p));
}

void ExposureService::revoke_principal(const std::string& principal_id) {
    std::lock_guard lk(mu_);
    auto it = principals_.find(principal_id);
    if (it == principals_.end()) return;
    it->second.revoked = true;
    for (auto& [id, reg] : registrations_) {
        if (reg.principal_id != principal_id || reg.status != Registration::Status::Active) continue;
        reg.status = Registration::Status::Revoked;
        node_->uninstall(reg.rule_names, reg.factdef_names);
    }
    for (auto h = handle_owner_.begin(); h != handle_owner_.end();) {
        if (h->second == principal_id) {
            if (node_->bus().has_subscription(h->first)) node_->bus().unsubscribe(h->first);
            h = handle_owner_.erase(h);
        } else {
            ++h;
        }
    }
}

const Principal& ExposureService::auth_locked(std::string_view token) const {
    const Principal* found = nullptr;
    int hits = 0;
    for (const auto& [id, p] : principals_) {
        if (p.token == token) {
            found = &p;
            ++hits;
        }
    }
    if (hits != 1 || found->revoked || token.empty()) throw Error(ErrorCode::Unauthorized, "invalid or revoked token");
    return *found;
}

Principal ExposureService::authenticate(std::string_view token) const {
    std::lock_guard lk(mu_);
    return auth_locked(token);
}

Registration ExposureService::register_service(std::string_view token, const ServiceManifest& manifest) {
    std::lock_guard lk(mu_);
    const auto& p = auth_locked(token);

    for (const auto& s : manifest.streams) {
        auto topic = Topic::parse(s.topic);
        if (!p.allowed_publish_scope.matches(topic))
            throw Error(ErrorCode::ScopeViolation, "stream '" + s.topic + "' is outside publish scope '" +
                                                       p.allowed_publish_scope.str() + "'");
    }
    for (const auto& c : manifest.context_topics) {
        auto pattern = TopicPattern::parse(c);
        if (!under_context(pattern) || !p.allowed_subscribe_scope.covers(pattern))
            throw Error(ErrorCode::ScopeViolation, "context topic '" + c + "' is outside subscribe scope '" +
                                                       p.allowed_subscribe_scope.str() + "'");
    }

    auto parsed = parse_rules(manifest.rules);
    if (!parsed.ok()) {
        std::vector<std::string> msgs;
        for (const auto& e : parsed.errors) msgs.push_back(e.message());
        throw ValidationFailed(std::move(msgs));
    }
    if (!parsed.ruleset->entities.empty())
        throw ValidationFailed({"service manifests cannot declare entity kinds"});
    auto errors = node_->install(*parsed.ruleset);
    if (!errors.empty()) {
        std::vector<std::string> msgs;
        for (const auto& e : errors)
            msgs.push_back(std::to_string(e.loc.line) + ":" + std::to_string(e.loc.col) + ": " +
                           std::string(to_string(e.kind)) + ": " + e.message);
        throw ValidationFailed(std::move(msgs));
    }

    Registration reg;
    reg.id = "reg-" + std::to_string(next_registration_++);
    reg.principal_id = p.id;
    reg.manifest = manifest;
    for (const auto& r : parsed.ruleset->rules) reg.rule_names.push_back(r.name);
    for (const auto& d : parsed.ruleset->factdefs) reg.factdef_names.push_back(d.name);
    registrations_.emplace(reg.id, reg);
    return reg;
}

void ExposureService::revoke_registration(std::string_view token, const std::string& registration_id) {
    std::lock_guard lk(mu_);
    const auto& p = auth_locked(token);
    auto it = registrations_.find(registration_id);
    if (it == registrations_.end() || it->second.principal_id != p.id || it->second.status != Registration::Status::Active)
        throw Error(ErrorCode::UnknownHandle, "registration " + registration_id);
    auto& reg = it->second;
    reg.status = Registration::Status::Revoked;
    node_->uninstall(reg.rule_names, reg.factdef_names);
    for (auto h : reg.subscriptions) {
        if (node_->bus().has_subscription(h)) node_->bus().unsubscribe(h);
        handle_owner_.erase(h);
    }
    reg.subscriptions.clear();
}

PublishReceipt ExposureService::push_info(std::string_view token, Envelope env) {
    std::lock_guard lk(mu_);
    const auto& p = auth_locked(token);
    auto topic = Topic::parse(env.topic);
    if (!p.allowed_publish_scope.matches(topic))
        throw Error(ErrorCode::ScopeViolation, "'" + env.topic + "' is outside publish scope '" +
                                                   p.allowed_publish_scope.str() + "'");
    bool declared = std::any_of(registrations_.begin(), registrations_.end(), [&](const auto& kv) {
        const auto& reg = kv.second;
        return reg.principal_id == p.id && reg.status == Registration::Status::Active &&
               std::any_of(reg.manifest.streams.begin(), reg.manifest.streams.end(),
                           [&](const StreamDecl& s) { return s.topic == env.topic; });
    });
    if (!declared) throw Error(ErrorCode::UndeclaredStream, env.topic);
    if (!env.payload.is_object()) throw Error(ErrorCode::BadRequest, "payload must be an object");
    for (const auto& [k, v] : env.payload.items())
        if (!v.is_primitive() || v.is_null()) throw Error(ErrorCode::BadRequest, "payload field '" + k + "' is not a scalar");

    env.source = p.id;
    auto receipt = node_->bus().publish(std::move(env));
    audit_.push_back(AuditRecord{p.id, "push", topic.str(), receipt.msg_id});
    return receipt;
}

SubscriptionHandle ExposureService::subscribe_context(std::string_view token, std::string_view pattern_text) {
    std::lock_guard lk(mu_);
    const auto& p = auth_locked(token);
    auto pattern = TopicPattern::parse(pattern_text);
    if (!under_context(pattern) || !p.allowed_subscribe_scope.covers(pattern))
        throw Error(ErrorCode::ScopeViolation, "'" + pattern.str() + "' is outside subscribe scope '" +
                                                   p.allowed_subscribe_scope.str() + "' or not under context/");
    auto handle = node_->bus().subscribe(pattern, p.id, clock_());
    handle_owner_[handle] = p.id;
    for (auto& [id, reg] : registrations_) {
        if (reg.principal_id != p.id || reg.status != Registration::Status::Active) continue;
        bool covered = std::any_of(reg.manifest.context_topics.begin(), reg.manifest.context_topics.end(),
                                   [&](const std::string& c) { return TopicPattern::parse(c).covers(pattern); });
        if (covered) {
            reg.subscriptions.push_back(handle);
            break;
        }
    }
    return handle;
}

std::vector<Context> ExposureService::fetch(std::string_view token, SubscriptionHandle handle, std::size_t max_n) {
    std::lock_guard lk(mu_);
    const auto& p = auth_locked(token);
    auto owner = handle_owner_.find(handle);
    if (owner == handle_owner_.end() || owner->second != p.id) throw Error(ErrorCode::UnknownHandle, std::to_string(handle));
    std::vector<Context> out;
    for (const auto& env : node_->bus().poll(handle, max_n, clock_())) {
        if (!p.allowed_subscribe_scope.matches(env.topic)) continue;
        audit_.push_back(AuditRecord{p.id, "fetch", env.topic, env.msg_id});
        out.push_back(context_from_envelope(env));
    }
    return out;
}

std::vector<Registration> ExposureService::registrations() const {
    std::lock_guard lk(mu_);
    std::vector<Registration> out;
    for (const auto& [id, r] : registrations_) out.push_back(r);
    return out;
}

std::vector<AuditRecord> ExposureService::audit() const {
    std::lock_guard lk(mu_);
    return audit_;
}

json ExposureService::handle(const json& request) {
    try {
        if (!request.is_object() || !request.contains("op") || !request["op"].is_string())
            throw Error(ErrorCode::BadRequest, "request needs a string 'op'");
        const auto op = request["op"].get<std::string>();
        const auto token = request.value("token", std::string{});

        if (op == "auth") return json{{"ok", true}, {"principal", authenticate(token).id}};
        if (op == "register") {
            authenticate(token);
            auto reg = register_service(token, manifest_from_json(request.value("manifest", json::object())));
            return json{{"ok", true}, {"registration", to_json(reg)}};
        }
        if (op == "push") {
            authenticate(token);
            // source is overwritten with the principal id, so callers may omit it.
            auto env = request.value("envelope", json::object());
            if (env.is_object() && !env.contains("source")) env["source"] = "";
            auto receipt = push_info(token, envelope_from_json(env));
            return json{{"ok", true}, {"msg_id", receipt.msg_id}};
        }
        if (op == "subscribe") {
            auto handle = subscribe_context(token, request.value("pattern", std::string{}));
            return json{{"ok", true}, {"handle", handle}};
        }
        if (op == "fetch") {
            authenticate(token);
            if (!request.contains("handle") || !request["handle"].is_number_unsigned())
                throw Error(ErrorCode::BadRequest, "fetch needs an unsigned 'handle'");
            auto contexts = fetch(token, request["handle"].get<SubscriptionHandle>(), request.value("max_n", std::size_t{100}));
            json arr = json::array();
            for (const auto& c : contexts) arr.push_back(to_json(c));
            return json{{"ok", true}, {"contexts", arr}};
        }
        if (op == "revoke") {
            revoke_registration(token, request.value("registration", std::string{}));
            return json{{"ok", true}};
        }
        throw Error(ErrorCode::BadRequest, "unknown op '" + op + "'");
    } catch (const ValidationFailed& e) {
        return json{{"ok", false}, {"error", to_string(e.code())}, {"detail", e.detail()}, {"errors", e.errors()}};
    } catch (const Error& e) {
        return json{{"ok", false}, {"error", to_string(e.code())}, {"detail", e.detail()}};
    } catch (const json::exception& e) {
        return json{{"ok", false}, {"error", "BadRequest"}, {"detail", e.what()}};
    }
}

std::string ExposureService::handle_line(std::string_view line) {
    json request;
    try {
        request = json::parse(line);
    } catch (const json::parse_error& e) {
        return json{{"ok", false}, {"error", "BadRequest"}, {"detail", e.what()}}.dump();
    }
    return handle(request).dump();
}

}  // namespace cghf::nbi
