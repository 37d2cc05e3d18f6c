#pragma once

#include <functional>
#include <map>
#include <mutex>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "cghf/bus.hpp"
#include "cghf/inference.hpp"
#include "cghf/node.hpp"
#include "cghf/rules.hpp"

namespace cghf::nbi {

/// ValidationFailed carrying the individual parse/validation messages.
class ValidationFailed : public Error {
public:
    explicit ValidationFailed(std::vector<std::string> errors);
    const std::vector<std::string>& errors() const noexcept { return errors_; }

private:
    std::vector<std::string> errors_;
};

struct Principal {
    std::string id;
    std::string token;
    TopicPattern allowed_publish_scope;
    TopicPattern allowed_subscribe_scope;
    bool revoked = false;
};

/// {"id", "token", "publish_scope", "subscribe_scope"}
Principal principal_from_json(const json& j);

struct StreamDecl {
    std::string topic;
    std::string unit;
    ValueType type = ValueType::Number;
};

/// Design-time description of a stakeholder service.
struct ServiceManifest {
    std::string service;
    std::vector<StreamDecl> streams;
    std::vector<std::string> context_topics;
    /// Rule-language text with the fact definitions and rules to install.
    std::string rules;
};

/// {"service", "streams": [{"topic","unit","type"}], "context_topics": [...], "rules": "..."}
ServiceManifest manifest_from_json(const json& j);
json to_json(const ServiceManifest& m);

struct Registration {
    enum class Status { Active, Revoked };

    std::string id;
    std::string principal_id;
    ServiceManifest manifest;
    std::vector<std::string> rule_names;
    std::vector<std::string> factdef_names;
    std::vector<SubscriptionHandle> subscriptions;
    Status status = Status::Active;
};

json to_json(const Registration& r);

/// One entry per envelope crossing the NBI, in either direction.
struct AuditRecord {
    std::string principal;
    /// "push" (stakeholder → CGHF) or "fetch" (CGHF → stakeholder).
    std::string direction;
    std::string topic;
    std::string msg_id;
};

/// Northbound exposure of a Node. Every call authenticates its token first; nothing is
/// read or mutated for an unauthenticated caller. Calls are serialized.
class ExposureService {
public:
    using Clock = std::function<Millis()>;

    ExposureService(Node& node, Clock clock);

    /// Rejects publish scopes that could reach facts/ or context/ (ScopeViolation).
    void add_principal(Principal p);
    void revoke_principal(const std::string& principal_id);

    /// Throws Unauthorized.
    Principal authenticate(std::string_view token) const;

    /// Throws Unauthorized, ScopeViolation, MalformedTopic, ValidationFailed.
    Registration register_service(std::string_view token, const ServiceManifest& manifest);
    /// Throws Unauthorized, UnknownHandle (unknown or foreign registration id).
    void revoke_registration(std::string_view token, const std::string& registration_id);

    /// Publishes the envelope as raw information with source = principal id.
    /// Throws Unauthorized, ScopeViolation, UndeclaredStream, MalformedTopic, SeqRegression, BadRequest.
    PublishReceipt push_info(std::string_view token, Envelope env);

    /// Throws Unauthorized, ScopeViolation, MalformedPattern.
    SubscriptionHandle subscribe_context(std::string_view token, std::string_view pattern);
    /// Throws Unauthorized, UnknownHandle.
    std::vector<Context> fetch(std::string_view token, SubscriptionHandle handle, std::size_t max_n);

    std::vector<Registration> registrations() const;
    std::vector<AuditRecord> audit() const;

    /// Newline-delimited JSON protocol. Verbs: auth, register, push, subscribe, fetch, revoke.
    json handle(const json& request);
    std::string handle_line(std::string_view line);

private:
    const Principal& auth_locked(std::string_view token) const;

    mutable std::mutex mu_;
    Node* node_;
    Clock clock_;
    std::map<std::string, Principal> principals_;  // by id
    std::map<std::string, Registration> registrations_;
    std::map<SubscriptionHandle, std::string> handle_owner_;
    std::vector<AuditRecord> audit_;
    std::uint64_t next_registration_ = 1;
};

/// Serves ExposureService::handle_line over a Unix-domain stream socket, one thread per
/// client session. Blocks in run() until stop() is called from another thread.
class Server {
public:
    Server(ExposureService& service, std::string socket_path);
    ~Server();
    Server(const Server&) = delete;
    Server& operator=(const Server&) = delete;

    /// Binds and listens; throws std::system_error on failure.
    void start();
    void run();
    void stop();

private:
    void session(int fd);

    std::vector<std::thread> sessions_;

    ExposureService* service_;
    std::string path_;
    int listen_fd_ = -1;
    std::mutex mu_;
    std::vector<int> clients_;
    bool stopping_ = false;
};

/// Sends one request line and returns the parsed response (used by tests and tooling).
json request_over_socket(const std::string& socket_path, const json& request);

}  // namespace cghf::nbi
