#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "cghf/common.hpp"

namespace cghf {

/// Slash-separated topic name. Segments are non-empty and never contain `*` or `#`.
class Topic {
public:
    /// Throws Error(MalformedTopic).
    static Topic parse(std::string_view text);
    static bool valid(std::string_view text) noexcept;
    /// Rejects segments that would break a topic (`/`, `*`, `#`, empty).
    static bool valid_segment(std::string_view seg) noexcept;

    const std::vector<std::string>& segments() const noexcept { return segments_; }
    const std::string& str() const noexcept { return text_; }

private:
    std::string text_;
    std::vector<std::string> segments_;
};

/// Topic filter: literal segments, `*` for exactly one segment, and a trailing `#`
/// for any number (including zero) of remaining segments.
class TopicPattern {
public:
    /// Throws Error(MalformedPattern).
    static TopicPattern parse(std::string_view text);

    bool matches(const Topic& topic) const noexcept;
    bool matches(std::string_view topic) const;
    /// True iff every topic matched by `other` is also matched by this pattern.
    bool covers(const TopicPattern& other) const noexcept;
    /// True iff some topic is matched by both patterns.
    bool overlaps(const TopicPattern& other) const noexcept;

    const std::vector<std::string>& segments() const noexcept { return segments_; }
    const std::string& str() const noexcept { return text_; }

    friend bool operator==(const TopicPattern& a, const TopicPattern& b) { return a.text_ == b.text_; }

private:
    std::string text_;
    std::vector<std::string> segments_;
};

struct Envelope {
    std::string topic;
    std::string source;
    Millis timestamp = 0;
    std::uint64_t seq = 0;
    json payload = json::object();
    std::optional<Millis> ttl;
    std::string msg_id;

    bool expired_at(Millis now) const noexcept { return ttl && timestamp + *ttl < now; }
};

/// One JSON object with keys topic, source, ts, seq, payload, ttl_ms (optional), msg_id.
json to_json(const Envelope& env);
Envelope envelope_from_json(const json& j);

struct PublishReceipt {
    std::string msg_id;
    /// Local deliveries; reported for observability only.
    std::size_t matched_count = 0;
};

using SubscriptionHandle = std::uint64_t;

struct BusOptions {
    std::size_t queue_capacity = 10'000;
    /// How many recent msg_ids each bus (and each link) remembers for de-duplication.
    std::size_t dedup_window = 1u << 20;
};

struct PeerLinkInfo {
    std::string local_id;
    std::string peer_id;
    TopicPattern export_scope;
    TopicPattern import_scope;
};

/// Topic-based publish/subscribe engine with pull delivery.
///
/// Publishers address topics, never subscribers. Every subscription whose pattern
/// matches receives the envelope exactly once; publishes with no subscriber are
/// dropped. Expiry (timestamp + ttl < now) is enforced when polling.
///
/// Federated buses share one lock domain so replay across any link topology is
/// serialized and keeps per-(source, topic) order.
class Bus {
public:
    explicit Bus(std::string id, BusOptions options = {});
    ~Bus();
    Bus(const Bus&) = delete;
    Bus& operator=(const Bus&) = delete;

    const std::string& id() const noexcept { return id_; }

    /// Assigns msg_id from (bus id, source, topic, seq); any caller-provided id is replaced.
    /// Throws MalformedTopic, SeqRegression.
    PublishReceipt publish(Envelope env);

    SubscriptionHandle subscribe(const TopicPattern& pattern, std::string subscriber_id, Millis created_at = 0);
    /// Throws MalformedPattern.
    SubscriptionHandle subscribe(std::string_view pattern, std::string subscriber_id, Millis created_at = 0);
    /// Throws UnknownHandle.
    void unsubscribe(SubscriptionHandle handle);
    bool has_subscription(SubscriptionHandle handle) const;

    /// Removes and returns up to max_n envelopes in queue order, discarding expired ones.
    /// Throws UnknownHandle.
    std::vector<Envelope> poll(SubscriptionHandle handle, std::size_t max_n, Millis now);

    std::size_t pending(SubscriptionHandle handle) const;
    std::uint64_t dropped(SubscriptionHandle handle) const;
    std::uint64_t total_dropped() const;

    /// Links this bus with `peer`: local publishes matching export_scope are replayed on the
    /// peer, and peer publishes matching import_scope are replayed here. Throws SelfFederation.
    PeerLinkInfo federate(Bus& peer, const TopicPattern& export_scope, const TopicPattern& import_scope);
    std::vector<PeerLinkInfo> links() const;

private:
    struct Domain;
    struct DomainLock;

    class IdWindow {
    public:
        explicit IdWindow(std::size_t cap) : cap_(cap) {}
        bool contains(const std::string& id) const { return ids_.count(id) != 0; }
        void insert(const std::string& id);

    private:
        std::size_t cap_;
        std::unordered_set<std::string> ids_;
        std::deque<std::string> order_;
    };

    struct Subscription {
        TopicPattern pattern;
        std::string subscriber_id;
        Millis created_at = 0;
        std::deque<Envelope> queue;
        std::uint64_t dropped = 0;
    };

    struct Link {
        Bus* peer = nullptr;
        TopicPattern export_scope;
        TopicPattern import_scope;
        IdWindow seen;
    };

    DomainLock lock_domain() const;
    PublishReceipt dispatch(Envelope env, const Bus* from);
    void deliver(const Envelope& env, const Topic& topic, PublishReceipt& receipt);
    Link* link_to(const Bus* peer);

    std::string id_;
    BusOptions options_;

    mutable std::mutex domain_ptr_mu_;
    std::shared_ptr<Domain> domain_;

    SubscriptionHandle next_handle_ = 1;
    std::map<SubscriptionHandle, Subscription> subs_;
    std::map<std::pair<std::string, std::string>, std::uint64_t> last_seq_;
    IdWindow seen_ids_;
    std::vector<std::unique_ptr<Link>> links_;
    std::uint64_t closed_dropped_ = 0;
};

}  // namespace cghf
