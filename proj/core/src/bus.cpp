#include "cghf/bus.hpp"

#include <algorithm>

namespace cghf {

namespace {

std::vector<std::string> split_segments(std::string_view text) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        auto pos = text.find('/', start);
        out.emplace_back(text.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

bool covers_from(const std::vector<std::string>& s, std::size_t i, const std::vector<std::string>& p, std::size_t j) {
    for (;; ++i, ++j) {
        if (i == s.size()) return j == p.size();
        if (s[i] == "#") return true;
        if (j == p.size() || p[j] == "#") return false;
        if (s[i] != "*" && (p[j] == "*" || p[j] != s[i])) return false;
    }
}

bool overlaps_from(const std::vector<std::string>& a, std::size_t i, const std::vector<std::string>& b, std::size_t j) {
    for (;; ++i, ++j) {
        if (i == a.size() && j == b.size()) return true;
        if ((i < a.size() && a[i] == "#") || (j < b.size() && b[j] == "#")) return true;
        if (i == a.size() || j == b.size()) return false;
        if (a[i] != "*" && b[j] != "*" && a[i] != b[j]) return false;
    }
}

}  // namespace

// ---- Topic / TopicPattern ---------------------------------------------------------------

bool Topic::valid_segment(std::string_view seg) noexcept {
    return !seg.empty() && seg.find_first_of("/*#") == std::string_view::npos;
}

bool Topic::valid(std::string_view text) noexcept {
    if (text.empty()) return false;
    std::size_t start = 0;
    while (true) {
        auto pos = text.find('/', start);
        auto seg = text.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start);
        if (!valid_segment(seg)) return false;
        if (pos == std::string_view::npos) return true;
        start = pos + 1;
    }
}

Topic Topic::parse(std::string_view text) {
    if (!valid(text)) throw Error(ErrorCode::MalformedTopic, "'" + std::string(text) + "'");
    Topic t;
    t.text_ = std::string(text);
    t.segments_ = split_segments(text);
    return t;
}

TopicPattern TopicPattern::parse(std::string_view text) {
    auto fail = [&] { return Error(ErrorCode::MalformedPattern, "'" + std::string(text) + "'"); };
    if (text.empty()) throw fail();
    TopicPattern p;
    p.text_ = std::string(text);
    p.segments_ = split_segments(text);
    for (std::size_t i = 0; i < p.segments_.size(); ++i) {
        const auto& seg = p.segments_[i];
        if (seg == "#") {
            if (i + 1 != p.segments_.size()) throw fail();
        } else if (seg != "*" && !Topic::valid_segment(seg)) {
            throw fail();
        }
    }
    return p;
}

bool TopicPattern::matches(const Topic& topic) const noexcept {
    const auto& t = topic.segments();
    std::size_t j = 0;
    for (const auto& seg : segments_) {
        if (seg == "#") return true;
        if (j == t.size()) return false;
        if (seg != "*" && seg != t[j]) return false;
        ++j;
    }
    return j == t.size();
}

bool TopicPattern::matches(std::string_view topic) const { return Topic::valid(topic) && matches(Topic::parse(topic)); }

bool TopicPattern::covers(const TopicPattern& other) const noexcept {
    return covers_from(segments_, 0, other.segments_, 0);
}

bool TopicPattern::overlaps(const TopicPattern& other) const noexcept {
    return overlaps_from(segments_, 0, other.segments_, 0);
}

// ---- Envelope JSON ---------------------------------------------------------------------

json to_json(const Envelope& env) {
    json j{{"topic", env.topic}, {"source", env.source}, {"ts", env.timestamp},
           {"seq", env.seq},     {"payload", env.payload}, {"msg_id", env.msg_id}};
    if (env.ttl) j["ttl_ms"] = *env.ttl;
    return j;
}

Envelope envelope_from_json(const json& j) {
    if (!j.is_object()) throw Error(ErrorCode::BadRequest, "envelope must be a JSON object");
    try {
        Envelope env;
        env.topic = j.at("topic").get<std::string>();
        env.source = j.at("source").get<std::string>();
        env.timestamp = j.at("ts").get<Millis>();
        env.seq = j.at("seq").get<std::uint64_t>();
        env.payload = j.value("payload", json::object());
        if (!env.payload.is_object()) throw Error(ErrorCode::BadRequest, "payload must be an object");
        if (j.contains("ttl_ms") && !j["ttl_ms"].is_null()) env.ttl = j["ttl_ms"].get<Millis>();
        env.msg_id = j.value("msg_id", std::string{});
        return env;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::BadRequest, std::string("envelope: ") + e.what());
    }
}

// ---- Bus ------------------------------------------------------------------------------

struct Bus::Domain {
    std::recursive_mutex mu;
    std::vector<Bus*> members;
};

struct Bus::DomainLock {
    std::shared_ptr<Domain> domain;
    std::unique_lock<std::recursive_mutex> lock;
};

void Bus::IdWindow::insert(const std::string& id) {
    if (!ids_.insert(id).second) return;
    order_.push_back(id);
    if (order_.size() > cap_) {
        ids_.erase(order_.front());
        order_.pop_front();
    }
}

Bus::Bus(std::string id, BusOptions options)
    : id_(std::move(id)), options_(options), domain_(std::make_shared<Domain>()), seen_ids_(options.dedup_window) {
    domain_->members.push_back(this);
}

Bus::~Bus() {
    auto guard = lock_domain();
    for (auto& link : links_) {
        auto& theirs = link->peer->links_;
        theirs.erase(std::remove_if(theirs.begin(), theirs.end(), [this](const auto& l) { return l->peer == this; }),
                     theirs.end());
    }
    auto& members = guard.domain->members;
    members.erase(std::remove(members.begin(), members.end(), this), members.end());
}

Bus::DomainLock Bus::lock_domain() const {
    while (true) {
        std::shared_ptr<Domain> d;
        {
            std::lock_guard g(domain_ptr_mu_);
            d = domain_;
        }
        std::unique_lock lk(d->mu);
        std::lock_guard g(domain_ptr_mu_);
        if (domain_ == d) return DomainLock{std::move(d), std::move(lk)};
    }
}

PublishReceipt Bus::publish(Envelope env) {
    auto guard = lock_domain();
    return dispatch(std::move(env), nullptr);
}

PublishReceipt Bus::dispatch(Envelope env, const Bus* from) {
    auto topic = Topic::parse(env.topic);
    auto key = std::make_pair(env.source, env.topic);
    PublishReceipt receipt;

    if (from == nullptr) {
        auto it = last_seq_.find(key);
        if (it != last_seq_.end() && env.seq <= it->second) {
            throw Error(ErrorCode::SeqRegression, env.source + " on " + env.topic + ": seq " +
                                                      std::to_string(env.seq) + " <= " + std::to_string(it->second));
        }
        env.msg_id = id_ + ":" + env.source + ":" + env.topic + ":" + std::to_string(env.seq);
    } else if (seen_ids_.contains(env.msg_id)) {
        receipt.msg_id = env.msg_id;
        return receipt;
    }
    auto& last = last_seq_[key];
    last = std::max(last, env.seq);
    seen_ids_.insert(env.msg_id);
    receipt.msg_id = env.msg_id;

    deliver(env, topic, receipt);

    for (std::size_t i = 0; i < links_.size(); ++i) {
        auto* link = links_[i].get();
        if (link->peer == from || !link->export_scope.matches(topic) || link->seen.contains(env.msg_id)) continue;
        link->seen.insert(env.msg_id);
        auto* back = link->peer->link_to(this);
        if (back == nullptr || !back->import_scope.matches(topic)) continue;
        link->peer->dispatch(env, this);
    }
    return receipt;
}

void Bus::deliver(const Envelope& env, const Topic& topic, PublishReceipt& receipt) {
    for (auto& [handle, sub] : subs_) {
        if (!sub.pattern.matches(topic)) continue;
        if (sub.queue.size() >= options_.queue_capacity) {
            sub.queue.pop_front();
            ++sub.dropped;
        }
        sub.queue.push_back(env);
        ++receipt.matched_count;
    }
}

Bus::Link* Bus::link_to(const Bus* peer) {
    for (auto& l : links_)
        if (l->peer == peer) return l.get();
    return nullptr;
}

SubscriptionHandle Bus::subscribe(const TopicPattern& pattern, std::string subscriber_id, Millis created_at) {
    auto guard = lock_domain();
    auto handle = next_handle_++;
    subs_.emplace(handle, Subscription{pattern, std::move(subscriber_id), created_at, {}, 0});
    return handle;
}

SubscriptionHandle Bus::subscribe(std::string_view pattern, std::string subscriber_id, Millis created_at) {
    return subscribe(TopicPattern::parse(pattern), std::move(subscriber_id), created_at);
}

void Bus::unsubscribe(SubscriptionHandle handle) {
    auto guard = lock_domain();
    auto it = subs_.find(handle);
    if (it == subs_.end()) throw Error(ErrorCode::UnknownHandle, std::to_string(handle));
    closed_dropped_ += it->second.dropped;
    subs_.erase(it);
}

bool Bus::has_subscription(SubscriptionHandle handle) const {
    auto guard = lock_domain();
    return subs_.count(handle) != 0;
}

std::vector<Envelope> Bus::poll(SubscriptionHandle handle, std::size_t max_n, Millis now) {
    auto guard = lock_domain();
    auto it = subs_.find(handle);
    if (it == subs_.end()) throw Error(ErrorCode::UnknownHandle, std::to_string(handle));
    auto& queue = it->second.queue;
    std::vector<Envelope> out;
    while (out.size() < max_n && !queue.empty()) {
        if (!queue.front().expired_at(now)) out.push_back(std::move(queue.front()));
        queue.pop_front();
    }
    return out;
}

std::size_t Bus::pending(SubscriptionHandle handle) const {
    auto guard = lock_domain();
    auto it = subs_.find(handle);
    if (it == subs_.end()) throw Error(ErrorCode::UnknownHandle, std::to_string(handle));
    return it->second.queue.size();
}

std::uint64_t Bus::dropped(SubscriptionHandle handle) const {
    auto guard = lock_domain();
    auto it = subs_.find(handle);
    if (it == subs_.end()) throw Error(ErrorCode::UnknownHandle, std::to_string(handle));
    return it->second.dropped;
}

std::uint64_t Bus::total_dropped() const {
    auto guard = lock_domain();
    auto total = closed_dropped_;
    for (const auto& [h, sub] : subs_) total += sub.dropped;
    return total;
}

PeerLinkInfo Bus::federate(Bus& peer, const TopicPattern& export_scope, const TopicPattern& import_scope) {
    if (&peer == this) throw Error(ErrorCode::SelfFederation, id_);

    // Merge the two lock domains; retry if either moved while we waited.
    while (true) {
        std::shared_ptr<Domain> mine, theirs;
        {
            std::lock_guard g(domain_ptr_mu_);
            mine = domain_;
        }
        {
            std::lock_guard g(peer.domain_ptr_mu_);
            theirs = peer.domain_;
        }
        std::unique_lock<std::recursive_mutex> a(mine->mu, std::defer_lock);
        std::unique_lock<std::recursive_mutex> b(theirs->mu, std::defer_lock);
        if (mine == theirs) {
            a.lock();
        } else {
            std::lock(a, b);
        }
        bool stale;
        {
            std::scoped_lock g(domain_ptr_mu_, peer.domain_ptr_mu_);
            stale = domain_ != mine || peer.domain_ != theirs;
        }
        if (stale) continue;

        if (mine != theirs) {
            for (Bus* member : theirs->members) {
                std::lock_guard g(member->domain_ptr_mu_);
                member->domain_ = mine;
                mine->members.push_back(member);
            }
            theirs->members.clear();
        }

        auto upsert = [](Bus& self, Bus& other, const TopicPattern& exp, const TopicPattern& imp) {
            if (auto* existing = self.link_to(&other)) {
                existing->export_scope = exp;
                existing->import_scope = imp;
                return;
            }
            self.links_.push_back(std::make_unique<Link>(Link{&other, exp, imp, IdWindow(self.options_.dedup_window)}));
        };
        upsert(*this, peer, export_scope, import_scope);
        upsert(peer, *this, import_scope, export_scope);
        return PeerLinkInfo{id_, peer.id_, export_scope, import_scope};
    }
}

std::vector<PeerLinkInfo> Bus::links() const {
    auto guard = lock_domain();
    std::vector<PeerLinkInfo> out;
    for (const auto& l : links_) out.push_back(PeerLinkInfo{id_, l->peer->id_, l->export_scope, l->import_scope});
    return out;
}

}  // namespace cghf
