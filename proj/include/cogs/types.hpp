#pragma once

#include <cstdint>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace cogs {

/// Usage/config problems (CLI exit code 1).
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Unreadable or malformed input data (CLI exit code 2).
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Fatal cognitive-provider problems (CLI exit code 3).
struct ProviderError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DocumentRef {
    std::string doc_id;
    std::string title;
    std::string body;

    bool operator==(const DocumentRef&) const = default;
};

// Serializers are templated over the json type so the same definitions feed
// both nlohmann::json and the ordered_json used for deterministic files.
template <typename J>
void to_json(J& j, const DocumentRef& d) {
    j = J{{"doc_id", d.doc_id}, {"title", d.title}, {"body", d.body}};
}
template <typename J>
void from_json(const J& j, DocumentRef& d) {
    d.doc_id = j.value("doc_id", std::string());
    d.title = j.value("title", std::string());
    d.body = j.value("body", std::string());
}

struct Interaction {
    std::string query;
    std::int64_t timestamp = 0;
    std::string session_id;
    std::vector<std::string> clicked;  // doc ids, log order
    std::vector<std::string> skipped;  // doc ids, log order

    bool operator==(const Interaction&) const = default;
};

template <typename J>
void to_json(J& j, const Interaction& x) {
    j = J{{"query", x.query},
          {"timestamp", x.timestamp},
          {"session_id", x.session_id},
          {"clicked", x.clicked},
          {"skipped", x.skipped}};
}
template <typename J>
void from_json(const J& j, Interaction& x) {
    x.query = j.value("query", std::string());
    x.timestamp = j.value("timestamp", std::int64_t{0});
    x.session_id = j.value("session_id", std::string());
    x.clicked = j.value("clicked", std::vector<std::string>{});
    x.skipped = j.value("skipped", std::vector<std::string>{});
}

struct Session {
    std::string session_id;
    std::vector<Interaction> interactions;

    bool empty() const { return interactions.empty(); }
    bool operator==(const Session&) const = default;
};

template <typename J>
void to_json(J& j, const Session& s) {
    j = J{{"session_id", s.session_id}, {"interactions", s.interactions}};
}
template <typename J>
void from_json(const J& j, Session& s) {
    s.session_id = j.value("session_id", std::string());
    s.interactions = j.value("interactions", std::vector<Interaction>{});
}

struct UserHistory {
    std::string user_id;
    std::vector<Session> long_term;  // all sessions except the most recent one
    Session short_term;              // most recent (possibly truncated) session

    std::vector<Interaction> flatten() const {
        std::vector<Interaction> all;
        for (const auto& s : long_term)
            all.insert(all.end(), s.interactions.begin(), s.interactions.end());
        all.insert(all.end(), short_term.interactions.begin(), short_term.interactions.end());
        return all;
    }

    bool operator==(const UserHistory&) const = default;
};

template <typename J>
void to_json(J& j, const UserHistory& h) {
    j = J{{"user_id", h.user_id}, {"long_term", h.long_term}, {"short_term", h.short_term}};
}
template <typename J>
void from_json(const J& j, UserHistory& h) {
    h.user_id = j.value("user_id", std::string());
    h.long_term = j.value("long_term", std::vector<Session>{});
    h.short_term = j.value("short_term", Session{});
}

struct TestQuery {
    std::string user_id;
    std::string query;
    std::int64_t timestamp = 0;
    std::string session_id;
    std::vector<std::string> clicked;  // ground-truth relevant doc ids, log order
    std::vector<std::string> skipped;
    std::vector<DocumentRef> candidates;  // attached by candidate generation

    std::set<std::string> relevant() const {
        return std::set<std::string>(clicked.begin(), clicked.end());
    }

    bool operator==(const TestQuery&) const = default;
};

template <typename J>
void to_json(J& j, const TestQuery& q) {
    j = J{{"user_id", q.user_id},   {"query", q.query},     {"timestamp", q.timestamp},
          {"session_id", q.session_id}, {"clicked", q.clicked}, {"skipped", q.skipped},
          {"candidates", q.candidates}};
}
template <typename J>
void from_json(const J& j, TestQuery& q) {
    q.user_id = j.value("user_id", std::string());
    q.query = j.value("query", std::string());
    q.timestamp = j.value("timestamp", std::int64_t{0});
    q.session_id = j.value("session_id", std::string());
    q.clicked = j.value("clicked", std::vector<std::string>{});
    q.skipped = j.value("skipped", std::vector<std::string>{});
    q.candidates = j.value("candidates", std::vector<DocumentRef>{});
}

/// One topic -> interests row of the explicit long-term memory.
struct ExplicitEntry {
    std::string topic;
    std::vector<std::string> interests;

    bool operator==(const ExplicitEntry&) const = default;
};

template <typename J>
void to_json(J& j, const ExplicitEntry& e) {
    j = J{{"topic", e.topic}, {"interests", e.interests}};
}
template <typename J>
void from_json(const J& j, ExplicitEntry& e) {
    e.topic = j.value("topic", std::string());
    e.interests = j.value("interests", std::vector<std::string>{});
}

/// One attribute -> value row of the implicit long-term memory.
struct ImplicitEntry {
    std::string attribute;
    std::string value;

    bool operator==(const ImplicitEntry&) const = default;
};

template <typename J>
void to_json(J& j, const ImplicitEntry& e) {
    j = J{{"attribute", e.attribute}, {"value", e.value}};
}
template <typename J>
void from_json(const J& j, ImplicitEntry& e) {
    e.attribute = j.value("attribute", std::string());
    e.value = j.value("value", std::string());
}

}  // namespace cogs
