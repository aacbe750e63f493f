#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "cogs/text.hpp"
#include "cogs/types.hpp"

namespace cogs {

/// Shown in traces/case output when the sensory probe finds nothing.
inline constexpr const char* kNoRefindingMessage = "No re-finding data found";

/// Per-user re-finding index: normalized query -> doc_id -> click count.
struct SensoryStore {
    std::string user_id;
    std::map<std::string, std::map<std::string, std::int64_t>> entries;

    bool operator==(const SensoryStore&) const = default;
};

template <typename J>
void to_json(J& j, const SensoryStore& s) {
    j = J{{"user_id", s.user_id}, {"entries", s.entries}};
}
template <typename J>
void from_json(const J& j, SensoryStore& s) {
    s.user_id = j.value("user_id", std::string());
    s.entries = j.value("entries", decltype(s.entries){});
}

struct SensoryResponse {
    bool matched = false;
    std::vector<std::string> ranking;  // permutation of candidate doc ids
};

inline void record_clicks(SensoryStore& store, const Interaction& interaction) {
    const std::string q = normalize_query(interaction.query);
    if (q.empty()) return;
    for (const auto& doc_id : interaction.clicked) ++store.entries[q][doc_id];
}

inline void update_sensory(SensoryStore& store, const Session& session) {
    for (const auto& it : session.interactions) record_clicks(store, it);
}

inline SensoryStore build_sensory(const UserHistory& history) {
    SensoryStore store;
    store.user_id = history.user_id;
    for (const auto& it : history.flatten()) record_clicks(store, it);
    return store;
}

/// Answers a query directly from past clicks: candidates with clicks for the
/// normalized query float to the top, ordered by click count (stable on ties
/// and for zero-click docs, which keep their original order at the tail).
/// No entry for the query, or no clicked candidate, means no match.
inline SensoryResponse probe_sensory(const SensoryStore& store, std::string_view query,
                                     const std::vector<DocumentRef>& candidates) {
    SensoryResponse resp;
    auto entry = store.entries.find(normalize_query(query));
    if (entry == store.entries.end()) return resp;

    std::vector<std::pair<std::string, std::int64_t>> ranked;
    ranked.reserve(candidates.size());
    bool any = false;
    for (const auto& d : candidates) {
        auto cit = entry->second.find(d.doc_id);
        const std::int64_t count = cit == entry->second.end() ? 0 : cit->second;
        any = any || count > 0;
        ranked.emplace_back(d.doc_id, count);
    }
    if (!any) return resp;

    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    resp.matched = true;
    resp.ranking.reserve(ranked.size());
    for (auto& [doc_id, count] : ranked) resp.ranking.push_back(std::move(doc_id));
    return resp;
}

}  // namespace cogs
