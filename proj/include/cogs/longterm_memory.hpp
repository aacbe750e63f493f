#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cogs/bm25.hpp"
#include "cogs/cognition.hpp"
#include "cogs/prompts.hpp"
#include "cogs/sensory_memory.hpp"
#include "cogs/text.hpp"
#include "cogs/types.hpp"

namespace cogs {

constexpr int kDefaultWindowSize = 50;  // interactions per memory slot
constexpr int kDefaultWindowDays = 7;
constexpr int kDefaultRetrievalK = 5;

/// Maps doc ids to display titles; returns the id itself when unknown.
using TitleLookup = std::function<std::string(const std::string&)>;

inline TitleLookup make_title_lookup(std::map<std::string, std::string> titles) {
    return [titles = std::move(titles)](const std::string& doc_id) {
        auto it = titles.find(doc_id);
        return it == titles.end() ? doc_id : it->second;
    };
}

struct MemorySlot {
    int index = 0;
    std::int64_t start_ts = 0;
    std::int64_t end_ts = 0;
    std::vector<Interaction> interactions;
    std::vector<ExplicitEntry> explicit_entries;
    std::vector<ImplicitEntry> implicit_entries;
    std::string raw_summary;   // provider replies before parsing
    bool encoded = false;      // false until every enabled summarize call succeeded
    std::string encode_error;

    bool operator==(const MemorySlot&) const = default;
};

template <typename J>
void to_json(J& j, const MemorySlot& s) {
    j = J{{"index", s.index},
          {"start_ts", s.start_ts},
          {"end_ts", s.end_ts},
          {"explicit", s.explicit_entries},
          {"implicit", s.implicit_entries},
          {"raw_summary", s.raw_summary},
          {"encoded", s.encoded},
          {"encode_error", s.encode_error},
          {"interactions", s.interactions}};
}

template <typename J>
void from_json(const J& j, MemorySlot& s) {
    s.index = j.value("index", 0);
    s.start_ts = j.value("start_ts", std::int64_t{0});
    s.end_ts = j.value("end_ts", std::int64_t{0});
    s.explicit_entries = j.value("explicit", std::vector<ExplicitEntry>{});
    s.implicit_entries = j.value("implicit", std::vector<ImplicitEntry>{});
    s.raw_summary = j.value("raw_summary", std::string());
    s.encoded = j.value("encoded", false);
    s.encode_error = j.value("encode_error", std::string());
    s.interactions = j.value("interactions", std::vector<Interaction>{});
}

struct LongTermStore {
    std::string user_id;
    int window_size = kDefaultWindowSize;
    std::vector<MemorySlot> slots;  // time order

    bool operator==(const LongTermStore&) const = default;
};

template <typename J>
void to_json(J& j, const LongTermStore& s) {
    j = J{{"user_id", s.user_id}, {"window_size", s.window_size}, {"slots", s.slots}};
}

template <typename J>
void from_json(const J& j, LongTermStore& s) {
    s.user_id = j.value("user_id", std::string());
    s.window_size = j.value("window_size", kDefaultWindowSize);
    s.slots = j.value("slots", std::vector<MemorySlot>{});
}

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

inline std::string render_explicit_entry(const ExplicitEntry& e) {
    return e.topic + ": " + join(e.interests, ", ");
}

inline std::string render_implicit_entry(const ImplicitEntry& e) {
    return e.attribute + ": " + e.value;
}

/// One query-log line: query, clicked titles, then skipped titles.
inline std::string render_interaction(const Interaction& it, const TitleLookup& titles) {
    std::vector<std::string> clicked;
    for (const auto& d : it.clicked) clicked.push_back(titles(d));
    std::string line = it.query + ": " + join(clicked, ", ");
    if (!it.skipped.empty()) {
        std::vector<std::string> skipped;
        for (const auto& d : it.skipped) skipped.push_back(titles(d));
        line += ", skipped: " + join(skipped, ", ");
    }
    return line;
}

inline std::string render_slot_log(const MemorySlot& slot, const TitleLookup& titles) {
    std::vector<std::string> lines;
    lines.reserve(slot.interactions.size());
    for (const auto& it : slot.interactions) lines.push_back(render_interaction(it, titles));
    return join(lines, "\n");
}

// ---------------------------------------------------------------------------
// Building and encoding
// ---------------------------------------------------------------------------

enum class WindowMode { interactions, days };

struct WindowPolicy {
    WindowMode mode = WindowMode::interactions;
    int size = kDefaultWindowSize;  // interactions per slot
    int days = kDefaultWindowDays;  // calendar span per slot in days mode
};

/// Fixed-size partition of a time-ordered interaction list; the final slot
/// may be short.
inline std::vector<MemorySlot> partition_windows(const std::vector<Interaction>& interactions,
                                                 const WindowPolicy& policy = {}) {
    std::vector<MemorySlot> slots;
    auto open_slot = [&] {
        MemorySlot s;
        s.index = static_cast<int>(slots.size());
        slots.push_back(std::move(s));
    };
    if (policy.mode == WindowMode::interactions) {
        const auto size = static_cast<std::size_t>(policy.size < 1 ? 1 : policy.size);
        for (std::size_t i = 0; i < interactions.size(); ++i) {
            if (i % size == 0) open_slot();
            slots.back().interactions.push_back(interactions[i]);
        }
    } else {
        const std::int64_t span = static_cast<std::int64_t>(policy.days < 1 ? 1 : policy.days) *
                                  std::int64_t{86400};
        std::int64_t bucket = 0;
        for (const auto& it : interactions) {
            const std::int64_t b = it.timestamp / span;
            if (slots.empty() || b != bucket) {
                open_slot();
                bucket = b;
            }
            slots.back().interactions.push_back(it);
        }
    }
    for (auto& s : slots) {
        if (s.interactions.empty()) continue;
        s.start_ts = s.interactions.front().timestamp;
        s.end_ts = s.interactions.back().timestamp;
    }
    return slots;
}

enum class MemoryKind { explicit_topics, implicit_attributes };

/// Runs one summarize call for `kind` over the slot's rendered query log and
/// parses the reply into the slot. The rendered log is chunk-summarized first
/// if it would blow the provider's input budget. Returns false (and keeps the
/// error on the slot) when the provider fails.
inline bool encode_slot(MemorySlot& slot, Provider& provider, const TemplateSet& templates,
                        MemoryKind kind, const TitleLookup& titles) {
    const PromptFamily family = kind == MemoryKind::explicit_topics
                                    ? PromptFamily::summarize_explicit
                                    : PromptFamily::summarize_implicit;
    const double budget = static_cast<double>(provider.config().input_budget_tokens);
    const double scaffold = estimate_tokens(templates.render(family, {{"log", ""}}));
    const double avail = std::max(16.0, budget - scaffold - 8.0);

    std::string log_text = render_slot_log(slot, titles);
    if (estimate_tokens(log_text) > avail) log_text = chunk_summarize(provider, log_text, avail);

    const Completion c = provider.complete(templates.render(family, {{"log", log_text}}));
    if (!c.ok) {
        slot.encode_error = c.error;
        return false;
    }
    if (!slot.raw_summary.empty()) slot.raw_summary += "\n\n";
    slot.raw_summary += c.text;
    if (kind == MemoryKind::explicit_topics) {
        slot.explicit_entries = parse_topics(c.text);
    } else {
        slot.implicit_entries = parse_attributes(c.text);
    }
    return true;
}

struct EncodeToggles {
    bool explicit_on = true;
    bool implicit_on = true;
};

/// Re-encodes one slot from scratch for every enabled kind.
inline void encode_slot_full(MemorySlot& slot, Provider& provider, const TemplateSet& templates,
                             const TitleLookup& titles, const EncodeToggles& toggles = {}) {
    slot.explicit_entries.clear();
    slot.implicit_entries.clear();
    slot.raw_summary.clear();
    slot.encode_error.clear();
    bool ok = true;
    if (toggles.explicit_on) ok = encode_slot(slot, provider, templates,
                                              MemoryKind::explicit_topics, titles) && ok;
    if (toggles.implicit_on) ok = encode_slot(slot, provider, templates,
                                              MemoryKind::implicit_attributes, titles) && ok;
    slot.encoded = ok;
}

/// Builds the long-term store for a user's pre-split history (the short-term
/// session is deliberately excluded; it feeds working memory instead).
inline LongTermStore build_longterm(const UserHistory& history, Provider& provider,
                                    const TemplateSet& templates, const TitleLookup& titles,
                                    const WindowPolicy& policy = {},
                                    const EncodeToggles& toggles = {}) {
    LongTermStore store;
    store.user_id = history.user_id;
    store.window_size = policy.size;
    std::vector<Interaction> interactions;
    for (const auto& s : history.long_term)
        interactions.insert(interactions.end(), s.interactions.begin(), s.interactions.end());
    store.slots = partition_windows(interactions, policy);
    for (auto& slot : store.slots) encode_slot_full(slot, provider, templates, titles, toggles);
    return store;
}

/// Folds a finished session into the store: interactions fill the last slot
/// up to window_size, overflow opens new slots, and every touched slot is
/// re-encoded. A provider failure leaves the slot present but unencoded.
inline void append_session(LongTermStore& store, const Session& session, Provider& provider,
                           const TemplateSet& templates, const TitleLookup& titles,
                           const EncodeToggles& toggles = {}) {
    std::set<std::size_t> dirty;
    for (const auto& it : session.interactions) {
        if (store.slots.empty() ||
            store.slots.back().interactions.size() >=
                static_cast<std::size_t>(store.window_size < 1 ? 1 : store.window_size)) {
            MemorySlot s;
            s.index = static_cast<int>(store.slots.size());
            store.slots.push_back(std::move(s));
        }
        MemorySlot& slot = store.slots.back();
        slot.interactions.push_back(it);
        slot.start_ts = slot.interactions.front().timestamp;
        slot.end_ts = slot.interactions.back().timestamp;
        dirty.insert(store.slots.size() - 1);
    }
    for (std::size_t i : dirty)
        encode_slot_full(store.slots[i], provider, templates, titles, toggles);
}

// ---------------------------------------------------------------------------
// Retrieval
// ---------------------------------------------------------------------------

enum class RetrievalMode { llm, lexical };

struct RetrievalOptions {
    RetrievalMode mode = RetrievalMode::llm;
    int k = kDefaultRetrievalK;  // lexical mode: entries kept per kind
    bool want_explicit = true;
    bool want_implicit = true;
};

struct RetrievedProfile {
    std::vector<std::string> interests;   // from explicit memory
    std::vector<std::string> background;  // from implicit memory
    bool degraded = false;                // at least one retrieval call failed
};

namespace detail {

inline std::vector<std::string> dedupe_keep_order(const std::vector<std::string>& items) {
    std::vector<std::string> out;
    std::set<std::string> seen;
    for (const auto& s : items)
        if (seen.insert(s).second) out.push_back(s);
    return out;
}

inline bool is_none_line(const std::string& s) {
    const std::string t = to_lower(trim(s));
    return t == "none" || t == "none." || t == "n/a";
}

/// Query-vs-entry BM25 with stats over the given entry texts; entries that
/// score zero are dropped, the rest keep score order (ties by pool order).
inline std::vector<std::string> lexical_top_k(const std::vector<std::string>& texts,
                                              const std::string& query, int k) {
    CorpusStats stats;
    std::vector<DocTerms> terms;
    std::int64_t total_len = 0;
    for (const auto& t : texts) {
        terms.push_back(DocTerms::from_text(t));
        ++stats.doc_count;
        total_len += terms.back().length;
        std::set<std::string> uniq;
        for (const auto& [term, tf] : terms.back().tf) uniq.insert(term);
        for (const auto& term : uniq) ++stats.df[term];
    }
    stats.avg_doc_len =
        stats.doc_count > 0 ? static_cast<double>(total_len) / static_cast<double>(stats.doc_count)
                            : 0.0;
    const auto query_terms = tokenize(query);
    std::vector<std::pair<double, std::size_t>> scored;
    for (std::size_t i = 0; i < texts.size(); ++i) {
        const double s = bm25_score(query_terms, terms[i], stats);
        if (s > 0.0) scored.emplace_back(s, i);
    }
    std::stable_sort(scored.begin(), scored.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    std::vector<std::string> out;
    for (const auto& [s, i] : scored) {
        if (static_cast<int>(out.size()) == k) break;
        out.push_back(texts[i]);
    }
    return out;
}

}  // namespace detail

/// Pulls query-relevant profile lines out of the long-term store. LLM mode
/// asks the provider once per slot and kind; if every call fails it falls
/// back to lexical mode. Lexical mode is pure BM25 over rendered entries and
/// needs no provider.
inline RetrievedProfile retrieve_profile(const LongTermStore& store, const std::string& query,
                                         Provider* provider, const TemplateSet& templates,
                                         const RetrievalOptions& opt = {}) {
    RetrievedProfile out;

    auto texts_of = [&](const MemorySlot& slot, bool explicit_kind) {
        std::vector<std::string> texts;
        if (explicit_kind)
            for (const auto& e : slot.explicit_entries) texts.push_back(render_explicit_entry(e));
        else
            for (const auto& e : slot.implicit_entries) texts.push_back(render_implicit_entry(e));
        return texts;
    };

    auto lexical = [&](bool explicit_kind) {
        std::vector<std::string> pool;
        for (const auto& slot : store.slots)
            for (auto& t : texts_of(slot, explicit_kind)) pool.push_back(std::move(t));
        pool = detail::dedupe_keep_order(pool);
        return detail::lexical_top_k(pool, query, opt.k);
    };

    if (opt.mode == RetrievalMode::lexical || provider == nullptr) {
        if (opt.want_explicit) out.interests = lexical(true);
        if (opt.want_implicit) out.background = lexical(false);
        return out;
    }

    int calls = 0;
    int failures = 0;
    auto via_llm = [&](bool explicit_kind) {
        std::vector<std::string> items;
        for (const auto& slot : store.slots) {
            const auto texts = texts_of(slot, explicit_kind);
            if (texts.empty()) continue;
            ++calls;
            const Completion c = provider->complete(templates.render(
                PromptFamily::retrieve, {{"memory", join(texts, "\n")}, {"query", query}}));
            if (!c.ok) {
                ++failures;
                continue;
            }
            for (const auto& raw : split_lines(c.text)) {
                const std::string line = detail::strip_bullet(raw);
                if (!line.empty() && !detail::is_none_line(line)) items.push_back(line);
            }
        }
        return detail::dedupe_keep_order(items);
    };

    if (opt.want_explicit) out.interests = via_llm(true);
    if (opt.want_implicit) out.background = via_llm(false);
    if (calls > 0 && failures == calls) {
        if (opt.want_explicit) out.interests = lexical(true);
        if (opt.want_implicit) out.background = lexical(false);
        out.degraded = true;
    } else if (failures > 0) {
        out.degraded = true;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

inline void save_longterm(const LongTermStore& store, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write long-term store: " + path);
    nlohmann::ordered_json j = store;
    out << j.dump(2) << '\n';
}

inline LongTermStore load_longterm(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open long-term store: " + path);
    try {
        nlohmann::json j;
        in >> j;
        return j.get<LongTermStore>();
    } catch (const nlohmann::json::exception& e) {
        throw DataError("corrupt long-term store " + path + ": " + e.what());
    }
}

inline void save_sensory(const SensoryStore& store, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write sensory store: " + path);
    nlohmann::ordered_json j = store;
    out << j.dump(2) << '\n';
}

inline SensoryStore load_sensory(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open sensory store: " + path);
    try {
        nlohmann::json j;
        in >> j;
        return j.get<SensoryStore>();
    } catch (const nlohmann::json::exception& e) {
        throw DataError("corrupt sensory store " + path + ": " + e.what());
    }
}

}  // namespace cogs
