#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
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

constexpr int kDefaultRankWindow = 20;
constexpr int kDefaultRankStride = 10;
constexpr double kDefaultPclickBeta = 0.5;
constexpr double kDefaultPclickLambda = 1.0;
constexpr std::size_t kRankBodyChars = 200;  // body prefix shown to the ranking prompt

struct RankedItem {
    std::string doc_id;
    double score = 0.0;
    bool has_score = true;  // listwise rankers produce an order without scores
};

struct RankedResult {
    std::vector<RankedItem> items;  // best first; permutation of the candidates
    std::string ranker_id;
    bool parse_failure = false;  // some ranking reply was unusable (identity kept)
    bool degraded = false;       // provider/service failure along the way

    std::vector<std::string> ids() const {
        std::vector<std::string> out;
        out.reserve(items.size());
        for (const auto& it : items) out.push_back(it.doc_id);
        return out;
    }
};

namespace detail {

inline RankedResult from_scores(const std::vector<DocumentRef>& candidates,
                                const std::vector<double>& scores, std::string ranker_id) {
    std::vector<std::size_t> order(candidates.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    RankedResult out;
    out.ranker_id = std::move(ranker_id);
    out.items.reserve(candidates.size());
    for (std::size_t i : order) out.items.push_back({candidates[i].doc_id, scores[i], true});
    return out;
}

}  // namespace detail

/// Relevance = BM25 between the user-model text and each candidate, with
/// collection statistics computed over the candidate set itself.
inline RankedResult term_rank(const std::string& user_model,
                              const std::vector<DocumentRef>& candidates,
                              const Bm25Params& params = {}) {
    const CorpusStats stats = build_stats(candidates);
    const auto query_terms = tokenize(user_model);
    std::vector<double> scores;
    scores.reserve(candidates.size());
    for (const auto& d : candidates)
        scores.push_back(bm25_score(query_terms, DocTerms::from_text(doc_text(d)), stats, params));
    return detail::from_scores(candidates, scores, "term");
}

/// Numbered-list view of a candidate slice for the ranking prompt.
inline std::string render_rank_documents(const std::vector<DocumentRef>& candidates,
                                         const std::vector<std::size_t>& slice) {
    std::vector<std::string> lines;
    lines.reserve(slice.size());
    for (std::size_t i = 0; i < slice.size(); ++i) {
        const DocumentRef& d = candidates[slice[i]];
        std::string line = "[" + std::to_string(i + 1) + "] " + d.title;
        if (!d.body.empty()) line += " " + d.body.substr(0, kRankBodyChars);
        lines.push_back(std::move(line));
    }
    return join(lines, "\n");
}

/// Listwise LLM ranking over sliding windows, walked tail to head so that a
/// relevant document buried deep can bubble up by one stride per window. A
/// failed completion leaves its window untouched (degraded); an unparseable
/// reply keeps the window order and sets parse_failure.
inline RankedResult llm_rank(Provider& provider, const TemplateSet& templates,
                             const std::string& query, const std::string& preferences,
                             const std::vector<DocumentRef>& candidates,
                             int window = kDefaultRankWindow, int stride = kDefaultRankStride) {
    RankedResult out;
    out.ranker_id = "llm";
    const std::size_t n = candidates.size();
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    if (n > 0) {
        const auto w = static_cast<std::size_t>(window < 1 ? 1 : window);
        const auto step = static_cast<std::size_t>(stride < 1 ? 1 : stride);
        std::vector<std::size_t> starts;
        std::size_t s = n > w ? n - w : 0;
        while (true) {
            starts.push_back(s);
            if (s == 0) break;
            s = s > step ? s - step : 0;
        }
        for (std::size_t start : starts) {
            const std::size_t end = std::min(n, start + w);
            std::vector<std::size_t> slice(order.begin() + static_cast<std::ptrdiff_t>(start),
                                           order.begin() + static_cast<std::ptrdiff_t>(end));
            const std::string prompt =
                templates.render(PromptFamily::rank, {{"preferences", preferences},
                                                      {"query", query},
                                                      {"documents",
                                                       render_rank_documents(candidates, slice)}});
            const Completion c = provider.complete(prompt);
            if (!c.ok) {
                out.degraded = true;
                continue;
            }
            const RankParse parse = parse_ranking(c.text, static_cast<int>(slice.size()));
            if (!parse.parsed) out.parse_failure = true;
            for (std::size_t i = 0; i < slice.size(); ++i)
                order[start + i] = slice[static_cast<std::size_t>(parse.order[i] - 1)];
        }
    }
    out.items.reserve(n);
    for (std::size_t i : order) out.items.push_back({candidates[i].doc_id, 0.0, false});
    return out;
}

/// Personalized click baseline: candidates are rescored by
/// pscore = clicks(q, d) / (total clicks on q + beta) and fused with the
/// original order by symmetric Borda count (weight lambda on the pscore
/// ranking). Ties fall back to pscore, then to the original position.
inline RankedResult pclick_rank(const SensoryStore& store, const std::string& query,
                                const std::vector<DocumentRef>& candidates,
                                double beta = kDefaultPclickBeta,
                                double lambda = kDefaultPclickLambda) {
    const std::size_t n = candidates.size();
    std::vector<double> pscore(n, 0.0);
    auto entry = store.entries.find(normalize_query(query));
    if (entry != store.entries.end()) {
        std::int64_t total = 0;
        for (const auto& [doc, count] : entry->second) total += count;
        for (std::size_t i = 0; i < n; ++i) {
            auto it = entry->second.find(candidates[i].doc_id);
            if (it != entry->second.end())
                pscore[i] = static_cast<double>(it->second) /
                            (static_cast<double>(total) + beta);
        }
    }

    std::vector<std::size_t> by_pscore(n);
    for (std::size_t i = 0; i < n; ++i) by_pscore[i] = i;
    std::stable_sort(by_pscore.begin(), by_pscore.end(),
                     [&](std::size_t a, std::size_t b) { return pscore[a] > pscore[b]; });
    std::vector<double> borda(n, 0.0);
    for (std::size_t r = 0; r < n; ++r) {
        // original rank of candidate i is i+1; pscore rank of by_pscore[r] is r+1
        borda[by_pscore[r]] += lambda * static_cast<double>(n - (r + 1));
    }
    for (std::size_t i = 0; i < n; ++i)
        borda[i] += static_cast<double>(n - (i + 1));

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (borda[a] != borda[b]) return borda[a] > borda[b];
        return pscore[a] > pscore[b];
    });

    RankedResult out;
    out.ranker_id = "pclick";
    out.items.reserve(n);
    for (std::size_t i : order) out.items.push_back({candidates[i].doc_id, borda[i], true});
    return out;
}

}  // namespace cogs

#if !defined(COGS_NO_HTTP)
#include <httplib.h>

namespace cogs {

struct VectorRankOutcome {
    bool available = false;
    RankedResult result;
    std::string error;
};

/// Scores (preferences, doc) pairs through an external embedding service:
/// POST {"pairs":[{"text_a","text_b"},...]} -> {"scores":[...]}. Any
/// transport or shape problem reports the ranker as unavailable so the
/// caller can fall back to another ranker.
inline VectorRankOutcome vector_rank(const std::string& endpoint, const std::string& preferences,
                                     const std::vector<DocumentRef>& candidates,
                                     double timeout_seconds = 30.0) {
    VectorRankOutcome out;
    if (endpoint.empty()) {
        out.error = "vector ranker endpoint is not configured";
        return out;
    }
    const auto scheme_end = endpoint.find("://");
    if (scheme_end == std::string::npos) {
        out.error = "vector ranker endpoint must be an http(s) URL";
        return out;
    }
    const auto path_start = endpoint.find('/', scheme_end + 3);
    const std::string base =
        path_start == std::string::npos ? endpoint : endpoint.substr(0, path_start);
    const std::string path = path_start == std::string::npos ? "/score" : endpoint.substr(path_start);

    nlohmann::json body;
    body["pairs"] = nlohmann::json::array();
    for (const auto& d : candidates)
        body["pairs"].push_back({{"text_a", preferences}, {"text_b", doc_text(d)}});

    httplib::Client client(base);
    const auto timeout_s = static_cast<time_t>(timeout_seconds);
    client.set_connection_timeout(timeout_s, 0);
    client.set_read_timeout(timeout_s, 0);
    auto res = client.Post(path, body.dump(), "application/json");
    if (!res) {
        out.error = "vector service unreachable: " + httplib::to_string(res.error());
        return out;
    }
    if (res->status != 200) {
        out.error = "vector service returned status " + std::to_string(res->status);
        return out;
    }
    std::vector<double> scores;
    try {
        scores = nlohmann::json::parse(res->body).at("scores").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
        out.error = std::string("unexpected vector service response: ") + e.what();
        return out;
    }
    if (scores.size() != candidates.size()) {
        out.error = "vector service returned " + std::to_string(scores.size()) + " scores for " +
                    std::to_string(candidates.size()) + " pairs";
        return out;
    }
    out.available = true;
    out.result = detail::from_scores(candidates, scores, "vector");
    return out;
}

}  // namespace cogs
#endif  // COGS_NO_HTTP
