#pragma once

#include <chrono>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "cogs/cognition.hpp"
#include "cogs/longterm_memory.hpp"
#include "cogs/prompts.hpp"
#include "cogs/ranking.hpp"
#include "cogs/sensory_memory.hpp"
#include "cogs/working_memory.hpp"

namespace cogs {

struct PipelineToggles {
    bool sensory = true;
    bool working = true;            // rewrite + recent interactions + user modeling
    bool longterm_explicit = true;  // retrieve from explicit memory
    bool longterm_implicit = true;  // retrieve from implicit memory
};

enum class RankerKind { term, llm, vector, pclick };

inline const char* ranker_name(RankerKind k) {
    switch (k) {
        case RankerKind::term: return "term";
        case RankerKind::llm: return "llm";
        case RankerKind::vector: return "vector";
        case RankerKind::pclick: return "pclick";
    }
    return "unknown";
}

struct PipelineConfig {
    PipelineToggles toggles;
    RankerKind ranker = RankerKind::llm;
    int recent_m = kDefaultRecentM;
    RetrievalMode retrieval_mode = RetrievalMode::llm;
    int retrieval_k = kDefaultRetrievalK;
    int rank_window = kDefaultRankWindow;
    int rank_stride = kDefaultRankStride;
    Bm25Params bm25;
    double pclick_beta = kDefaultPclickBeta;
    double pclick_lambda = kDefaultPclickLambda;
    std::string vector_endpoint;
    WindowPolicy window;
};

/// Everything the pipeline holds for one user between queries.
struct UserState {
    std::string user_id;
    SensoryStore sensory;
    LongTermStore longterm;
    Session short_term;
    std::set<std::string> history_queries;  // normalized; fixes the repeated/non-repeated split
};

inline std::set<std::string> normalized_history_queries(const UserHistory& history) {
    std::set<std::string> out;
    for (const auto& it : history.flatten()) {
        const std::string q = normalize_query(it.query);
        if (!q.empty()) out.insert(q);
    }
    return out;
}

inline UserState build_user_state(const UserHistory& history, Provider& provider,
                                  const TemplateSet& templates, const TitleLookup& titles,
                                  const WindowPolicy& policy = {},
                                  const EncodeToggles& toggles = {}) {
    UserState state;
    state.user_id = history.user_id;
    state.sensory = build_sensory(history);
    state.longterm = build_longterm(history, provider, templates, titles, policy, toggles);
    state.short_term = history.short_term;
    state.history_queries = normalized_history_queries(history);
    return state;
}

struct StageLatencyMs {
    double sensory = 0.0;
    double working = 0.0;  // rewrite + retrieval
    double model = 0.0;
    double rank = 0.0;
    double total = 0.0;
};

/// Per-query record of what each stage saw and produced.
struct QueryTrace {
    std::string user_id;
    std::string query;
    std::int64_t timestamp = 0;
    bool sensory_checked = false;
    bool sensory_matched = false;
    std::string sensory_note;  // kNoRefindingMessage when the probe came up empty
    bool working_executed = false;
    std::string rewritten_query;
    std::vector<std::string> retrieved_explicit;
    std::vector<std::string> retrieved_implicit;
    std::string user_model;
    std::string ranker;
    std::vector<std::string> final_ranking;
    bool parse_failure = false;
    bool rewrite_degraded = false;
    bool retrieval_degraded = false;
    bool model_degraded = false;
    bool ranker_degraded = false;
    StageLatencyMs latency;  // wall-clock; excluded from JSON unless asked for

    bool any_degradation() const {
        return rewrite_degraded || retrieval_degraded || model_degraded || ranker_degraded;
    }
};

/// Latency fields are wall-clock and would break byte-for-byte reproducible
/// artifacts, so they are only emitted when `include_latency` is set.
inline nlohmann::ordered_json trace_to_json(const QueryTrace& t, bool include_latency = false) {
    nlohmann::ordered_json j;
    j["user_id"] = t.user_id;
    j["query"] = t.query;
    j["timestamp"] = t.timestamp;
    j["sensory"] = {{"checked", t.sensory_checked},
                    {"matched", t.sensory_matched},
                    {"note", t.sensory_note}};
    j["working"] = {{"executed", t.working_executed},
                    {"rewritten_query", t.rewritten_query},
                    {"retrieved_explicit", t.retrieved_explicit},
                    {"retrieved_implicit", t.retrieved_implicit},
                    {"user_model", t.user_model}};
    j["ranker"] = t.ranker;
    j["final_ranking"] = t.final_ranking;
    j["flags"] = {{"parse_failure", t.parse_failure},
                  {"rewrite_degraded", t.rewrite_degraded},
                  {"retrieval_degraded", t.retrieval_degraded},
                  {"model_degraded", t.model_degraded},
                  {"ranker_degraded", t.ranker_degraded}};
    if (include_latency)
        j["latency_ms"] = {{"sensory", t.latency.sensory},
                           {"working", t.latency.working},
                           {"model", t.latency.model},
                           {"rank", t.latency.rank},
                           {"total", t.latency.total}};
    return j;
}

namespace detail {

inline double ms_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
        .count();
}

}  // namespace detail

/// One query through the three-stage pipeline:
///  1. sensory probe — an exact re-finding hit answers immediately;
///  2. working memory — rewrite, recent interactions, long-term retrieval,
///     then user modeling (skipped when the working toggle is off);
///  3. ranker dispatch — term / llm / vector / pclick, with term-ranker
///     fallback when the vector service is unavailable.
inline std::pair<RankedResult, QueryTrace> handle_query(UserState& state, const TestQuery& tq,
                                                        const PipelineConfig& cfg,
                                                        Provider& provider,
                                                        const TemplateSet& templates,
                                                        const TitleLookup& titles) {
    QueryTrace trace;
    trace.user_id = tq.user_id;
    trace.query = tq.query;
    trace.timestamp = tq.timestamp;
    const auto t_start = std::chrono::steady_clock::now();

    if (cfg.toggles.sensory) {
        const auto t0 = std::chrono::steady_clock::now();
        const SensoryResponse resp = probe_sensory(state.sensory, tq.query, tq.candidates);
        trace.sensory_checked = true;
        trace.latency.sensory = detail::ms_since(t0);
        if (resp.matched) {
            trace.sensory_matched = true;
            RankedResult result;
            result.ranker_id = "sensory";
            for (const auto& id : resp.ranking) result.items.push_back({id, 0.0, false});
            trace.ranker = result.ranker_id;
            trace.final_ranking = resp.ranking;
            trace.latency.total = detail::ms_since(t_start);
            return {std::move(result), std::move(trace)};
        }
        trace.sensory_note = kNoRefindingMessage;
    }

    const auto t_working = std::chrono::steady_clock::now();
    AssembleOptions ao;
    ao.rewrite = cfg.toggles.working;
    ao.recent = cfg.toggles.working;
    ao.m = cfg.recent_m;
    ao.retrieval.mode = cfg.retrieval_mode;
    ao.retrieval.k = cfg.retrieval_k;
    ao.retrieval.want_explicit = cfg.toggles.longterm_explicit;
    ao.retrieval.want_implicit = cfg.toggles.longterm_implicit;
    const WorkingContext ctx =
        assemble_context(tq.query, state.short_term, state.longterm, &provider, templates, ao);
    trace.working_executed = cfg.toggles.working;
    trace.rewritten_query = ctx.rewritten_query;
    trace.retrieved_explicit = ctx.interests;
    trace.retrieved_implicit = ctx.background;
    trace.rewrite_degraded = ctx.rewrite_degraded;
    trace.retrieval_degraded = ctx.retrieval_degraded;
    trace.latency.working = detail::ms_since(t_working);

    const auto t_model = std::chrono::steady_clock::now();
    UserModel model;
    if (cfg.toggles.working) {
        model = model_user(ctx, provider, templates, titles);
    } else {
        model.text = tq.query;  // working memory off: U is the original query
    }
    trace.user_model = model.text;
    trace.model_degraded = model.degraded;
    trace.latency.model = detail::ms_since(t_model);

    const auto t_rank = std::chrono::steady_clock::now();
    RankedResult result;
    switch (cfg.ranker) {
        case RankerKind::term:
            result = term_rank(model.text, tq.candidates, cfg.bm25);
            break;
        case RankerKind::llm:
            result = llm_rank(provider, templates, tq.query, model.text, tq.candidates,
                              cfg.rank_window, cfg.rank_stride);
            break;
        case RankerKind::vector: {
#if defined(COGS_NO_HTTP)
            result = term_rank(model.text, tq.candidates, cfg.bm25);
            result.degraded = true;
#else
            auto outcome = vector_rank(cfg.vector_endpoint, model.text, tq.candidates,
                                       provider.config().timeout_seconds);
            if (outcome.available) {
                result = std::move(outcome.result);
            } else {
                result = term_rank(model.text, tq.candidates, cfg.bm25);
                result.degraded = true;
            }
#endif
            break;
        }
        case RankerKind::pclick:
            result = pclick_rank(state.sensory, tq.query, tq.candidates, cfg.pclick_beta,
                                 cfg.pclick_lambda);
            break;
    }
    trace.ranker = result.ranker_id;
    trace.final_ranking = result.ids();
    trace.parse_failure = result.parse_failure;
    trace.ranker_degraded = result.degraded;
    trace.latency.rank = detail::ms_since(t_rank);
    trace.latency.total = detail::ms_since(t_start);
    return {std::move(result), std::move(trace)};
}

/// Session boundary housekeeping: clicks feed the sensory index, the session
/// is folded into long-term memory (re-encoding the touched slots), and the
/// short-term buffer resets.
inline void end_of_session(UserState& state, const Session& session, Provider& provider,
                           const TemplateSet& templates, const TitleLookup& titles,
                           const EncodeToggles& encode = {}) {
    update_sensory(state.sensory, session);
    append_session(state.longterm, session, provider, templates, titles, encode);
    state.short_term = Session{};
}

}  // namespace cogs
