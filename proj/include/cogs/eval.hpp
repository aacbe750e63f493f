#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "cogs/bm25.hpp"
#include "cogs/log_model.hpp"
#include "cogs/metrics.hpp"
#include "cogs/pipeline.hpp"

namespace cogs {

constexpr std::size_t kDefaultCandidateK = 50;

struct EvalOptions {
    int jobs = 1;
    bool progressive = false;     // fold test interactions back into memory
    bool pimp_macro = false;      // macro-average p-improve instead of micro
    bool user_average = false;    // macro-average MAP/MRR/P@1 over users
    bool include_latency = false; // wall-clock numbers in metrics.json / trace rows
    std::size_t candidate_k = kDefaultCandidateK;
    bool inject_relevant = true;  // ensure ground-truth docs appear as candidates
};

/// Builds candidate sets for every test query that lacks one.
inline void attach_candidates(std::vector<TestQuery>& tests, const Corpus& corpus,
                              const EvalOptions& opts, const Bm25Params& params = {}) {
    static const std::vector<std::string> kNone;
    for (auto& tq : tests) {
        if (!tq.candidates.empty()) continue;
        tq.candidates = corpus.candidates(tq.query, opts.candidate_k,
                                          opts.inject_relevant ? tq.clicked : kNone, params);
    }
}

struct PerQueryResult {
    std::size_t index = 0;  // position in the test list
    QueryTrace trace;
    RankedResult ranked;
    double ap = 0.0, rr = 0.0, p1 = 0.0;
    PairCounts pairs;
    bool repeated = false;
    bool no_relevant = false;  // ranking holds none of the relevant docs
    bool failed = false;
    std::string error;
};

struct SubsetMetrics {
    std::size_t queries = 0;
    double map = 0.0, mrr = 0.0, p_at_1 = 0.0, p_improve = 0.0;
    std::int64_t pairs_improved = 0, pairs_degraded = 0, pairs_inverse = 0, pairs_correct = 0;
    std::size_t no_relevant = 0;
};

struct LatencyStats {
    double mean_ms = 0.0, p50_ms = 0.0, p95_ms = 0.0, max_ms = 0.0;
};

struct MetricReport {
    SubsetMetrics all, repeated, non_repeated;
    std::size_t total_queries = 0, failed_queries = 0;
    std::size_t sensory_answered = 0, degraded_queries = 0, parse_failures = 0;
    std::size_t provider_calls = 0;
    LatencyStats latency;
    std::string pimp_version = kPimpVersion;
};

struct EvalOutcome {
    MetricReport report;
    std::vector<PerQueryResult> per_query;  // test-list order, failures included
};

namespace detail {

template <typename Pred>
SubsetMetrics aggregate_subset(const std::vector<PerQueryResult>& rows, Pred pred,
                               const EvalOptions& opts) {
    SubsetMetrics m;
    double ap_sum = 0.0, rr_sum = 0.0, p1_sum = 0.0;
    double macro_pimp_sum = 0.0;
    std::size_t macro_pimp_n = 0;
    std::map<std::string, std::pair<double, std::size_t>> by_user;  // ap sum, count
    std::map<std::string, std::pair<double, std::size_t>> by_user_rr;
    std::map<std::string, std::pair<double, std::size_t>> by_user_p1;
    for (const auto& r : rows) {
        if (r.failed || !pred(r)) continue;
        ++m.queries;
        ap_sum += r.ap;
        rr_sum += r.rr;
        p1_sum += r.p1;
        m.pairs_improved += r.pairs.improved;
        m.pairs_degraded += r.pairs.degraded;
        m.pairs_inverse += r.pairs.inverse_total;
        m.pairs_correct += r.pairs.correct_total;
        if (r.no_relevant) ++m.no_relevant;
        if (r.pairs.inverse_total > 0) {
            macro_pimp_sum += static_cast<double>(r.pairs.improved) /
                              static_cast<double>(r.pairs.inverse_total);
            ++macro_pimp_n;
        }
        const std::string& u = r.trace.user_id;
        by_user[u].first += r.ap;
        by_user[u].second += 1;
        by_user_rr[u].first += r.rr;
        by_user_rr[u].second += 1;
        by_user_p1[u].first += r.p1;
        by_user_p1[u].second += 1;
    }
    if (m.queries > 0) {
        if (opts.user_average) {
            auto macro = [](const std::map<std::string, std::pair<double, std::size_t>>& g) {
                double sum = 0.0;
                for (const auto& [u, v] : g) sum += v.first / static_cast<double>(v.second);
                return sum / static_cast<double>(g.size());
            };
            m.map = macro(by_user);
            m.mrr = macro(by_user_rr);
            m.p_at_1 = macro(by_user_p1);
        } else {
            m.map = ap_sum / static_cast<double>(m.queries);
            m.mrr = rr_sum / static_cast<double>(m.queries);
            m.p_at_1 = p1_sum / static_cast<double>(m.queries);
        }
    }
    if (opts.pimp_macro) {
        m.p_improve = macro_pimp_n > 0 ? macro_pimp_sum / static_cast<double>(macro_pimp_n) : 0.0;
    } else {
        m.p_improve = m.pairs_inverse > 0 ? static_cast<double>(m.pairs_improved) /
                                                static_cast<double>(m.pairs_inverse)
                                          : 0.0;
    }
    return m;
}

inline LatencyStats latency_stats(const std::vector<PerQueryResult>& rows) {
    std::vector<double> totals;
    for (const auto& r : rows)
        if (!r.failed) totals.push_back(r.trace.latency.total);
    LatencyStats out;
    if (totals.empty()) return out;
    double sum = 0.0;
    for (double v : totals) sum += v;
    out.mean_ms = sum / static_cast<double>(totals.size());
    std::sort(totals.begin(), totals.end());
    auto at = [&](double q) {
        const auto idx =
            static_cast<std::size_t>(q * static_cast<double>(totals.size() - 1));
        return totals[idx];
    };
    out.p50_ms = at(0.50);
    out.p95_ms = at(0.95);
    out.max_ms = totals.back();
    return out;
}

/// Session-boundary test mirroring segment_sessions.
inline bool starts_new_session(const Session& open, const TestQuery& tq) {
    if (open.interactions.empty()) return false;
    const Interaction& prev = open.interactions.back();
    if (!tq.session_id.empty() || !prev.session_id.empty())
        return tq.session_id != prev.session_id;
    return tq.timestamp - prev.timestamp > kSessionGapSeconds;
}

}  // namespace detail

/// Replays the test queries through the pipeline and scores every ranking
/// against the logged clicks. Users are independent, so `jobs` worker threads
/// split the users; results are still reported in test-list order. A
/// per-query failure is recorded and excluded from the averages rather than
/// aborting the run.
inline EvalOutcome evaluate_run(const std::vector<TestQuery>& tests,
                                std::map<std::string, UserState>& states,
                                const PipelineConfig& cfg, Provider& provider,
                                const TemplateSet& templates, const TitleLookup& titles,
                                const EvalOptions& opts = {}) {
    EvalOutcome out;
    out.per_query.resize(tests.size());

    std::vector<std::pair<std::string, std::vector<std::size_t>>> per_user;
    {
        std::map<std::string, std::size_t> seen;
        for (std::size_t i = 0; i < tests.size(); ++i) {
            auto [it, fresh] = seen.emplace(tests[i].user_id, per_user.size());
            if (fresh) per_user.push_back({tests[i].user_id, {}});
            per_user[it->second].second.push_back(i);
        }
    }

    const std::size_t calls_before = provider.sink() ? provider.sink()->count() : 0;

    auto run_user = [&](const std::pair<std::string, std::vector<std::size_t>>& work) {
        auto state_it = states.find(work.first);
        for (std::size_t index : work.second) {
            const TestQuery& tq = tests[index];
            PerQueryResult& r = out.per_query[index];
            r.index = index;
            r.trace.user_id = tq.user_id;
            r.trace.query = tq.query;
            r.trace.timestamp = tq.timestamp;
            if (state_it == states.end()) {
                r.failed = true;
                r.error = "no user state for " + tq.user_id;
                continue;
            }
            UserState& state = state_it->second;
            r.repeated = state.history_queries.count(normalize_query(tq.query)) > 0;
            try {
                if (tq.candidates.empty())
                    throw DataError("test query has no candidate documents");
                if (opts.progressive && detail::starts_new_session(state.short_term, tq)) {
                    const Session finished = state.short_term;
                    end_of_session(state, finished, provider, templates, titles);
                }
                auto [ranked, trace] =
                    handle_query(state, tq, cfg, provider, templates, titles);
                const auto relevant = tq.relevant();
                std::vector<std::string> original;
                original.reserve(tq.candidates.size());
                for (const auto& d : tq.candidates) original.push_back(d.doc_id);
                r.ap = average_precision(trace.final_ranking, relevant);
                r.rr = reciprocal_rank(trace.final_ranking, relevant);
                r.p1 = precision_at_1(trace.final_ranking, relevant);
                r.pairs = inverse_pair_counts(original, trace.final_ranking, relevant);
                r.no_relevant = r.rr == 0.0;
                r.trace = std::move(trace);
                r.ranked = std::move(ranked);
                if (opts.progressive) {
                    state.short_term.session_id = tq.session_id;
                    state.short_term.interactions.push_back(Interaction{
                        tq.query, tq.timestamp, tq.session_id, tq.clicked, tq.skipped});
                }
            } catch (const std::exception& e) {
                r.failed = true;
                r.error = e.what();
            }
        }
    };

    const int jobs = std::max(1, opts.jobs);
    if (jobs == 1 || per_user.size() <= 1) {
        for (const auto& work : per_user) run_user(work);
    } else {
        std::atomic<std::size_t> next{0};
        auto worker = [&] {
            while (true) {
                const std::size_t i = next.fetch_add(1);
                if (i >= per_user.size()) break;
                run_user(per_user[i]);
            }
        };
        std::vector<std::thread> pool;
        const std::size_t n_threads =
            std::min<std::size_t>(static_cast<std::size_t>(jobs), per_user.size());
        pool.reserve(n_threads);
        for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    MetricReport& rep = out.report;
    rep.all = detail::aggregate_subset(out.per_query, [](const PerQueryResult&) { return true; },
                                       opts);
    rep.repeated = detail::aggregate_subset(
        out.per_query, [](const PerQueryResult& r) { return r.repeated; }, opts);
    rep.non_repeated = detail::aggregate_subset(
        out.per_query, [](const PerQueryResult& r) { return !r.repeated; }, opts);
    rep.total_queries = tests.size();
    for (const auto& r : out.per_query) {
        if (r.failed) ++rep.failed_queries;
        if (r.trace.sensory_matched) ++rep.sensory_answered;
        if (!r.failed && r.trace.any_degradation()) ++rep.degraded_queries;
        if (r.trace.parse_failure) ++rep.parse_failures;
    }
    rep.provider_calls = provider.sink() ? provider.sink()->count() - calls_before : 0;
    rep.latency = detail::latency_stats(out.per_query);
    return out;
}

// ---------------------------------------------------------------------------
// Reports and artifacts
// ---------------------------------------------------------------------------

inline nlohmann::ordered_json subset_to_json(const SubsetMetrics& m) {
    return nlohmann::ordered_json{{"queries", m.queries},
                                  {"map", m.map},
                                  {"mrr", m.mrr},
                                  {"p_at_1", m.p_at_1},
                                  {"p_improve", m.p_improve},
                                  {"no_relevant_retrieved", m.no_relevant},
                                  {"pairs",
                                   {{"improved", m.pairs_improved},
                                    {"degraded", m.pairs_degraded},
                                    {"inverse", m.pairs_inverse},
                                    {"correct", m.pairs_correct}}}};
}

/// metrics.json body. Latency is wall-clock and therefore only included on
/// request; leaving it out keeps a fixed-config rerun byte-identical.
inline nlohmann::ordered_json metrics_to_json(const MetricReport& rep, const PipelineConfig& cfg,
                                              const EvalOptions& opts) {
    nlohmann::ordered_json j;
    j["pimp_version"] = rep.pimp_version;
    j["config"] = {{"ranker", ranker_name(cfg.ranker)},
                   {"toggles",
                    {{"sensory", cfg.toggles.sensory},
                     {"working", cfg.toggles.working},
                     {"longterm_explicit", cfg.toggles.longterm_explicit},
                     {"longterm_implicit", cfg.toggles.longterm_implicit}}},
                   {"retrieval_mode", cfg.retrieval_mode == RetrievalMode::llm ? "llm" : "lexical"},
                   {"progressive", opts.progressive},
                   {"user_average", opts.user_average},
                   {"pimp_macro", opts.pimp_macro}};
    j["queries"] = {{"total", rep.total_queries},
                    {"failed", rep.failed_queries},
                    {"sensory_answered", rep.sensory_answered},
                    {"degraded", rep.degraded_queries},
                    {"parse_failures", rep.parse_failures}};
    j["provider_calls"] = rep.provider_calls;
    j["subsets"] = {{"all", subset_to_json(rep.all)},
                    {"repeated", subset_to_json(rep.repeated)},
                    {"non_repeated", subset_to_json(rep.non_repeated)}};
    if (opts.include_latency)
        j["latency_ms"] = {{"mean", rep.latency.mean_ms},
                           {"p50", rep.latency.p50_ms},
                           {"p95", rep.latency.p95_ms},
                           {"max", rep.latency.max_ms}};
    return j;
}

inline std::string format_double(double v, int precision = 4) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(precision) << v;
    return os.str();
}

inline std::string metrics_markdown(const MetricReport& rep) {
    std::ostringstream os;
    os << "# Evaluation report\n\n";
    os << "- queries: " << rep.total_queries << " (failed: " << rep.failed_queries << ")\n";
    os << "- answered from sensory memory: " << rep.sensory_answered << "\n";
    os << "- degraded queries: " << rep.degraded_queries
       << ", ranking parse failures: " << rep.parse_failures << "\n";
    os << "- provider calls: " << rep.provider_calls << "\n";
    os << "- p-improve definition: " << rep.pimp_version << "\n\n";
    os << "| subset | queries | MAP | MRR | P@1 | P-improve | no relevant |\n";
    os << "|---|---|---|---|---|---|---|\n";
    auto row = [&](const char* name, const SubsetMetrics& m) {
        os << "| " << name << " | " << m.queries << " | " << format_double(m.map) << " | "
           << format_double(m.mrr) << " | " << format_double(m.p_at_1) << " | "
           << format_double(m.p_improve) << " | " << m.no_relevant << " |\n";
    };
    row("all", rep.all);
    row("repeated", rep.repeated);
    row("non-repeated", rep.non_repeated);
    os << "\n";
    os << "Latency (ms): mean " << format_double(rep.latency.mean_ms, 3) << ", p50 "
       << format_double(rep.latency.p50_ms, 3) << ", p95 " << format_double(rep.latency.p95_ms, 3)
       << ", max " << format_double(rep.latency.max_ms, 3) << "\n";
    return os.str();
}

inline void write_text_file(const std::string& path, const std::string& content) {
    if (const auto dir = std::filesystem::path(path).parent_path(); !dir.empty())
        std::filesystem::create_directories(dir);
    std::ofstream out(path);
    if (!out) throw DataError("cannot write file: " + path);
    out << content;
}

inline void write_trace_jsonl(const std::string& path, const std::vector<PerQueryResult>& rows,
                              bool include_latency = false) {
    std::ostringstream os;
    for (const auto& r : rows) {
        if (r.failed) {
            nlohmann::ordered_json j;
            j["user_id"] = r.trace.user_id;
            j["query"] = r.trace.query;
            j["failed"] = true;
            j["error"] = r.error;
            os << j.dump() << '\n';
        } else {
            os << trace_to_json(r.trace, include_latency).dump() << '\n';
        }
    }
    write_text_file(path, os.str());
}

inline void write_rankings_jsonl(const std::string& path,
                                 const std::vector<PerQueryResult>& rows) {
    std::ostringstream os;
    for (const auto& r : rows) {
        if (r.failed) continue;
        nlohmann::ordered_json j;
        j["user_id"] = r.trace.user_id;
        j["query"] = r.trace.query;
        j["timestamp"] = r.trace.timestamp;
        j["ranker"] = r.ranked.ranker_id;
        auto items = nlohmann::ordered_json::array();
        for (const auto& it : r.ranked.items) {
            nlohmann::ordered_json item{{"doc_id", it.doc_id}};
            if (it.has_score) item["score"] = it.score;
            items.push_back(std::move(item));
        }
        j["items"] = std::move(items);
        os << j.dump() << '\n';
    }
    write_text_file(path, os.str());
}

// ---------------------------------------------------------------------------
// History sweep
// ---------------------------------------------------------------------------

struct SweepPoint {
    double fraction = 0.0;
    MetricReport report;
};

/// Rebuilds each user's memory from only the most recent floor(f*n)
/// interactions of their history and re-runs the evaluation, once per
/// fraction. Shows how ranking quality scales with history size.
inline std::vector<SweepPoint> history_sweep(
    const std::vector<double>& fractions, const std::vector<UserHistory>& histories,
    const std::vector<TestQuery>& tests, const PipelineConfig& cfg, Provider& provider,
    const TemplateSet& templates, const TitleLookup& titles, const EvalOptions& opts = {},
    const EncodeToggles& encode = {}) {
    std::vector<SweepPoint> points;
    for (double f : fractions) {
        std::map<std::string, UserState> states;
        for (const auto& full : histories) {
            const auto all = full.flatten();
            const std::size_t keep = split_point(all.size(), std::min(1.0, std::max(0.0, f)));
            std::vector<Interaction> tail(all.end() - static_cast<std::ptrdiff_t>(keep),
                                          all.end());
            UserHistory cut;
            cut.user_id = full.user_id;
            auto sessions = segment_sessions(tail);
            if (!sessions.empty()) {
                cut.short_term = sessions.back();
                sessions.pop_back();
                cut.long_term = std::move(sessions);
            }
            states.emplace(cut.user_id,
                           build_user_state(cut, provider, templates, titles, cfg.window, encode));
        }
        EvalOptions run_opts = opts;
        auto outcome = evaluate_run(tests, states, cfg, provider, templates, titles, run_opts);
        points.push_back({f, std::move(outcome.report)});
    }
    return points;
}

inline std::string curve_csv(const std::vector<SweepPoint>& points) {
    std::ostringstream os;
    os << "fraction,queries,map,mrr,p_at_1,p_improve\n";
    for (const auto& p : points) {
        os << format_double(p.fraction, 2) << ',' << p.report.all.queries << ','
           << format_double(p.report.all.map, 6) << ',' << format_double(p.report.all.mrr, 6)
           << ',' << format_double(p.report.all.p_at_1, 6) << ','
           << format_double(p.report.all.p_improve, 6) << '\n';
    }
    return os.str();
}

// ---------------------------------------------------------------------------
// Ablation suite
// ---------------------------------------------------------------------------

struct AblationRow {
    std::string name;
    PipelineToggles toggles;
    MetricReport report;
};

/// Five fixed rows: each memory stage switched off in turn, then the full
/// pipeline. States are shared read-only, so progressive mode is forced off.
inline std::vector<AblationRow> ablation_suite(const std::vector<TestQuery>& tests,
                                               std::map<std::string, UserState>& states,
                                               const PipelineConfig& base, Provider& provider,
                                               const TemplateSet& templates,
                                               const TitleLookup& titles,
                                               const EvalOptions& opts = {}) {
    EvalOptions run_opts = opts;
    run_opts.progressive = false;

    std::vector<std::pair<std::string, PipelineToggles>> rows;
    {
        PipelineToggles t = base.toggles;
        t.sensory = false;
        rows.push_back({"no_sensory", t});
    }
    {
        PipelineToggles t = base.toggles;
        t.working = false;
        rows.push_back({"no_working", t});
    }
    {
        PipelineToggles t = base.toggles;
        t.longterm_explicit = false;
        rows.push_back({"no_longterm_explicit", t});
    }
    {
        PipelineToggles t = base.toggles;
        t.longterm_implicit = false;
        rows.push_back({"no_longterm_implicit", t});
    }
    rows.push_back({"full", base.toggles});

    std::vector<AblationRow> out;
    for (auto& [name, toggles] : rows) {
        PipelineConfig cfg = base;
        cfg.toggles = toggles;
        auto outcome = evaluate_run(tests, states, cfg, provider, templates, titles, run_opts);
        out.push_back({name, toggles, std::move(outcome.report)});
    }
    return out;
}

inline nlohmann::ordered_json ablation_to_json(const std::vector<AblationRow>& rows,
                                               const PipelineConfig& cfg,
                                               const EvalOptions& opts) {
    const MetricReport* full = nullptr;
    for (const auto& r : rows)
        if (r.name == "full") full = &r.report;
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const auto& r : rows) {
        EvalOptions with_latency = opts;
        with_latency.include_latency = true;
        nlohmann::ordered_json j = metrics_to_json(r.report, cfg, with_latency);
        j["name"] = r.name;
        j["toggles"] = {{"sensory", r.toggles.sensory},
                        {"working", r.toggles.working},
                        {"longterm_explicit", r.toggles.longterm_explicit},
                        {"longterm_implicit", r.toggles.longterm_implicit}};
        if (full) {
            j["delta_map_vs_full"] = r.report.all.map - full->all.map;
            j["delta_mean_latency_ms_vs_full"] =
                r.report.latency.mean_ms - full->latency.mean_ms;
        }
        arr.push_back(std::move(j));
    }
    return nlohmann::ordered_json{{"rows", std::move(arr)}};
}

inline std::string ablation_markdown(const std::vector<AblationRow>& rows) {
    const MetricReport* full = nullptr;
    for (const auto& r : rows)
        if (r.name == "full") full = &r.report;
    std::ostringstream os;
    os << "# Ablation\n\n";
    os << "| variant | MAP | dMAP | MRR | P@1 | P-improve | sensory answered | mean latency (ms) "
          "| dlatency (ms) |\n";
    os << "|---|---|---|---|---|---|---|---|---|\n";
    for (const auto& r : rows) {
        const double dmap = full ? r.report.all.map - full->all.map : 0.0;
        const double dlat = full ? r.report.latency.mean_ms - full->latency.mean_ms : 0.0;
        os << "| " << r.name << " | " << format_double(r.report.all.map) << " | "
           << format_double(dmap) << " | " << format_double(r.report.all.mrr) << " | "
           << format_double(r.report.all.p_at_1) << " | "
           << format_double(r.report.all.p_improve) << " | " << r.report.sensory_answered
           << " | " << format_double(r.report.latency.mean_ms, 3) << " | "
           << format_double(dlat, 3) << " |\n";
    }
    return os.str();
}

}  // namespace cogs
