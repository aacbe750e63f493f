#define COGS_NO_HTTP 1
#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "cogs/eval.hpp"

using namespace cogs;

namespace {

Corpus small_corpus() {
    return Corpus({{"dA", "alpha news", "alpha topic words here"},
                   {"dB", "beta news", "beta topic words here"},
                   {"dC", "gamma news", "gamma topic words here"},
                   {"dD", "delta news", "delta topic words here"}});
}

UserHistory u1_history() {
    UserHistory h;
    h.user_id = "u1";
    h.long_term = {Session{"s1", {Interaction{"alpha news", 100, "s1", {"dA"}, {}}}}};
    h.short_term = Session{"s2", {Interaction{"beta news", 200, "s2", {"dB"}, {}}}};
    return h;
}

std::map<std::string, UserState> one_user_states(MockProvider& p) {
    std::map<std::string, UserState> states;
    states.emplace("u1", build_user_state(u1_history(), p, TemplateSet::defaults(),
                                          make_title_lookup({})));
    return states;
}

TestQuery tq(const std::string& user, const std::string& query, const std::string& session,
             std::vector<std::string> clicked, std::int64_t ts = 1000) {
    TestQuery t;
    t.user_id = user;
    t.query = query;
    t.session_id = session;
    t.timestamp = ts;
    t.clicked = std::move(clicked);
    return t;
}

PipelineConfig term_config() {
    PipelineConfig cfg;
    cfg.ranker = RankerKind::term;
    return cfg;
}

}  // namespace

TEST_CASE("attach_candidates fills only empty candidate sets") {
    Corpus corpus = small_corpus();
    std::vector<TestQuery> tests = {tq("u1", "gamma news", "t1", {"dD"})};
    EvalOptions opts;
    opts.candidate_k = 3;
    attach_candidates(tests, corpus, opts);
    REQUIRE(tests[0].candidates.size() == 4);  // top-3 plus the injected dD
    CHECK(tests[0].candidates[0].doc_id == "dC");
    CHECK(tests[0].candidates[3].doc_id == "dD");

    auto before = tests[0].candidates;
    attach_candidates(tests, corpus, opts);  // second call is a no-op
    CHECK(tests[0].candidates.size() == before.size());

    // Without injection the clicked doc can be absent.
    std::vector<TestQuery> bare = {tq("u1", "gamma news", "t1", {"dD"})};
    EvalOptions no_inject = opts;
    no_inject.inject_relevant = false;
    attach_candidates(bare, corpus, no_inject);
    CHECK(bare[0].candidates.size() == 3);
}

TEST_CASE("handle_query answers repeated queries from sensory memory") {
    MockProvider p(ProviderConfig{});
    TraceSink sink;
    p.set_sink(&sink);
    auto states = one_user_states(p);
    sink.clear();  // drop the build-time encode calls

    TestQuery t = tq("u1", "alpha news", "t1", {"dA"});
    t.candidates = small_corpus().candidates("alpha news", 3, t.clicked);
    auto [ranked, trace] = handle_query(states.at("u1"), t, term_config(), p,
                                        TemplateSet::defaults(), make_title_lookup({}));
    CHECK(trace.sensory_checked);
    CHECK(trace.sensory_matched);
    CHECK(trace.ranker == "sensory");
    CHECK(ranked.ranker_id == "sensory");
    CHECK(trace.final_ranking[0] == "dA");
    CHECK_FALSE(ranked.items[0].has_score);
    CHECK(sink.count() == 0);  // the whole query cost zero provider calls
}

TEST_CASE("handle_query runs the full pipeline on a sensory miss") {
    MockProvider p(ProviderConfig{});
    TraceSink sink;
    p.set_sink(&sink);
    auto states = one_user_states(p);
    sink.clear();

    TestQuery t = tq("u1", "gamma news", "t1", {"dC"});
    t.candidates = small_corpus().candidates("gamma news", 3, t.clicked);
    auto [ranked, trace] = handle_query(states.at("u1"), t, term_config(), p,
                                        TemplateSet::defaults(), make_title_lookup({}));
    CHECK(trace.sensory_checked);
    CHECK_FALSE(trace.sensory_matched);
    CHECK(trace.sensory_note == "No re-finding data found");
    CHECK(trace.working_executed);
    CHECK(trace.rewritten_query == "gamma news");  // echo answers with the query section
    CHECK(trace.user_model == "gamma news");
    CHECK(trace.ranker == "term");
    CHECK(trace.final_ranking[0] == "dC");
    CHECK(sink.count() > 0);
}

TEST_CASE("handle_query with working off keeps the original query as the model") {
    MockProvider p(ProviderConfig{},
                   {{"query re-writer", false, "should not fire", false}});
    TraceSink sink;
    p.set_sink(&sink);
    auto states = one_user_states(p);
    sink.clear();

    PipelineConfig cfg = term_config();
    cfg.toggles.working = false;
    cfg.retrieval_mode = RetrievalMode::lexical;  // keep retrieval provider-free

    TestQuery t = tq("u1", "gamma news", "t1", {"dC"});
    t.candidates = small_corpus().candidates("gamma news", 3, t.clicked);
    auto [ranked, trace] = handle_query(states.at("u1"), t, cfg, p, TemplateSet::defaults(),
                                        make_title_lookup({}));
    CHECK_FALSE(trace.working_executed);
    CHECK(trace.rewritten_query == "gamma news");  // untouched
    CHECK(trace.user_model == "gamma news");
    CHECK(sink.count() == 0);  // no rewrite, no llm retrieval, no modeling
    // Long-term retrieval still ran (lexically) and is visible in the trace.
    CHECK_FALSE(trace.retrieved_explicit.empty());
}

TEST_CASE("vector ranker without transport support falls back to term") {
    MockProvider p(ProviderConfig{});
    auto states = one_user_states(p);
    PipelineConfig cfg = term_config();
    cfg.ranker = RankerKind::vector;
    cfg.vector_endpoint = "http://127.0.0.1:1/score";

    TestQuery t = tq("u1", "gamma news", "t1", {"dC"});
    t.candidates = small_corpus().candidates("gamma news", 3, t.clicked);
    auto [ranked, trace] = handle_query(states.at("u1"), t, cfg, p, TemplateSet::defaults(),
                                        make_title_lookup({}));
    CHECK(trace.ranker == "term");
    CHECK(trace.ranker_degraded);
}

TEST_CASE("end_of_session feeds sensory and long-term memory and resets short-term") {
    MockProvider p(ProviderConfig{});
    auto states = one_user_states(p);
    UserState& state = states.at("u1");
    const std::size_t slots_before = state.longterm.slots.size();

    Session finished{"t1", {Interaction{"new thing", 900, "t1", {"dD"}, {}}}};
    end_of_session(state, finished, p, TemplateSet::defaults(), make_title_lookup({}));
    CHECK(state.sensory.entries.at("new thing").at("dD") == 1);
    CHECK(state.longterm.slots.size() >= slots_before);
    bool found = false;
    for (const auto& slot : state.longterm.slots)
        for (const auto& it : slot.interactions) found = found || it.query == "new thing";
    CHECK(found);
    CHECK(state.short_term.interactions.empty());
}

TEST_CASE("evaluate_run scores, splits subsets, and isolates failures") {
    MockProvider p(ProviderConfig{});
    TraceSink sink;
    p.set_sink(&sink);
    auto states = one_user_states(p);

    Corpus corpus = small_corpus();
    std::vector<TestQuery> tests = {
        tq("u1", "alpha news", "t1", {"dA"}),   // repeated -> sensory hit
        tq("u1", "gamma news", "t1", {"dD"}),   // fresh -> term ranker
        tq("ghost", "anything", "t1", {"dA"}),  // no state -> failed
    };
    EvalOptions opts;
    opts.candidate_k = 3;
    attach_candidates(tests, corpus, opts);

    const std::size_t calls_before = sink.count();
    EvalOutcome out = evaluate_run(tests, states, term_config(), p, TemplateSet::defaults(),
                                   make_title_lookup({}), opts);

    REQUIRE(out.per_query.size() == 3);
    CHECK(out.report.total_queries == 3);
    CHECK(out.report.failed_queries == 1);
    CHECK(out.report.sensory_answered == 1);
    CHECK(out.per_query[2].failed);
    CHECK(out.per_query[2].error.find("ghost") != std::string::npos);

    // Query 1: sensory puts dA first -> perfect scores.
    CHECK(out.per_query[0].repeated);
    CHECK(out.per_query[0].ap == 1.0);
    CHECK(out.per_query[0].p1 == 1.0);

    // Query 2: candidates [dC dA dB dD]; the term ranker cannot beat "news"
    // ties, so dD stays last: AP = RR = 1/4.
    CHECK_FALSE(out.per_query[1].repeated);
    CHECK(out.per_query[1].ap == Catch::Approx(0.25));
    CHECK(out.per_query[1].rr == Catch::Approx(0.25));
    CHECK(out.per_query[1].p1 == 0.0);
    CHECK(out.per_query[1].pairs.inverse_total == 3);

    // Aggregates ignore the failed row.
    CHECK(out.report.all.queries == 2);
    CHECK(out.report.all.map == Catch::Approx((1.0 + 0.25) / 2.0));
    CHECK(out.report.repeated.queries == 1);
    CHECK(out.report.repeated.map == Catch::Approx(1.0));
    CHECK(out.report.non_repeated.queries == 1);
    CHECK(out.report.non_repeated.map == Catch::Approx(0.25));
    CHECK(out.report.all.no_relevant == 0);
    CHECK(out.report.provider_calls == sink.count() - calls_before);
    CHECK(out.report.provider_calls > 0);  // the fresh query needed the provider
}

TEST_CASE("evaluate_run requires candidates") {
    MockProvider p(ProviderConfig{});
    auto states = one_user_states(p);
    std::vector<TestQuery> tests = {tq("u1", "gamma news", "t1", {"dC"})};
    EvalOutcome out = evaluate_run(tests, states, term_config(), p, TemplateSet::defaults(),
                                   make_title_lookup({}));
    REQUIRE(out.per_query.size() == 1);
    CHECK(out.per_query[0].failed);
    CHECK(out.per_query[0].error.find("no candidate") != std::string::npos);
}

TEST_CASE("progressive mode folds finished test sessions into memory") {
    MockProvider p(ProviderConfig{});
    auto states = one_user_states(p);
    Corpus corpus = small_corpus();
    std::vector<TestQuery> tests = {
        tq("u1", "gamma news", "t1", {"dC"}, 1000),
        tq("u1", "gamma news", "t2", {"dC"}, 2000),  // same query, next session
    };
    EvalOptions opts;
    opts.candidate_k = 3;
    opts.progressive = true;
    attach_candidates(tests, corpus, opts);

    EvalOutcome out = evaluate_run(tests, states, term_config(), p, TemplateSet::defaults(),
                                   make_title_lookup({}), opts);
    CHECK_FALSE(out.per_query[0].trace.sensory_matched);
    CHECK(out.per_query[1].trace.sensory_matched);  // learned from the t1 click
    CHECK(out.per_query[1].trace.final_ranking[0] == "dC");
    // The repeated/non-repeated split stays pinned to the pre-test history.
    CHECK_FALSE(out.per_query[1].repeated);

    // Without progressive mode the second query is not answerable.
    auto states2 = one_user_states(p);
    EvalOptions plain = opts;
    plain.progressive = false;
    EvalOutcome out2 = evaluate_run(tests, states2, term_config(), p, TemplateSet::defaults(),
                                    make_title_lookup({}), plain);
    CHECK_FALSE(out2.per_query[1].trace.sensory_matched);
}

TEST_CASE("multi-threaded evaluation matches single-threaded results") {
    MockProvider p(ProviderConfig{});
    Corpus corpus = small_corpus();

    auto make_states = [&](MockProvider& prov) {
        std::map<std::string, UserState> states;
        states.emplace("u1", build_user_state(u1_history(), prov, TemplateSet::defaults(),
                                              make_title_lookup({})));
        UserHistory h2 = u1_history();
        h2.user_id = "u2";
        states.emplace("u2", build_user_state(h2, prov, TemplateSet::defaults(),
                                              make_title_lookup({})));
        return states;
    };

    std::vector<TestQuery> tests = {
        tq("u1", "alpha news", "t1", {"dA"}),
        tq("u2", "gamma news", "t1", {"dD"}),
        tq("u1", "gamma news", "t2", {"dC"}),
        tq("u2", "alpha news", "t2", {"dA"}),
    };
    EvalOptions opts;
    opts.candidate_k = 3;
    attach_candidates(tests, corpus, opts);

    auto s1 = make_states(p);
    EvalOutcome serial = evaluate_run(tests, s1, term_config(), p, TemplateSet::defaults(),
                                      make_title_lookup({}), opts);
    EvalOptions par = opts;
    par.jobs = 4;
    auto s2 = make_states(p);
    EvalOutcome parallel = evaluate_run(tests, s2, term_config(), p, TemplateSet::defaults(),
                                        make_title_lookup({}), par);

    const auto j1 = metrics_to_json(serial.report, term_config(), opts);
    const auto j2 = metrics_to_json(parallel.report, term_config(), par);
    CHECK(j1.dump() == j2.dump());
    for (std::size_t i = 0; i < tests.size(); ++i)
        CHECK(serial.per_query[i].trace.final_ranking ==
              parallel.per_query[i].trace.final_ranking);
}

TEST_CASE("trace json omits latency unless asked") {
    QueryTrace t;
    t.user_id = "u1";
    t.latency.total = 12.5;
    CHECK_FALSE(trace_to_json(t).contains("latency_ms"));
    CHECK(trace_to_json(t, true).contains("latency_ms"));
    CHECK(trace_to_json(t, true)["latency_ms"]["total"] == 12.5);
}

TEST_CASE("metrics json is latency-free and byte-stable by default") {
    MetricReport rep;
    rep.total_queries = 5;
    rep.latency.mean_ms = 3.25;  // wall clock: must not leak into the json
    const auto j = metrics_to_json(rep, term_config(), EvalOptions{});
    CHECK_FALSE(j.contains("latency_ms"));
    CHECK(j.dump() == metrics_to_json(rep, term_config(), EvalOptions{}).dump());

    EvalOptions with;
    with.include_latency = true;
    CHECK(metrics_to_json(rep, term_config(), with)["latency_ms"]["mean"] == 3.25);
}

TEST_CASE("trace and ranking artifacts are valid jsonl") {
    MockProvider p(ProviderConfig{});
    auto states = one_user_states(p);
    Corpus corpus = small_corpus();
    std::vector<TestQuery> tests = {
        tq("u1", "alpha news", "t1", {"dA"}),
        tq("ghost", "x", "t1", {"dA"}),
    };
    EvalOptions opts;
    opts.candidate_k = 3;
    attach_candidates(tests, corpus, opts);
    EvalOutcome out = evaluate_run(tests, states, term_config(), p, TemplateSet::defaults(),
                                   make_title_lookup({}), opts);

    const auto dir = std::filesystem::temp_directory_path() / "cogs_eval_artifacts";
    std::filesystem::remove_all(dir);
    write_trace_jsonl((dir / "trace.jsonl").string(), out.per_query);
    write_rankings_jsonl((dir / "rankings.jsonl").string(), out.per_query);

    std::ifstream trace(dir / "trace.jsonl");
    std::string line;
    std::size_t rows = 0;
    bool saw_failure = false;
    while (std::getline(trace, line)) {
        auto j = nlohmann::json::parse(line);  // throws on bad rows
        saw_failure = saw_failure || j.value("failed", false);
        CHECK_FALSE(j.contains("latency_ms"));
        ++rows;
    }
    CHECK(rows == 2);
    CHECK(saw_failure);

    std::ifstream rankings(dir / "rankings.jsonl");
    rows = 0;
    while (std::getline(rankings, line)) {
        auto j = nlohmann::json::parse(line);
        CHECK(j.contains("items"));
        ++rows;
    }
    CHECK(rows == 1);  // the failed query produces no ranking row
    std::filesystem::remove_all(dir);
}

TEST_CASE("history sweep rebuilds memory per fraction") {
    MockProvider p(ProviderConfig{});
    Corpus corpus = small_corpus();
    std::vector<UserHistory> histories = {u1_history()};
    std::vector<TestQuery> tests = {tq("u1", "alpha news", "t1", {"dA"})};
    EvalOptions opts;
    opts.candidate_k = 3;
    attach_candidates(tests, corpus, opts);

    auto points = history_sweep({0.5, 1.0}, histories, tests, term_config(), p,
                                TemplateSet::defaults(), make_title_lookup({}), opts);
    REQUIRE(points.size() == 2);
    CHECK(points[0].fraction == 0.5);
    CHECK(points[1].fraction == 1.0);
    // Half of a 2-interaction history keeps only the latest ("beta news"), so
    // "alpha news" is no longer re-findable; the full history answers it.
    CHECK(points[0].report.sensory_answered == 0);
    CHECK(points[1].report.sensory_answered == 1);

    const std::string csv = curve_csv(points);
    auto lines = split_lines(csv);
    REQUIRE(lines.size() == 3);
    CHECK(lines[0] == "fraction,queries,map,mrr,p_at_1,p_improve");
    CHECK(lines[1].rfind("0.50,1,", 0) == 0);
    CHECK(lines[2].rfind("1.00,1,", 0) == 0);
}

TEST_CASE("ablation suite produces the five fixed rows") {
    MockProvider p(ProviderConfig{});
    auto states = one_user_states(p);
    Corpus corpus = small_corpus();
    std::vector<TestQuery> tests = {
        tq("u1", "alpha news", "t1", {"dA"}),
        tq("u1", "gamma news", "t1", {"dC"}),
    };
    EvalOptions opts;
    opts.candidate_k = 3;
    attach_candidates(tests, corpus, opts);

    auto rows = ablation_suite(tests, states, term_config(), p, TemplateSet::defaults(),
                               make_title_lookup({}), opts);
    REQUIRE(rows.size() == 5);
    CHECK(rows[0].name == "no_sensory");
    CHECK(rows[1].name == "no_working");
    CHECK(rows[2].name == "no_longterm_explicit");
    CHECK(rows[3].name == "no_longterm_implicit");
    CHECK(rows[4].name == "full");
    CHECK(rows[0].report.sensory_answered == 0);
    CHECK(rows[4].report.sensory_answered == 1);
    CHECK_FALSE(rows[0].toggles.sensory);
    CHECK(rows[4].toggles.sensory);

    const auto j = ablation_to_json(rows, term_config(), opts);
    REQUIRE(j.at("rows").size() == 5);
    CHECK(j["rows"][4]["delta_map_vs_full"] == 0.0);
    CHECK(j["rows"][0].contains("latency_ms"));  // ablation always reports latency

    const std::string md = ablation_markdown(rows);
    CHECK(md.find("| no_sensory |") != std::string::npos);
    CHECK(md.find("| full |") != std::string::npos);
}

TEST_CASE("user_average and pimp_macro change the aggregation") {
    // u1 contributes AP 1.0 and 0.0 over two queries, u2 one query at AP 0.9.
    // Micro MAP = 1.9/3; user-average MAP = (0.5 + 0.9)/2 = 0.7.
    std::vector<PerQueryResult> rows(3);
    rows[0].trace.user_id = "u1";
    rows[0].ap = 1.0;
    rows[0].pairs = {1, 0, 2, 0};  // 1 of 2 inverse pairs fixed
    rows[1].trace.user_id = "u1";
    rows[1].ap = 0.0;
    rows[1].pairs = {0, 0, 2, 0};  // 0 of 2 fixed
    rows[2].trace.user_id = "u2";
    rows[2].ap = 0.9;
    rows[2].pairs = {3, 0, 4, 0};  // 3 of 4 fixed

    EvalOptions micro;
    auto m = detail::aggregate_subset(rows, [](const PerQueryResult&) { return true; }, micro);
    CHECK(m.map == Catch::Approx(1.9 / 3.0));
    CHECK(m.p_improve == Catch::Approx(4.0 / 8.0));  // micro: pooled pair sums

    EvalOptions macro;
    macro.user_average = true;
    macro.pimp_macro = true;
    auto M = detail::aggregate_subset(rows, [](const PerQueryResult&) { return true; }, macro);
    CHECK(M.map == Catch::Approx(0.7));
    CHECK(M.p_improve == Catch::Approx((0.5 + 0.0 + 0.75) / 3.0));
}
