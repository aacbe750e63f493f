// cogsearch: offline personalized-search re-ranking toolchain.
//
// Subcommands cover the whole replay loop: synth -> ingest -> build-memory ->
// run / eval / ablate / sweep, plus `case` to inspect one query end to end.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "cogs/config.hpp"
#include "cogs/eval.hpp"
#include "cogs/log_model.hpp"
#include "cogs/pipeline.hpp"
#include "cogs/synthgen.hpp"

namespace {

using nlohmann::ordered_json;

/// Options shared by every subcommand; convenience flags append dotted-key
/// pairs so precedence is simply: config file, then --set, then flags.
struct FlagBag {
    std::string config;
    std::vector<std::string> sets;
    std::vector<std::pair<std::string, std::string>> kvs;
};

void add_common(CLI::App* sub, FlagBag& bag) {
    sub->add_option("--config", bag.config, "config file (key = value lines)");
    sub->add_option("--set", bag.sets, "override any config key, e.g. --set eval.jobs=4")
        ->take_all();
    auto kv = [sub, &bag](const char* flag, const char* key, const char* desc) {
        sub->add_option_function<std::string>(
            flag, [&bag, key](const std::string& v) { bag.kvs.emplace_back(key, v); }, desc);
    };
    kv("--log", "paths.log", "query log TSV");
    kv("--corpus", "paths.corpus", "corpus JSONL");
    kv("--out", "paths.out", "output directory (default: out)");
    kv("--prompts", "paths.prompts", "prompt template directory");
    kv("--cache", "paths.cache", "completion replay cache (JSONL)");
    kv("--provider", "provider.kind", "provider kind: mock | http | cache");
    kv("--mock-rules", "provider.mock_rules", "mock provider rules (JSON)");
    kv("--ranker", "pipeline.ranker", "ranker: term | llm | vector | pclick");
    kv("--jobs", "eval.jobs", "worker threads for evaluation");
    kv("--seed", "synth.seed", "synthetic generator seed");
}

cogs::RunConfig build_config(const FlagBag& bag) {
    cogs::RunConfig rc;
    if (!bag.config.empty()) cogs::load_config_file(rc, bag.config);
    for (const auto& s : bag.sets) cogs::apply_set_expr(rc, s);
    for (const auto& [k, v] : bag.kvs) cogs::apply_config_kv(rc, k, v);
    return rc;
}

template <typename T>
T read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw cogs::DataError("cannot open " + path + " (did the previous step run?)");
    try {
        nlohmann::json j;
        in >> j;
        return j.get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw cogs::DataError("bad JSON in " + path + ": " + e.what());
    }
}

void write_json_file(const std::string& path, const ordered_json& j) {
    cogs::write_text_file(path, j.dump(2) + "\n");
}

struct World {
    cogs::Corpus corpus;
    std::map<std::string, std::string> titles;
    cogs::TitleLookup lookup;
    std::vector<cogs::UserHistory> histories;
    std::vector<cogs::TestQuery> tests;
    std::map<std::string, cogs::UserState> states;
};

World load_world(const cogs::RunConfig& rc, bool need_memory) {
    World w;
    const std::string corpus_path =
        rc.corpus_path.empty() ? rc.out_dir + "/corpus.jsonl" : rc.corpus_path;
    w.corpus = cogs::Corpus(cogs::load_corpus_jsonl(corpus_path));
    const std::string ing = rc.resolved_ingest_dir();
    w.histories = read_json_file<std::vector<cogs::UserHistory>>(ing + "/histories.json");
    w.tests = read_json_file<std::vector<cogs::TestQuery>>(ing + "/test_queries.json");
    w.titles = read_json_file<std::map<std::string, std::string>>(ing + "/titles.json");
    w.lookup = cogs::make_title_lookup(w.titles);
    if (need_memory) {
        const std::string mem = rc.resolved_memory_dir();
        for (const auto& h : w.histories) {
            cogs::UserState state;
            state.user_id = h.user_id;
            state.sensory = cogs::load_sensory(mem + "/" + h.user_id + ".sensory.json");
            state.longterm = cogs::load_longterm(mem + "/" + h.user_id + ".longterm.json");
            state.short_term = h.short_term;
            state.history_queries = cogs::normalized_history_queries(h);
            w.states.emplace(h.user_id, std::move(state));
        }
    }
    return w;
}

cogs::EncodeToggles encode_toggles(const cogs::RunConfig& rc) {
    return {rc.pipeline.toggles.longterm_explicit, rc.pipeline.toggles.longterm_implicit};
}

int cmd_synth(const cogs::RunConfig& rc) {
    const cogs::GenOutput out = cogs::generate(rc.synth);
    cogs::write_synth(out, rc.out_dir);
    std::cout << "wrote " << rc.out_dir << "/corpus.jsonl (" << out.corpus.size() << " docs), "
              << rc.out_dir << "/log.tsv, " << rc.out_dir << "/manifest.json\n"
              << "test queries: " << out.manifest["totals"]["test_queries"]
              << ", planted re-finding: " << out.manifest["totals"]["planted"] << "\n";
    return 0;
}

int cmd_ingest(const cogs::RunConfig& rc) {
    std::string log_path = rc.log_path.empty() ? rc.out_dir + "/log.tsv" : rc.log_path;
    std::ifstream in(log_path);
    if (!in) throw cogs::DataError("cannot open query log: " + log_path);
    const cogs::ParsedLog log = cogs::parse_log(in);
    const cogs::SplitResult split = cogs::split_history(log, rc.split_fraction);

    const std::string ing = rc.resolved_ingest_dir();
    write_json_file(ing + "/histories.json", ordered_json(split.histories));
    write_json_file(ing + "/test_queries.json", ordered_json(split.tests));
    write_json_file(ing + "/titles.json", ordered_json(log.titles));

    std::cout << "parsed " << log.total_lines << " lines (" << log.malformed_lines.size()
              << " malformed), " << log.users.size() << " users\n"
              << "histories: " << split.histories.size() << ", test queries: "
              << split.tests.size() << "\n";
    for (const auto& u : split.excluded_users)
        std::cerr << "warning: user " << u << " excluded (fewer than 2 interactions)\n";
    return 0;
}

int cmd_build_memory(const cogs::RunConfig& rc) {
    const std::string ing = rc.resolved_ingest_dir();
    const auto histories = read_json_file<std::vector<cogs::UserHistory>>(ing + "/histories.json");
    const auto titles =
        read_json_file<std::map<std::string, std::string>>(ing + "/titles.json");
    const cogs::TitleLookup lookup = cogs::make_title_lookup(titles);

    auto provider = cogs::make_provider(rc);
    cogs::TraceSink sink;
    provider->set_sink(&sink);
    const cogs::TemplateSet templates = cogs::make_templates(rc);

    const std::string mem = rc.resolved_memory_dir();
    std::filesystem::create_directories(mem);
    std::size_t slots = 0, unencoded = 0;
    for (const auto& h : histories) {
        const cogs::SensoryStore sensory = cogs::build_sensory(h);
        const cogs::LongTermStore longterm = cogs::build_longterm(
            h, *provider, templates, lookup, rc.pipeline.window, encode_toggles(rc));
        for (const auto& s : longterm.slots) {
            ++slots;
            if (!s.encoded) ++unencoded;
        }
        cogs::save_sensory(sensory, mem + "/" + h.user_id + ".sensory.json");
        cogs::save_longterm(longterm, mem + "/" + h.user_id + ".longterm.json");
    }
    std::cout << "built memory for " << histories.size() << " users: " << slots << " slots ("
              << unencoded << " unencoded), " << sink.count() << " provider calls\n";
    return 0;
}

int cmd_run(const cogs::RunConfig& rc, bool with_metrics) {
    World w = load_world(rc, true);
    auto provider = cogs::make_provider(rc);
    cogs::TraceSink sink;
    provider->set_sink(&sink);
    const cogs::TemplateSet templates = cogs::make_templates(rc);

    cogs::attach_candidates(w.tests, w.corpus, rc.eval, rc.pipeline.bm25);
    const cogs::EvalOutcome outcome = cogs::evaluate_run(w.tests, w.states, rc.pipeline,
                                                         *provider, templates, w.lookup, rc.eval);

    const std::string dir = rc.out_dir + (with_metrics ? "/eval" : "/run");
    cogs::write_trace_jsonl(dir + "/trace.jsonl", outcome.per_query, rc.eval.include_latency);
    cogs::write_rankings_jsonl(dir + "/rankings.jsonl", outcome.per_query);
    if (with_metrics) {
        write_json_file(dir + "/metrics.json",
                        cogs::metrics_to_json(outcome.report, rc.pipeline, rc.eval));
        cogs::write_text_file(dir + "/metrics.md", cogs::metrics_markdown(outcome.report));
    }
    std::cout << cogs::metrics_markdown(outcome.report);
    return 0;
}

int cmd_ablate(const cogs::RunConfig& rc) {
    World w = load_world(rc, true);
    auto provider = cogs::make_provider(rc);
    cogs::TraceSink sink;
    provider->set_sink(&sink);
    const cogs::TemplateSet templates = cogs::make_templates(rc);

    cogs::attach_candidates(w.tests, w.corpus, rc.eval, rc.pipeline.bm25);
    const auto rows = cogs::ablation_suite(w.tests, w.states, rc.pipeline, *provider, templates,
                                           w.lookup, rc.eval);
    const std::string dir = rc.out_dir + "/ablate";
    write_json_file(dir + "/ablation.json", cogs::ablation_to_json(rows, rc.pipeline, rc.eval));
    cogs::write_text_file(dir + "/ablation.md", cogs::ablation_markdown(rows));
    std::cout << cogs::ablation_markdown(rows);
    return 0;
}

int cmd_sweep(const cogs::RunConfig& rc) {
    World w = load_world(rc, false);
    auto provider = cogs::make_provider(rc);
    cogs::TraceSink sink;
    provider->set_sink(&sink);
    const cogs::TemplateSet templates = cogs::make_templates(rc);

    cogs::attach_candidates(w.tests, w.corpus, rc.eval, rc.pipeline.bm25);
    const auto points = cogs::history_sweep(rc.fractions, w.histories, w.tests, rc.pipeline,
                                            *provider, templates, w.lookup, rc.eval,
                                            encode_toggles(rc));
    const std::string csv = cogs::curve_csv(points);
    cogs::write_text_file(rc.out_dir + "/sweep/curve.csv", csv);
    std::cout << csv;
    return 0;
}

int cmd_case(const cogs::RunConfig& rc, const std::string& user, const std::string& query,
             bool as_json) {
    World w = load_world(rc, true);
    auto it = w.states.find(user);
    if (it == w.states.end()) throw cogs::DataError("no memory for user: " + user);
    auto provider = cogs::make_provider(rc);
    cogs::TraceSink sink;
    provider->set_sink(&sink);
    const cogs::TemplateSet templates = cogs::make_templates(rc);

    cogs::TestQuery tq;
    tq.user_id = user;
    tq.query = query;
    tq.candidates = w.corpus.candidates(query, rc.eval.candidate_k, {});
    auto [ranked, trace] =
        cogs::handle_query(it->second, tq, rc.pipeline, *provider, templates, w.lookup);

    const std::string refinding = trace.sensory_matched
                                      ? cogs::join(trace.final_ranking, " > ")
                                      : trace.sensory_note;
    if (as_json) {
        ordered_json j;
        j["user_id"] = user;
        j["query"] = query;
        j["re_finding"] = refinding;
        j["rewritten_query"] = trace.rewritten_query;
        j["retrieved_explicit"] = trace.retrieved_explicit;
        j["retrieved_implicit"] = trace.retrieved_implicit;
        j["user_model"] = trace.user_model;
        j["ranker"] = trace.ranker;
        j["final_ranking"] = trace.final_ranking;
        std::cout << j.dump(2) << "\n";
        return 0;
    }
    std::cout << "user: " << user << "\nquery: " << query << "\n\n";
    std::cout << "re-finding: " << refinding << "\n";
    std::cout << "re-written query: " << trace.rewritten_query << "\n";
    std::cout << "retrieved interests:\n";
    for (const auto& line : trace.retrieved_explicit) std::cout << "  " << line << "\n";
    std::cout << "retrieved background:\n";
    for (const auto& line : trace.retrieved_implicit) std::cout << "  " << line << "\n";
    std::cout << "user model: " << trace.user_model << "\n";
    std::cout << "final ranking (" << trace.ranker
              << "): " << cogs::join(trace.final_ranking, " > ") << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"offline personalized-search re-ranking over query logs"};
    app.require_subcommand(1);

    FlagBag synth_bag, ingest_bag, memory_bag, run_bag, eval_bag, ablate_bag, sweep_bag, case_bag;
    std::string case_user, case_query;
    bool case_json = false;

    add_common(app.add_subcommand("synth", "generate a synthetic corpus and query log"),
               synth_bag);
    add_common(app.add_subcommand("ingest", "parse a query log and split history/test"),
               ingest_bag);
    add_common(app.add_subcommand("build-memory", "encode per-user sensory and long-term memory"),
               memory_bag);
    add_common(app.add_subcommand("run", "replay test queries and write rankings + trace"),
               run_bag);
    add_common(app.add_subcommand("eval", "replay test queries and write metrics"), eval_bag);
    add_common(app.add_subcommand("ablate", "metrics with each memory stage toggled off"),
               ablate_bag);
    add_common(app.add_subcommand("sweep", "metrics as a function of history size"), sweep_bag);
    CLI::App* case_cmd = app.add_subcommand("case", "walk one query through the pipeline");
    add_common(case_cmd, case_bag);
    case_cmd->add_option("--user", case_user, "user id")->required();
    case_cmd->add_option("--query", case_query, "query text")->required();
    case_cmd->add_flag("--json", case_json, "machine-readable output");

    try {
        app.parse(argc, argv);
        if (app.got_subcommand("synth")) return cmd_synth(build_config(synth_bag));
        if (app.got_subcommand("ingest")) return cmd_ingest(build_config(ingest_bag));
        if (app.got_subcommand("build-memory")) return cmd_build_memory(build_config(memory_bag));
        if (app.got_subcommand("run")) return cmd_run(build_config(run_bag), false);
        if (app.got_subcommand("eval")) return cmd_run(build_config(eval_bag), true);
        if (app.got_subcommand("ablate")) return cmd_ablate(build_config(ablate_bag));
        if (app.got_subcommand("sweep")) return cmd_sweep(build_config(sweep_bag));
        if (app.got_subcommand("case"))
            return cmd_case(build_config(case_bag), case_user, case_query, case_json);
        return 1;
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    } catch (const cogs::UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const cogs::ProviderError& e) {
        std::cerr << "provider error: " << e.what() << "\n";
        return 3;
    } catch (const cogs::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
