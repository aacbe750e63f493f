#pragma once

#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "cogs/cognition.hpp"
#include "cogs/eval.hpp"
#include "cogs/pipeline.hpp"
#include "cogs/synthgen.hpp"

namespace cogs {

/// Every tunable of the toolchain, addressable by dotted key from the config
/// file or --set overrides.
struct RunConfig {
    // paths
    std::string log_path;
    std::string corpus_path;
    std::string out_dir = "out";
    std::string ingest_dir;  // defaults to <out>/ingest
    std::string memory_dir;  // defaults to <out>/memory
    std::string prompts_dir;
    std::string cache_path;  // completion replay cache (JSONL); empty = off

    // provider
    ProviderConfig provider;
    std::string provider_kind = "mock";  // mock | http | cache
    std::string mock_rules;              // JSON rules file for the mock provider
    double mock_delay_ms = 0.0;

    // pipeline + split + eval + synth
    PipelineConfig pipeline;
    double split_fraction = kDefaultSplitFraction;
    EvalOptions eval;
    std::vector<double> fractions = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
    GenConfig synth;

    std::string resolved_ingest_dir() const {
        return ingest_dir.empty() ? out_dir + "/ingest" : ingest_dir;
    }
    std::string resolved_memory_dir() const {
        return memory_dir.empty() ? out_dir + "/memory" : memory_dir;
    }
};

namespace detail {

inline bool to_bool(const std::string& key, const std::string& value) {
    const std::string v = to_lower(trim(value));
    if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "off" || v == "no") return false;
    throw UsageError("config key '" + key + "': expected a boolean, got '" + value + "'");
}

inline int to_int(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        const int v = std::stoi(trim(value), &pos);
        if (pos == trim(value).size()) return v;
    } catch (const std::exception&) {
    }
    throw UsageError("config key '" + key + "': expected an integer, got '" + value + "'");
}

inline std::uint64_t to_u64(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        const unsigned long long v = std::stoull(trim(value), &pos);
        if (pos == trim(value).size()) return v;
    } catch (const std::exception&) {
    }
    throw UsageError("config key '" + key + "': expected an unsigned integer, got '" + value +
                     "'");
}

inline double to_double(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(trim(value), &pos);
        if (pos == trim(value).size()) return v;
    } catch (const std::exception&) {
    }
    throw UsageError("config key '" + key + "': expected a number, got '" + value + "'");
}

inline std::vector<double> to_double_list(const std::string& key, const std::string& value) {
    std::vector<double> out;
    std::string cur;
    std::istringstream in(value);
    while (std::getline(in, cur, ',')) {
        if (trim(cur).empty()) continue;
        out.push_back(to_double(key, cur));
    }
    if (out.empty()) throw UsageError("config key '" + key + "': expected a comma list");
    return out;
}

}  // namespace detail

/// Key registry. Each entry knows how to apply one dotted key.
inline const std::map<std::string, std::function<void(RunConfig&, const std::string&)>>&
config_keys() {
    using detail::to_bool;
    using detail::to_double;
    using detail::to_double_list;
    using detail::to_int;
    using detail::to_u64;
    using Setter = std::function<void(RunConfig&, const std::string&)>;
    static const std::map<std::string, Setter> keys = {
        {"paths.log", [](RunConfig& c, const std::string& v) { c.log_path = trim(v); }},
        {"paths.corpus", [](RunConfig& c, const std::string& v) { c.corpus_path = trim(v); }},
        {"paths.out", [](RunConfig& c, const std::string& v) { c.out_dir = trim(v); }},
        {"paths.ingest", [](RunConfig& c, const std::string& v) { c.ingest_dir = trim(v); }},
        {"paths.memory", [](RunConfig& c, const std::string& v) { c.memory_dir = trim(v); }},
        {"paths.prompts", [](RunConfig& c, const std::string& v) { c.prompts_dir = trim(v); }},
        {"paths.cache", [](RunConfig& c, const std::string& v) { c.cache_path = trim(v); }},

        {"provider.kind",
         [](RunConfig& c, const std::string& v) {
             const std::string k = to_lower(trim(v));
             if (k != "mock" && k != "http" && k != "cache")
                 throw UsageError("provider.kind must be mock, http or cache");
             c.provider_kind = k;
         }},
        {"provider.endpoint",
         [](RunConfig& c, const std::string& v) { c.provider.endpoint = trim(v); }},
        {"provider.model", [](RunConfig& c, const std::string& v) { c.provider.model = trim(v); }},
        {"provider.temperature",
         [](RunConfig& c, const std::string& v) {
             c.provider.temperature = to_double("provider.temperature", v);
         }},
        {"provider.max_output_tokens",
         [](RunConfig& c, const std::string& v) {
             c.provider.max_output_tokens = to_int("provider.max_output_tokens", v);
         }},
        {"provider.input_budget",
         [](RunConfig& c, const std::string& v) {
             c.provider.input_budget_tokens = to_int("provider.input_budget", v);
         }},
        {"provider.timeout_seconds",
         [](RunConfig& c, const std::string& v) {
             c.provider.timeout_seconds = to_double("provider.timeout_seconds", v);
         }},
        {"provider.retries",
         [](RunConfig& c, const std::string& v) {
             c.provider.retries = to_int("provider.retries", v);
         }},
        {"provider.concurrency",
         [](RunConfig& c, const std::string& v) {
             c.provider.concurrency = to_int("provider.concurrency", v);
         }},
        {"provider.api_key_env",
         [](RunConfig& c, const std::string& v) { c.provider.api_key_env = trim(v); }},
        {"provider.mock_rules",
         [](RunConfig& c, const std::string& v) { c.mock_rules = trim(v); }},
        {"provider.mock_delay_ms",
         [](RunConfig& c, const std::string& v) {
             c.mock_delay_ms = to_double("provider.mock_delay_ms", v);
         }},

        {"pipeline.sensory",
         [](RunConfig& c, const std::string& v) {
             c.pipeline.toggles.sensory = to_bool("pipeline.sensory", v);
         }},
        {"pipeline.working",
         [](RunConfig& c, const std::string& v) {
             c.pipeline.toggles.working = to_bool("pipeline.working", v);
         }},
        {"pipeline.longterm_explicit",
         [](RunConfig& c, const std::string& v) {
             c.pipeline.toggles.longterm_explicit = to_bool("pipeline.longterm_explicit", v);
         }},
        {"pipeline.longterm_implicit",
         [](RunConfig& c, const std::string& v) {
             c.pipeline.toggles.longterm_implicit = to_bool("pipeline.longterm_implicit", v);
         }},
        {"pipeline.ranker",
         [](RunConfig& c, const std::string& v) {
             const std::string k = to_lower(trim(v));
             if (k == "term") c.pipeline.ranker = RankerKind::term;
             else if (k == "llm") c.pipeline.ranker = RankerKind::llm;
             else if (k == "vector") c.pipeline.ranker = RankerKind::vector;
             else if (k == "pclick") c.pipeline.ranker = RankerKind::pclick;
             else throw UsageError("pipeline.ranker must be term, llm, vector or pclick");
         }},
        {"pipeline.recent_m",
         [](RunConfig& c, const std::string& v) {
             c.pipeline.recent_m = to_int("pipeline.recent_m", v);
         }},
        {"pipeline.retrieval_mode",
         [](RunConfig& c, const std::string& v) {
             const std::string k = to_lower(trim(v));
             if (k == "llm") c.pipeline.retrieval_mode = RetrievalMode::llm;
             else if (k == "lexical") c.pipeline.retrieval_mode = RetrievalMode::lexical;
             else throw UsageError("pipeline.retrieval_mode must be llm or lexical");
         }},
        {"pipeline.retrieval_k",
         [](RunConfig& c, const std::string& v) {
             c.pipeline.retrieval_k = to_int("pipeline.retrieval_k", v);
         }},
        {"pipeline.rank_window",
         [](RunConfig& c, const std::string& v) {
             c.pipeline.rank_window = to_int("pipeline.rank_window", v);
         }},
        {"pipeline.rank_stride",
         [](RunConfig& c, const std::string& v) {
             c.pipeline.rank_stride = to_int("pipeline.rank_stride", v);
         }},
        {"pipeline.window_mode",
         [](RunConfig& c, const std::string& v) {
             const std::string k = to_lower(trim(v));
             if (k == "interactions") c.pipeline.window.mode = WindowMode::interactions;
             else if (k == "days") c.pipeline.window.mode = WindowMode::days;
             else throw UsageError("pipeline.window_mode must be interactions or days");
         }},
        {"pipeline.window_size",
         [](RunConfig& c, const std::string& v) {
             c.pipeline.window.size = to_int("pipeline.window_size", v);
         }},
        {"pipeline.window_days",
         [](RunConfig& c, const std::string& v) {
             c.pipeline.window.days = to_int("pipeline.window_days", v);
         }},
        {"pipeline.vector_endpoint",
         [](RunConfig& c, const std::string& v) { c.pipeline.vector_endpoint = trim(v); }},
        {"pipeline.pclick_beta",
         [](RunConfig& c, const std::string& v) {
             c.pipeline.pclick_beta = to_double("pipeline.pclick_beta", v);
         }},
        {"pipeline.pclick_lambda",
         [](RunConfig& c, const std::string& v) {
             c.pipeline.pclick_lambda = to_double("pipeline.pclick_lambda", v);
         }},
        {"pipeline.bm25_k1",
         [](RunConfig& c, const std::string& v) {
             c.pipeline.bm25.k1 = to_double("pipeline.bm25_k1", v);
         }},
        {"pipeline.bm25_b",
         [](RunConfig& c, const std::string& v) {
             c.pipeline.bm25.b = to_double("pipeline.bm25_b", v);
         }},

        {"split.fraction",
         [](RunConfig& c, const std::string& v) {
             c.split_fraction = to_double("split.fraction", v);
         }},

        {"eval.jobs",
         [](RunConfig& c, const std::string& v) { c.eval.jobs = to_int("eval.jobs", v); }},
        {"eval.progressive",
         [](RunConfig& c, const std::string& v) {
             c.eval.progressive = to_bool("eval.progressive", v);
         }},
        {"eval.pimp_macro",
         [](RunConfig& c, const std::string& v) {
             c.eval.pimp_macro = to_bool("eval.pimp_macro", v);
         }},
        {"eval.user_average",
         [](RunConfig& c, const std::string& v) {
             c.eval.user_average = to_bool("eval.user_average", v);
         }},
        {"eval.include_latency",
         [](RunConfig& c, const std::string& v) {
             c.eval.include_latency = to_bool("eval.include_latency", v);
         }},
        {"eval.candidate_k",
         [](RunConfig& c, const std::string& v) {
             c.eval.candidate_k = static_cast<std::size_t>(to_int("eval.candidate_k", v));
         }},
        {"eval.inject_relevant",
         [](RunConfig& c, const std::string& v) {
             c.eval.inject_relevant = to_bool("eval.inject_relevant", v);
         }},
        {"eval.fractions",
         [](RunConfig& c, const std::string& v) {
             c.fractions = to_double_list("eval.fractions", v);
         }},

        {"synth.seed",
         [](RunConfig& c, const std::string& v) { c.synth.seed = to_u64("synth.seed", v); }},
        {"synth.users",
         [](RunConfig& c, const std::string& v) { c.synth.users = to_int("synth.users", v); }},
        {"synth.sessions_per_user",
         [](RunConfig& c, const std::string& v) {
             c.synth.sessions_per_user = to_int("synth.sessions_per_user", v);
         }},
        {"synth.interactions_per_session",
         [](RunConfig& c, const std::string& v) {
             c.synth.interactions_per_session = to_int("synth.interactions_per_session", v);
         }},
        {"synth.topics_per_user",
         [](RunConfig& c, const std::string& v) {
             c.synth.topics_per_user = to_int("synth.topics_per_user", v);
         }},
        {"synth.corpus_docs",
         [](RunConfig& c, const std::string& v) {
             c.synth.corpus_docs = to_int("synth.corpus_docs", v);
         }},
        {"synth.docs_per_topic",
         [](RunConfig& c, const std::string& v) {
             c.synth.docs_per_topic = to_int("synth.docs_per_topic", v);
         }},
        {"synth.vocab_size",
         [](RunConfig& c, const std::string& v) {
             c.synth.vocab_size = to_int("synth.vocab_size", v);
         }},
        {"synth.refind_rate",
         [](RunConfig& c, const std::string& v) {
             c.synth.refind_rate = to_double("synth.refind_rate", v);
         }},
        {"synth.split_fraction",
         [](RunConfig& c, const std::string& v) {
             c.synth.split_fraction = to_double("synth.split_fraction", v);
         }},
        {"synth.favorites_per_topic",
         [](RunConfig& c, const std::string& v) {
             c.synth.favorites_per_topic = to_int("synth.favorites_per_topic", v);
         }},
    };
    return keys;
}

/// Applies one "dotted.key=value" pair; unknown keys are usage errors.
inline void apply_config_kv(RunConfig& cfg, const std::string& key, const std::string& value) {
    const auto& keys = config_keys();
    auto it = keys.find(trim(key));
    if (it == keys.end()) throw UsageError("unknown config key: " + trim(key));
    it->second(cfg, value);
}

inline void apply_set_expr(RunConfig& cfg, const std::string& expr) {
    const auto eq = expr.find('=');
    if (eq == std::string::npos)
        throw UsageError("--set expects key=value, got '" + expr + "'");
    apply_config_kv(cfg, expr.substr(0, eq), expr.substr(eq + 1));
}

/// Plain-text config: one `key = value` per line, '#' comments.
inline void load_config_file(RunConfig& cfg, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open config file: " + path);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw UsageError("config " + path + " line " + std::to_string(line_no) +
                             ": expected key = value");
        apply_config_kv(cfg, t.substr(0, eq), t.substr(eq + 1));
    }
}

/// Builds the configured provider (optionally wrapped in the replay cache).
inline std::unique_ptr<Provider> make_provider(const RunConfig& rc) {
    std::unique_ptr<Provider> p;
    if (rc.provider_kind == "mock") {
        if (rc.mock_rules.empty()) {
            p = std::make_unique<MockProvider>(rc.provider, std::vector<MockRule>{},
                                               rc.mock_delay_ms);
        } else {
            p = MockProvider::from_json_file(rc.provider, rc.mock_rules, rc.mock_delay_ms);
        }
    } else if (rc.provider_kind == "http") {
#if defined(COGS_NO_HTTP)
        throw ProviderError("this build has no http provider support");
#else
        p = std::make_unique<HttpChatProvider>(rc.provider);
#endif
    } else if (rc.provider_kind == "cache") {
        if (rc.cache_path.empty())
            throw UsageError("provider.kind = cache requires paths.cache");
        return std::make_unique<CachedProvider>(nullptr, rc.cache_path, rc.provider);
    } else {
        throw UsageError("unknown provider.kind: " + rc.provider_kind);
    }
    if (!rc.cache_path.empty())
        p = std::make_unique<CachedProvider>(std::move(p), rc.cache_path, rc.provider);
    return p;
}

inline TemplateSet make_templates(const RunConfig& rc) {
    return rc.prompts_dir.empty() ? TemplateSet::defaults() : TemplateSet::load_dir(rc.prompts_dir);
}

}  // namespace cogs
