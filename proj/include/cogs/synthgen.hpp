#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cogs/log_model.hpp"
#include "cogs/text.hpp"
#include "cogs/types.hpp"

namespace cogs {

/// Knobs for the synthetic query-log generator. Identical configs produce
/// byte-identical corpus, log and manifest.
struct GenConfig {
    std::uint64_t seed = 1;
    int users = 10;
    int sessions_per_user = 5;
    int interactions_per_session = 10;
    int topics_per_user = 3;
    int corpus_docs = 120;
    int docs_per_topic = 12;
    int vocab_size = 400;
    double refind_rate = 0.2;  // probability an interaction repeats an earlier (q, doc) pair
    double split_fraction = kDefaultSplitFraction;
    int favorites_per_topic = 3;  // docs a user keeps clicking within a topic
};

template <typename J>
void to_json(J& j, const GenConfig& c) {
    j = J{{"seed", c.seed},
          {"users", c.users},
          {"sessions_per_user", c.sessions_per_user},
          {"interactions_per_session", c.interactions_per_session},
          {"topics_per_user", c.topics_per_user},
          {"corpus_docs", c.corpus_docs},
          {"docs_per_topic", c.docs_per_topic},
          {"vocab_size", c.vocab_size},
          {"refind_rate", c.refind_rate},
          {"split_fraction", c.split_fraction},
          {"favorites_per_topic", c.favorites_per_topic}};
}
template <typename J>
void from_json(const J& j, GenConfig& c) {
    c.seed = j.value("seed", std::uint64_t{1});
    c.users = j.value("users", 10);
    c.sessions_per_user = j.value("sessions_per_user", 5);
    c.interactions_per_session = j.value("interactions_per_session", 10);
    c.topics_per_user = j.value("topics_per_user", 3);
    c.corpus_docs = j.value("corpus_docs", 120);
    c.docs_per_topic = j.value("docs_per_topic", 12);
    c.vocab_size = j.value("vocab_size", 400);
    c.refind_rate = j.value("refind_rate", 0.2);
    c.split_fraction = j.value("split_fraction", kDefaultSplitFraction);
    c.favorites_per_topic = j.value("favorites_per_topic", 3);
}

struct GenOutput {
    std::vector<DocumentRef> corpus;
    std::string log_tsv;
    nlohmann::ordered_json manifest;
};

namespace detail {

inline std::string zero_pad(std::size_t v, int width) {
    std::string s = std::to_string(v);
    while (static_cast<int>(s.size()) < width) s.insert(s.begin(), '0');
    return s;
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}
    std::size_t pick(std::size_t n) { return n == 0 ? 0 : eng_() % n; }
    double unit() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    /// k distinct values < n, in pick order (k <= n).
    std::vector<std::size_t> distinct(std::size_t n, std::size_t k) {
        std::set<std::size_t> seen;
        std::vector<std::size_t> out;
        while (out.size() < k) {
            const std::size_t v = pick(n);
            if (seen.insert(v).second) out.push_back(v);
        }
        return out;
    }

private:
    std::mt19937_64 eng_;
};

}  // namespace detail

inline void validate(const GenConfig& c) {
    auto fail = [](const std::string& msg) { throw UsageError("synth config: " + msg); };
    if (c.users < 1) fail("users must be >= 1");
    if (c.sessions_per_user < 1) fail("sessions_per_user must be >= 1");
    if (c.interactions_per_session < 1) fail("interactions_per_session must be >= 1");
    if (c.docs_per_topic < 1) fail("docs_per_topic must be >= 1");
    if (c.corpus_docs < c.docs_per_topic) fail("corpus_docs must be >= docs_per_topic");
    const int topics = c.corpus_docs / c.docs_per_topic;
    if (c.topics_per_user < 1 || c.topics_per_user > topics)
        fail("topics_per_user must be between 1 and corpus_docs / docs_per_topic");
    if (c.vocab_size / topics < 8) fail("vocab_size must allow at least 8 terms per topic");
    if (c.refind_rate < 0.0 || c.refind_rate > 1.0) fail("refind_rate must be in [0, 1]");
    if (c.split_fraction <= 0.0 || c.split_fraction >= 1.0)
        fail("split_fraction must lie strictly between 0 and 1");
    if (c.favorites_per_topic < 1 || c.favorites_per_topic > c.docs_per_topic)
        fail("favorites_per_topic must be between 1 and docs_per_topic");
}

/// Generates a topic-structured corpus plus per-user query logs.
///
/// Construction guarantees the evaluation setup depends on:
///  - topics own disjoint vocabulary blocks; every doc carries a unique
///    "keyNNNNNN" marker term in title and body;
///  - fresh queries are 2-4 content terms of the clicked doc (never its
///    marker) and are unique per user, so only deliberate repeats re-occur;
///  - clicked docs share >= 2 terms with their query, skipped docs (drawn
///    from other topics) share none;
///  - with probability refind_rate an interaction repeats an earlier
///    (query, clicked doc) pair; repeats emitted after the split boundary
///    only reuse pre-boundary pairs and are marked "planted" in the manifest.
inline GenOutput generate(const GenConfig& cfg) {
    validate(cfg);
    detail::Rng rng(cfg.seed);
    const int topics = cfg.corpus_docs / cfg.docs_per_topic;
    const int block = cfg.vocab_size / topics;

    auto vocab_term = [](std::size_t i) { return "w" + detail::zero_pad(i, 4); };
    auto doc_key = [](std::size_t j) { return "key" + detail::zero_pad(j, 6); };

    GenOutput out;
    out.corpus.reserve(static_cast<std::size_t>(cfg.corpus_docs));
    std::vector<std::vector<std::string>> doc_terms(static_cast<std::size_t>(cfg.corpus_docs));
    for (std::size_t j = 0; j < static_cast<std::size_t>(cfg.corpus_docs); ++j) {
        const std::size_t topic = j / static_cast<std::size_t>(cfg.docs_per_topic);
        const std::size_t pool_base = std::min(topic, static_cast<std::size_t>(topics - 1)) *
                                      static_cast<std::size_t>(block);
        auto pool_term = [&](std::size_t k) { return vocab_term(pool_base + k); };

        DocumentRef d;
        d.doc_id = "d" + detail::zero_pad(j, 6);
        std::vector<std::string> title_terms = {doc_key(j)};
        for (std::size_t k : rng.distinct(static_cast<std::size_t>(block), 3))
            title_terms.push_back(pool_term(k));
        d.title = join(title_terms, " ");

        const std::size_t body_len = 30 + rng.pick(51);
        std::vector<std::string> body_terms = {doc_key(j)};
        for (std::size_t w = 0; w < body_len; ++w)
            body_terms.push_back(pool_term(rng.pick(static_cast<std::size_t>(block))));
        body_terms.insert(body_terms.begin() + static_cast<std::ptrdiff_t>(body_len / 2),
                          doc_key(j));
        d.body = join(body_terms, " ");

        // distinct non-marker content terms, first-appearance order
        std::set<std::string> seen;
        for (const auto& t : tokenize(d.title + " " + d.body))
            if (t != to_lower(doc_key(j)) && seen.insert(t).second)
                doc_terms[j].push_back(t);
        out.corpus.push_back(std::move(d));
    }

    struct PastPair {
        std::string query;
        std::size_t clicked;
        std::vector<std::size_t> skipped;
    };

    std::ostringstream log;
    auto users_json = nlohmann::ordered_json::array();
    std::size_t total_tests = 0, total_planted = 0;
    constexpr std::int64_t kBaseTs = 1600000000;

    for (std::size_t u = 0; u < static_cast<std::size_t>(cfg.users); ++u) {
        const std::string user_id = "u" + detail::zero_pad(u, 3);
        const auto user_topics =
            rng.distinct(static_cast<std::size_t>(topics),
                         static_cast<std::size_t>(cfg.topics_per_user));
        std::vector<std::vector<std::size_t>> favorites;
        for (std::size_t t : user_topics) {
            std::vector<std::size_t> docs;
            for (std::size_t k : rng.distinct(static_cast<std::size_t>(cfg.docs_per_topic),
                                              static_cast<std::size_t>(cfg.favorites_per_topic)))
                docs.push_back(t * static_cast<std::size_t>(cfg.docs_per_topic) + k);
            favorites.push_back(std::move(docs));
        }

        const std::size_t n = static_cast<std::size_t>(cfg.sessions_per_user) *
                              static_cast<std::size_t>(cfg.interactions_per_session);
        const std::size_t boundary = std::max<std::size_t>(1, split_point(n, cfg.split_fraction));

        std::vector<PastPair> pairs;
        std::size_t pairs_at_boundary = 0;
        std::set<std::string> used_queries;
        auto tests_json = nlohmann::ordered_json::array();

        for (std::size_t i = 0; i < n; ++i) {
            if (i == boundary) pairs_at_boundary = pairs.size();
            const std::size_t session =
                i / static_cast<std::size_t>(cfg.interactions_per_session);
            const std::string session_id = "s" + detail::zero_pad(session, 3);
            const std::int64_t ts = kBaseTs + static_cast<std::int64_t>(u) * 1000000 +
                                    static_cast<std::int64_t>(session) * 7200 +
                                    static_cast<std::int64_t>(
                                        i % static_cast<std::size_t>(
                                                cfg.interactions_per_session)) *
                                        60;

            const std::size_t pool =
                i >= boundary ? pairs_at_boundary : pairs.size();
            const bool refind = pool > 0 && rng.unit() < cfg.refind_rate;

            std::string query;
            std::size_t clicked = 0;
            std::vector<std::size_t> skipped;
            if (refind) {
                const PastPair& p = pairs[rng.pick(pool)];
                query = p.query;
                clicked = p.clicked;
                skipped = p.skipped;
            } else {
                const std::size_t ti = rng.pick(user_topics.size());
                const std::size_t topic = user_topics[ti];
                clicked = favorites[ti][rng.pick(favorites[ti].size())];
                const auto& terms = doc_terms[clicked];
                const std::size_t qlen = std::min<std::size_t>(terms.size(), 2 + rng.pick(3));
                for (int attempt = 0; attempt < 40; ++attempt) {
                    std::vector<std::string> qt;
                    for (std::size_t k : rng.distinct(terms.size(), qlen)) qt.push_back(terms[k]);
                    query = join(qt, " ");
                    if (!used_queries.count(normalize_query(query))) break;
                    query.clear();
                }
                if (query.empty() || used_queries.count(normalize_query(query))) {
                    // uniqueness fallback: a marker token no document contains
                    std::vector<std::string> qt;
                    for (std::size_t k : rng.distinct(terms.size(), qlen)) qt.push_back(terms[k]);
                    qt.push_back("q" + std::to_string(u) + "x" + std::to_string(i));
                    query = join(qt, " ");
                }
                used_queries.insert(normalize_query(query));
                skipped.clear();
                for (int s = 0; s < 2; ++s) {
                    std::size_t other = topic;
                    while (topics > 1 && other == topic)
                        other = rng.pick(static_cast<std::size_t>(topics));
                    if (other == topic) break;  // single-topic corpus: no clean skips
                    const std::size_t doc = other * static_cast<std::size_t>(cfg.docs_per_topic) +
                                            rng.pick(static_cast<std::size_t>(cfg.docs_per_topic));
                    if (std::find(skipped.begin(), skipped.end(), doc) == skipped.end())
                        skipped.push_back(doc);
                }
                pairs.push_back({query, clicked, skipped});
            }

            auto emit = [&](std::size_t doc, int tag) {
                log << user_id << '\t' << session_id << '\t' << query << '\t' << ts << '\t'
                    << out.corpus[doc].doc_id << '\t' << out.corpus[doc].title << '\t' << tag
                    << '\n';
            };
            emit(clicked, 1);
            for (std::size_t s : skipped) emit(s, 0);

            if (i >= boundary) {
                ++total_tests;
                if (refind) ++total_planted;
                tests_json.push_back(nlohmann::ordered_json{
                    {"index", i - boundary},
                    {"session_id", session_id},
                    {"query", query},
                    {"timestamp", ts},
                    {"planted", refind},
                    {"planted_doc", refind ? out.corpus[clicked].doc_id : ""}});
            }
        }

        users_json.push_back(nlohmann::ordered_json{{"user_id", user_id},
                                                    {"interactions", n},
                                                    {"boundary", boundary},
                                                    {"test_queries", std::move(tests_json)}});
    }

    out.log_tsv = log.str();
    out.manifest = nlohmann::ordered_json{
        {"config", cfg},
        {"users", std::move(users_json)},
        {"totals",
         {{"test_queries", total_tests},
          {"planted", total_planted},
          {"planted_fraction",
           total_tests > 0 ? static_cast<double>(total_planted) / static_cast<double>(total_tests)
                           : 0.0}}}};
    return out;
}

/// Writes corpus.jsonl, log.tsv and manifest.json under `dir`.
inline void write_synth(const GenOutput& out, const std::string& dir) {
    std::filesystem::create_directories(dir);
    {
        std::ofstream f(std::filesystem::path(dir) / "corpus.jsonl");
        if (!f) throw DataError("cannot write corpus.jsonl under " + dir);
        for (const auto& d : out.corpus) {
            nlohmann::ordered_json j = d;
            f << j.dump() << '\n';
        }
    }
    {
        std::ofstream f(std::filesystem::path(dir) / "log.tsv");
        if (!f) throw DataError("cannot write log.tsv under " + dir);
        f << out.log_tsv;
    }
    {
        std::ofstream f(std::filesystem::path(dir) / "manifest.json");
        if (!f) throw DataError("cannot write manifest.json under " + dir);
        f << out.manifest.dump(2) << '\n';
    }
}

inline std::vector<DocumentRef> load_corpus_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open corpus: " + path);
    std::vector<DocumentRef> docs;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        try {
            docs.push_back(nlohmann::json::parse(line).get<DocumentRef>());
        } catch (const nlohmann::json::exception& e) {
            throw DataError("corpus " + path + " line " + std::to_string(line_no) + ": " +
                            e.what());
        }
    }
    return docs;
}

}  // namespace cogs
