#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "cogs/text.hpp"
#include "cogs/types.hpp"

namespace cogs {

struct Bm25Params {
    double k1 = 1.2;
    double b = 0.75;
};

struct CorpusStats {
    std::int64_t doc_count = 0;
    double avg_doc_len = 0.0;
    std::map<std::string, std::int64_t> df;  // term -> number of docs containing it
};

inline std::string doc_text(const DocumentRef& d) { return d.title + " " + d.body; }

struct DocTerms {
    std::unordered_map<std::string, int> tf;
    int length = 0;

    static DocTerms from_text(std::string_view text) {
        DocTerms dt;
        for (auto& t : tokenize(text)) {
            ++dt.tf[t];
            ++dt.length;
        }
        return dt;
    }
};

template <typename DocRange>
CorpusStats build_stats(const DocRange& docs) {
    CorpusStats st;
    std::int64_t total_len = 0;
    for (const auto& d : docs) {
        ++st.doc_count;
        auto terms = tokenize(doc_text(d));
        total_len += static_cast<std::int64_t>(terms.size());
        std::sort(terms.begin(), terms.end());
        terms.erase(std::unique(terms.begin(), terms.end()), terms.end());
        for (auto& t : terms) ++st.df[t];
    }
    st.avg_doc_len =
        st.doc_count > 0 ? static_cast<double>(total_len) / static_cast<double>(st.doc_count) : 0.0;
    return st;
}

inline double bm25_idf(std::int64_t doc_count, std::int64_t df) {
    return std::log(1.0 + static_cast<double>(doc_count) / (static_cast<double>(df) + 0.5));
}

/// Okapi BM25 over pre-tokenized doc terms. Repeated query terms contribute
/// one summand per occurrence.
inline double bm25_score(const std::vector<std::string>& query_terms, const DocTerms& doc,
                         const CorpusStats& stats, const Bm25Params& params = {}) {
    if (stats.doc_count == 0 || doc.length == 0) return 0.0;
    const double len_norm =
        params.k1 * (1.0 - params.b +
                     params.b * static_cast<double>(doc.length) /
                         (stats.avg_doc_len > 0.0 ? stats.avg_doc_len : 1.0));
    double score = 0.0;
    for (const auto& t : query_terms) {
        auto it = doc.tf.find(t);
        if (it == doc.tf.end()) continue;
        auto df_it = stats.df.find(t);
        const std::int64_t df = df_it == stats.df.end() ? 0 : df_it->second;
        const double tf = static_cast<double>(it->second);
        score += bm25_idf(stats.doc_count, df) * tf * (params.k1 + 1.0) / (tf + len_norm);
    }
    return score;
}

inline double bm25_score(std::string_view query, const DocumentRef& doc, const CorpusStats& stats,
                         const Bm25Params& params = {}) {
    return bm25_score(tokenize(query), DocTerms::from_text(doc_text(doc)), stats, params);
}

/// Document collection with the inverted index used for candidate generation.
class Corpus {
public:
    Corpus() = default;

    explicit Corpus(std::vector<DocumentRef> docs) : docs_(std::move(docs)) {
        stats_ = build_stats(docs_);
        doc_terms_.reserve(docs_.size());
        for (std::size_t i = 0; i < docs_.size(); ++i) {
            doc_terms_.push_back(DocTerms::from_text(doc_text(docs_[i])));
            by_id_.emplace(docs_[i].doc_id, i);
            for (const auto& [term, tf] : doc_terms_[i].tf) postings_[term].push_back({i, tf});
        }
    }

    const std::vector<DocumentRef>& docs() const { return docs_; }
    const CorpusStats& stats() const { return stats_; }

    const DocumentRef* find(std::string_view doc_id) const {
        auto it = by_id_.find(std::string(doc_id));
        return it == by_id_.end() ? nullptr : &docs_[it->second];
    }

    /// Top-k docs by corpus-wide BM25; ties broken by corpus order. When fewer
    /// than k docs score above zero, zero-score docs pad the tail in corpus
    /// order so the result always has min(k, size) entries.
    std::vector<DocumentRef> top_k(std::string_view query, std::size_t k,
                                   const Bm25Params& params = {}) const {
        std::vector<double> acc(docs_.size(), 0.0);
        for (const auto& t : tokenize(query)) {
            auto it = postings_.find(t);
            if (it == postings_.end()) continue;
            const double idf = bm25_idf(stats_.doc_count, static_cast<std::int64_t>(it->second.size()));
            for (const auto& [doc_index, tf] : it->second) {
                const double len_norm =
                    params.k1 *
                    (1.0 - params.b +
                     params.b * static_cast<double>(doc_terms_[doc_index].length) /
                         (stats_.avg_doc_len > 0.0 ? stats_.avg_doc_len : 1.0));
                const double tfd = static_cast<double>(tf);
                acc[doc_index] += idf * tfd * (params.k1 + 1.0) / (tfd + len_norm);
            }
        }
        std::vector<std::size_t> order;
        order.reserve(docs_.size());
        for (std::size_t i = 0; i < docs_.size(); ++i)
            if (acc[i] > 0.0) order.push_back(i);
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return acc[a] > acc[b]; });
        std::vector<DocumentRef> out;
        out.reserve(std::min(k, docs_.size()));
        for (std::size_t i : order) {
            if (out.size() == k) break;
            out.push_back(docs_[i]);
        }
        for (std::size_t i = 0; i < docs_.size() && out.size() < k; ++i)
            if (acc[i] <= 0.0) out.push_back(docs_[i]);
        return out;
    }

    /// Candidate set for one query: top-k plus any listed relevant docs that
    /// the top-k missed (appended after, in the given order).
    std::vector<DocumentRef> candidates(std::string_view query, std::size_t k,
                                        const std::vector<std::string>& ensure_present,
                                        const Bm25Params& params = {}) const {
        auto out = top_k(query, k, params);
        for (const auto& id : ensure_present) {
            bool present = false;
            for (const auto& d : out)
                if (d.doc_id == id) {
                    present = true;
                    break;
                }
            if (present) continue;
            if (const DocumentRef* d = find(id)) out.push_back(*d);
        }
        return out;
    }

private:
    std::vector<DocumentRef> docs_;
    std::vector<DocTerms> doc_terms_;
    CorpusStats stats_;
    std::unordered_map<std::string, std::size_t> by_id_;
    std::unordered_map<std::string, std::vector<std::pair<std::size_t, int>>> postings_;
};

}  // namespace cogs
