#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "cogs/types.hpp"

namespace cogs {

inline constexpr const char* kPimpVersion = "pimp-v1";

/// Mean of precision@k over the ranks k that hold a relevant doc, divided by
/// the number of relevant docs actually present in the ranking. No relevant
/// doc retrieved -> 0 (callers count those cases separately).
inline double average_precision(const std::vector<std::string>& ranking,
                                const std::set<std::string>& relevant) {
    std::int64_t hits = 0;
    double sum = 0.0;
    for (std::size_t k = 0; k < ranking.size(); ++k) {
        if (relevant.count(ranking[k])) {
            ++hits;
            sum += static_cast<double>(hits) / static_cast<double>(k + 1);
        }
    }
    return hits == 0 ? 0.0 : sum / static_cast<double>(hits);
}

inline double reciprocal_rank(const std::vector<std::string>& ranking,
                              const std::set<std::string>& relevant) {
    for (std::size_t k = 0; k < ranking.size(); ++k)
        if (relevant.count(ranking[k])) return 1.0 / static_cast<double>(k + 1);
    return 0.0;
}

inline double precision_at_1(const std::vector<std::string>& ranking,
                             const std::set<std::string>& relevant) {
    return !ranking.empty() && relevant.count(ranking[0]) ? 1.0 : 0.0;
}

/// Pair bookkeeping behind P-improve. An inverse pair is (relevant d+,
/// non-relevant d-) that the original order got wrong (d- before d+);
/// `improved` counts those the new order fixed. `degraded` covers the
/// symmetric mistake: originally correct pairs the new order flipped.
struct PairCounts {
    std::int64_t improved = 0;
    std::int64_t degraded = 0;
    std::int64_t inverse_total = 0;  // originally wrong pairs
    std::int64_t correct_total = 0;  // originally right pairs
};

inline PairCounts inverse_pair_counts(const std::vector<std::string>& original,
                                      const std::vector<std::string>& reranked,
                                      const std::set<std::string>& relevant) {
    if (original.size() != reranked.size())
        throw DataError("inverse_pair_counts: rankings differ in size");
    std::map<std::string, std::size_t> pos_new;
    for (std::size_t i = 0; i < reranked.size(); ++i) pos_new[reranked[i]] = i;
    if (pos_new.size() != reranked.size())
        throw DataError("inverse_pair_counts: reranked list holds duplicates");

    PairCounts out;
    for (std::size_t i = 0; i < original.size(); ++i) {
        if (!relevant.count(original[i])) continue;
        auto rel_new = pos_new.find(original[i]);
        if (rel_new == pos_new.end())
            throw DataError("inverse_pair_counts: rankings cover different documents");
        for (std::size_t j = 0; j < original.size(); ++j) {
            if (relevant.count(original[j])) continue;
            auto non_new = pos_new.find(original[j]);
            if (non_new == pos_new.end())
                throw DataError("inverse_pair_counts: rankings cover different documents");
            if (j < i) {  // originally wrong: non-relevant above relevant
                ++out.inverse_total;
                if (rel_new->second < non_new->second) ++out.improved;
            } else if (j > i) {  // originally right
                ++out.correct_total;
                if (rel_new->second > non_new->second) ++out.degraded;
            }
        }
    }
    return out;
}

}  // namespace cogs
