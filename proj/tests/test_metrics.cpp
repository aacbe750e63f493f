#include <catch2/catch_amalgamated.hpp>

#include "cogs/metrics.hpp"

using namespace cogs;

namespace {

/// Brute-force AP oracle: walk the ranking, average precision at each hit.
double ap_oracle(const std::vector<std::string>& ranking, const std::set<std::string>& relevant) {
    double sum = 0.0;
    int hits = 0;
    for (std::size_t k = 0; k < ranking.size(); ++k) {
        if (!relevant.count(ranking[k])) continue;
        ++hits;
        int seen = 0;
        for (std::size_t j = 0; j <= k; ++j)
            if (relevant.count(ranking[j])) ++seen;
        sum += static_cast<double>(seen) / static_cast<double>(k + 1);
    }
    return hits == 0 ? 0.0 : sum / hits;
}

}  // namespace

TEST_CASE("average_precision pinned example") {
    // Relevant docs at ranks 1, 3, 4 of five:
    // AP = (1/1 + 2/3 + 3/4) / 3 = 29/36 = 0.80555...
    std::vector<std::string> ranking = {"a", "x", "b", "c", "y"};
    std::set<std::string> relevant = {"a", "b", "c"};
    CHECK(average_precision(ranking, relevant) == Catch::Approx(29.0 / 36.0));

    // Single relevant doc at rank 2.
    CHECK(average_precision({"x", "a", "y"}, {"a"}) == Catch::Approx(0.5));

    // Relevant docs at ranks 1 and 3: (1 + 2/3) / 2 = 0.8333...
    CHECK(average_precision({"a", "x", "b"}, {"a", "b"}) == Catch::Approx(5.0 / 6.0));
}

TEST_CASE("average_precision divides by retrieved relevant docs only") {
    // Two relevant docs exist but only one is in the ranking.
    CHECK(average_precision({"a", "x"}, {"a", "missing"}) == Catch::Approx(1.0));
}

TEST_CASE("average_precision is zero with no relevant doc retrieved") {
    CHECK(average_precision({"x", "y"}, {"a"}) == 0.0);
    CHECK(average_precision({}, {"a"}) == 0.0);
    CHECK(average_precision({"x"}, {}) == 0.0);
}

TEST_CASE("average_precision matches the brute-force oracle") {
    const std::vector<std::string> ranking = {"a", "b", "c", "d", "e", "f"};
    // All 64 relevance patterns over 6 docs.
    for (int mask = 0; mask < 64; ++mask) {
        std::set<std::string> relevant;
        for (int b = 0; b < 6; ++b)
            if (mask & (1 << b)) relevant.insert(ranking[static_cast<std::size_t>(b)]);
        INFO("mask=" << mask);
        CHECK(average_precision(ranking, relevant) ==
              Catch::Approx(ap_oracle(ranking, relevant)).margin(1e-12));
    }
}

TEST_CASE("reciprocal_rank and precision_at_1") {
    CHECK(reciprocal_rank({"x", "y", "a"}, {"a"}) == Catch::Approx(1.0 / 3.0));
    CHECK(reciprocal_rank({"a", "y"}, {"a"}) == 1.0);
    CHECK(reciprocal_rank({"x", "y"}, {"a"}) == 0.0);
    CHECK(precision_at_1({"a", "x"}, {"a"}) == 1.0);
    CHECK(precision_at_1({"x", "a"}, {"a"}) == 0.0);
    CHECK(precision_at_1({}, {"a"}) == 0.0);
}

TEST_CASE("inverse pairs: counts originally-wrong pairs that were fixed") {
    // Original: x a y b (relevant a, b). Inverse pairs: (a,x), (b,x), (b,y).
    std::vector<std::string> original = {"x", "a", "y", "b"};
    std::set<std::string> relevant = {"a", "b"};

    // Perfect rerank fixes all three.
    PairCounts perfect = inverse_pair_counts(original, {"a", "b", "x", "y"}, relevant);
    CHECK(perfect.inverse_total == 3);
    CHECK(perfect.improved == 3);
    CHECK(perfect.correct_total == 1);  // (a, y) was already right
    CHECK(perfect.degraded == 0);

    // Identity rerank fixes nothing and breaks nothing.
    PairCounts identity = inverse_pair_counts(original, original, relevant);
    CHECK(identity.inverse_total == 3);
    CHECK(identity.improved == 0);
    CHECK(identity.degraded == 0);

    // Worst rerank: relevant docs sink to the bottom.
    PairCounts worst = inverse_pair_counts(original, {"x", "y", "a", "b"}, relevant);
    CHECK(worst.improved == 0);
    CHECK(worst.degraded == 1);  // (a, y) got flipped
}

TEST_CASE("inverse pairs with no relevant or no non-relevant docs") {
    CHECK(inverse_pair_counts({"x", "y"}, {"y", "x"}, {"a"}).inverse_total == 0);
    CHECK(inverse_pair_counts({"a", "b"}, {"b", "a"}, {"a", "b"}).inverse_total == 0);
}

TEST_CASE("inverse pairs rejects mismatched rankings") {
    CHECK_THROWS_AS(inverse_pair_counts({"a", "b"}, {"a"}, {"a"}), DataError);
    CHECK_THROWS_AS(inverse_pair_counts({"a", "b"}, {"a", "a"}, {"a"}), DataError);
    CHECK_THROWS_AS(inverse_pair_counts({"a", "b"}, {"a", "c"}, {"a"}), DataError);
}
