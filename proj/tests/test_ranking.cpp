#define COGS_NO_HTTP 1
#include <catch2/catch_amalgamated.hpp>

#include "cogs/ranking.hpp"

using namespace cogs;

namespace {

std::vector<DocumentRef> docs(int n, const std::string& topic = "filler") {
    std::vector<DocumentRef> out;
    for (int i = 1; i <= n; ++i)
        out.push_back(DocumentRef{"d" + std::to_string(i), "title " + std::to_string(i),
                                  topic + " body " + std::to_string(i)});
    return out;
}

}  // namespace

TEST_CASE("term_rank orders candidates by bm25 against the user model") {
    std::vector<DocumentRef> cands = {
        {"d1", "unrelated", "nothing here"},
        {"d2", "designer shoes", "designer shoes and sandals"},
        {"d3", "shoes", "plain shoes"},
    };
    RankedResult r = term_rank("designer shoes", cands);
    CHECK(r.ranker_id == "term");
    REQUIRE(r.items.size() == 3);
    CHECK(r.items[0].doc_id == "d2");
    CHECK(r.items[1].doc_id == "d3");
    CHECK(r.items[2].doc_id == "d1");
    CHECK(r.items[0].has_score);
    CHECK(r.items[0].score > r.items[1].score);
    CHECK(r.items[2].score == 0.0);
    CHECK_FALSE(r.parse_failure);
}

TEST_CASE("term_rank keeps original order on ties") {
    RankedResult r = term_rank("no overlap at all", docs(4));
    REQUIRE(r.items.size() == 4);
    CHECK(r.ids() == std::vector<std::string>{"d1", "d2", "d3", "d4"});
}

TEST_CASE("render_rank_documents numbers a slice and clips bodies") {
    std::vector<DocumentRef> cands = {{"a", "Title A", std::string(300, 'x')},
                                      {"b", "Title B", ""}};
    const std::string text = render_rank_documents(cands, {1, 0});
    auto lines = split_lines(text);
    REQUIRE(lines.size() == 2);
    CHECK(lines[0] == "[1] Title B");  // slice order, not candidate order
    CHECK(lines[1].rfind("[2] Title A ", 0) == 0);
    CHECK(lines[1].size() == std::string("[2] Title A ").size() + 200);  // body clipped
}

TEST_CASE("llm_rank applies the window permutation") {
    // 3 docs in one window; the mock reverses them.
    MockProvider p(ProviderConfig{}, {{"[Documents]", false, "3 > 2 > 1", false}});
    RankedResult r = llm_rank(p, TemplateSet::defaults(), "q", "prefs", docs(3), 20, 10);
    CHECK(r.ranker_id == "llm");
    CHECK(r.ids() == std::vector<std::string>{"d3", "d2", "d1"});
    CHECK_FALSE(r.items[0].has_score);
    CHECK_FALSE(r.parse_failure);
    CHECK_FALSE(r.degraded);
}

TEST_CASE("llm_rank slides tail-to-head so deep documents can climb") {
    // Window 2, stride 1 over 4 docs: windows start at 2, 1, 0. A rule that
    // always answers "2 > 1" swaps each window, carrying the last doc forward
    // one stride per window: d4 climbs from position 4 to position 1.
    MockProvider p(ProviderConfig{}, {{"[Documents]", false, "2 > 1", false}});
    TraceSink sink;
    p.set_sink(&sink);
    RankedResult r = llm_rank(p, TemplateSet::defaults(), "q", "prefs", docs(4), 2, 1);
    CHECK(sink.count() == 3);
    CHECK(r.ids() == std::vector<std::string>{"d4", "d1", "d2", "d3"});
}

TEST_CASE("llm_rank window math covers the whole list") {
    // 50 docs, window 20, stride 10 -> starts 30, 20, 10, 0 -> 4 calls.
    MockProvider p(ProviderConfig{});  // echo; parses to garbage -> identity
    TraceSink sink;
    p.set_sink(&sink);
    RankedResult r = llm_rank(p, TemplateSet::defaults(), "q", "prefs", docs(50), 20, 10);
    CHECK(sink.count() == 4);
    REQUIRE(r.items.size() == 50);
    // Every candidate appears exactly once no matter what the replies were.
    auto ids = r.ids();
    std::sort(ids.begin(), ids.end());
    CHECK(std::adjacent_find(ids.begin(), ids.end()) == ids.end());
}

TEST_CASE("llm_rank failure leaves the window untouched and sets degraded") {
    MockProvider p(ProviderConfig{}, {{"[Documents]", false, "", true}});
    RankedResult r = llm_rank(p, TemplateSet::defaults(), "q", "prefs", docs(3), 20, 10);
    CHECK(r.degraded);
    CHECK(r.ids() == std::vector<std::string>{"d1", "d2", "d3"});
}

TEST_CASE("llm_rank unparseable reply keeps order and flags parse_failure") {
    MockProvider p(ProviderConfig{}, {{"[Documents]", false, "no labels here", false}});
    RankedResult r = llm_rank(p, TemplateSet::defaults(), "q", "prefs", docs(3), 20, 10);
    CHECK(r.parse_failure);
    CHECK_FALSE(r.degraded);
    CHECK(r.ids() == std::vector<std::string>{"d1", "d2", "d3"});
}

TEST_CASE("llm_rank prompt carries preferences, query and documents") {
    MockProvider p(ProviderConfig{});
    TraceSink sink;
    p.set_sink(&sink);
    llm_rank(p, TemplateSet::defaults(), "the query", "the preferences", docs(2), 20, 10);
    REQUIRE(sink.count() == 1);
    const std::string prompt = sink.snapshot()[0].prompt;
    CHECK(prompt.find("[User Preferences]\nthe preferences") != std::string::npos);
    CHECK(prompt.find("[Query]\nthe query") != std::string::npos);
    CHECK(prompt.find("[1] title 1") != std::string::npos);
    CHECK(prompt.find("[2] title 2") != std::string::npos);
}

TEST_CASE("pclick_rank fuses click scores with the original order") {
    // Worked two-candidate example: d1 ranked first originally with 1 click,
    // d2 second with 2 clicks on this query (total 3, beta 0.5).
    //   pscore(d1) = 1/3.5, pscore(d2) = 2/3.5
    //   borda(d1) = (2-1) + 1*(2-2) = 1,  borda(d2) = (2-2) + 1*(2-1) = 1
    // Tie on borda -> higher pscore wins -> d2 first.
    SensoryStore store;
    store.entries["q"] = {{"d1", 1}, {"d2", 2}};
    std::vector<DocumentRef> cands = {{"d1", "t1", "b"}, {"d2", "t2", "b"}};
    RankedResult r = pclick_rank(store, "q", cands, 0.5, 1.0);
    CHECK(r.ranker_id == "pclick");
    REQUIRE(r.items.size() == 2);
    CHECK(r.items[0].doc_id == "d2");
    CHECK(r.items[1].doc_id == "d1");
    CHECK(r.items[0].score == Catch::Approx(1.0));
}

TEST_CASE("pclick_rank without click data keeps the original order") {
    SensoryStore store;
    RankedResult r = pclick_rank(store, "never seen", docs(3));
    CHECK(r.ids() == std::vector<std::string>{"d1", "d2", "d3"});
}

TEST_CASE("pclick_rank total counts clicks on all docs for the query") {
    // d9 was clicked 7 times on q but is not a candidate; it still inflates
    // the denominator: pscore(d1) = 1 / (8 + 0.5).
    SensoryStore store;
    store.entries["q"] = {{"d1", 1}, {"d9", 7}};
    std::vector<DocumentRef> cands = {{"d2", "t", "b"}, {"d1", "t", "b"}};
    RankedResult r = pclick_rank(store, "q", cands, 0.5, 1.0);
    // pscore: d2=0, d1=1/8.5. by_pscore: d1, d2.
    // borda(d2) = (2-1) + (2-2) = 1; borda(d1) = (2-2) + (2-1) = 1. Tie ->
    // pscore decides -> d1 first.
    CHECK(r.ids() == std::vector<std::string>{"d1", "d2"});
}

TEST_CASE("pclick_rank lambda weights the click-based ranking") {
    SensoryStore store;
    store.entries["q"] = {{"d3", 5}};
    // lambda 0: clicks are ignored entirely, original order stands.
    RankedResult r0 = pclick_rank(store, "q", docs(3), 0.5, 0.0);
    CHECK(r0.ids()[0] == "d1");
    // lambda large: click ranking dominates.
    RankedResult r9 = pclick_rank(store, "q", docs(3), 0.5, 9.0);
    CHECK(r9.ids()[0] == "d3");
}

TEST_CASE("pclick_rank normalizes the query before lookup") {
    SensoryStore store;
    store.entries["red shoes"] = {{"d2", 3}};
    RankedResult r = pclick_rank(store, "  Red   SHOES!", docs(2), 0.5, 1.0);
    CHECK(r.ids()[0] == "d2");
}
