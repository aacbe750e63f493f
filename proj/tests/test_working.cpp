#define COGS_NO_HTTP 1
#include <catch2/catch_amalgamated.hpp>

#include "cogs/working_memory.hpp"

using namespace cogs;

namespace {

Session short_term_session() {
    Session s{"s7", {}};
    for (int i = 0; i < 8; ++i)
        s.interactions.push_back(Interaction{"recent q" + std::to_string(i), 100 + i, "s7",
                                             {"d1"}, {}});
    return s;
}

LongTermStore small_store() {
    LongTermStore store;
    MemorySlot slot;
    slot.explicit_entries = {{"Shoes", {"designer shoes", "sandals"}}};
    slot.implicit_entries = {{"Gender", "Female"}};
    store.slots.push_back(slot);
    return store;
}

TitleLookup titles() { return make_title_lookup({{"d1", "Doc One"}}); }

}  // namespace

TEST_CASE("assemble_context rewrites, clips recent, and retrieves") {
    MockProvider p(ProviderConfig{},
                   {{"query re-writer", false, "designer shoes online store", false},
                    {"Shoes: designer shoes", false, "Shoes: designer shoes, sandals", false},
                    {"Gender: Female", false, "Gender: Female", false}});
    AssembleOptions opt;
    opt.m = 3;
    WorkingContext ctx = assemble_context("shoes", short_term_session(), small_store(), &p,
                                          TemplateSet::defaults(), opt);
    CHECK(ctx.original_query == "shoes");
    CHECK(ctx.rewritten_query == "designer shoes online store");
    REQUIRE(ctx.recent.size() == 3);
    CHECK(ctx.recent[0].query == "recent q5");  // the LAST m interactions
    CHECK(ctx.recent[2].query == "recent q7");
    CHECK(ctx.interests == std::vector<std::string>{"Shoes: designer shoes, sandals"});
    CHECK(ctx.background == std::vector<std::string>{"Gender: Female"});
    CHECK_FALSE(ctx.rewrite_degraded);
    CHECK_FALSE(ctx.retrieval_degraded);
}

TEST_CASE("rewrite toggle off keeps the original query") {
    MockProvider p(ProviderConfig{},
                   {{"query re-writer", false, "should never be used", false}});
    TraceSink sink;
    p.set_sink(&sink);
    AssembleOptions opt;
    opt.rewrite = false;
    opt.recent = false;
    opt.retrieval.want_explicit = false;
    opt.retrieval.want_implicit = false;
    WorkingContext ctx = assemble_context("shoes", short_term_session(), small_store(), &p,
                                          TemplateSet::defaults(), opt);
    CHECK(ctx.rewritten_query == "shoes");
    CHECK(ctx.recent.empty());
    CHECK(ctx.interests.empty());
    CHECK(sink.count() == 0);  // nothing was asked of the provider
}

TEST_CASE("failed rewrite degrades to the original query") {
    MockProvider p(ProviderConfig{}, {{"query re-writer", false, "", true}});
    AssembleOptions opt;
    opt.retrieval.want_explicit = false;
    opt.retrieval.want_implicit = false;
    WorkingContext ctx = assemble_context("shoes", short_term_session(), small_store(), &p,
                                          TemplateSet::defaults(), opt);
    CHECK(ctx.rewritten_query == "shoes");
    CHECK(ctx.rewrite_degraded);
}

TEST_CASE("retrieval is keyed by the rewritten query") {
    // The retrieve rule matches the rewritten text, proving it reached the
    // retrieval prompt's [Query] section.
    MockProvider p(ProviderConfig{},
                   {{"query re-writer", false, "maybelline cosmetics", false},
                    {"\\[Query\\]\\nmaybelline cosmetics", true, "Cosmetics: MAC", false}});
    WorkingContext ctx = assemble_context("maybelline", short_term_session(), small_store(), &p,
                                          TemplateSet::defaults(), {});
    CHECK(ctx.interests == std::vector<std::string>{"Cosmetics: MAC"});
}

TEST_CASE("render_recent lists one interaction per line") {
    std::vector<Interaction> recent = {Interaction{"q1", 1, "s", {"d1"}, {}},
                                       Interaction{"q2", 2, "s", {"d1"}, {"dz"}}};
    CHECK(render_recent(recent, titles()) ==
          "q1: Doc One\nq2: Doc One, skipped: dz");
    CHECK(render_recent({}, titles()).empty());
}

TEST_CASE("model_user produces the intent description") {
    MockProvider p(ProviderConfig{},
                   {{"Please infer the user's personalized query intent", false,
                     "  Fashion shopping for designer shoes  ", false}});
    WorkingContext ctx;
    ctx.rewritten_query = "designer shoes";
    ctx.interests = {"Shoes: designer shoes"};
    UserModel m = model_user(ctx, p, TemplateSet::defaults(), titles());
    CHECK_FALSE(m.degraded);
    CHECK(m.text == "Fashion shopping for designer shoes");  // trimmed
}

TEST_CASE("model_user degrades to the rewritten query on failure or emptiness") {
    WorkingContext ctx;
    ctx.rewritten_query = "fallback text";

    MockProvider fail(ProviderConfig{},
                      {{"Please infer the user's personalized query intent", false, "", true}});
    UserModel f = model_user(ctx, fail, TemplateSet::defaults(), titles());
    CHECK(f.degraded);
    CHECK(f.text == "fallback text");

    MockProvider empty(ProviderConfig{},
                       {{"Please infer the user's personalized query intent", false, "   ",
                         false}});
    UserModel e = model_user(ctx, empty, TemplateSet::defaults(), titles());
    CHECK_FALSE(e.degraded);  // the call worked; the reply was just empty
    CHECK(e.text == "fallback text");
}

TEST_CASE("model_user prompt sections appear in the canonical order") {
    MockProvider p(ProviderConfig{});
    TraceSink sink;
    p.set_sink(&sink);
    WorkingContext ctx;
    ctx.rewritten_query = "the rewritten one";
    ctx.background = {"Gender: Female"};
    ctx.interests = {"Shoes: sandals"};
    ctx.recent = {Interaction{"recent query", 5, "s", {"d1"}, {}}};
    UserModel m = model_user(ctx, p, TemplateSet::defaults(), titles());

    REQUIRE(sink.count() == 1);
    const std::string prompt = sink.snapshot()[0].prompt;
    const auto bg = prompt.find("[User Background]");
    const auto in = prompt.find("[User Interests]");
    const auto rc = prompt.find("[Recent Queries]");
    const auto rq = prompt.find("[Re-written Query]");
    REQUIRE(bg != std::string::npos);
    REQUIRE(in != std::string::npos);
    REQUIRE(rc != std::string::npos);
    REQUIRE(rq != std::string::npos);
    CHECK(bg < in);
    CHECK(in < rc);
    CHECK(rc < rq);
    CHECK(prompt.find("Gender: Female") < in);
    CHECK(prompt.find("recent query: Doc One") > rc);
    // The echo provider answers with the last section: the rewritten query.
    CHECK(m.text == "the rewritten one");
}

TEST_CASE("model_user shrinks oversized sections to fit the budget") {
    ProviderConfig cfg;
    cfg.input_budget_tokens = 150;
    MockProvider p(cfg, {{"Please summarize the text above", false, "condensed", false},
                         {"Please infer the user's personalized query intent", false,
                          "intent", false}});
    TraceSink sink;
    p.set_sink(&sink);

    WorkingContext ctx;
    ctx.rewritten_query = "q";
    for (int i = 0; i < 120; ++i) ctx.interests.push_back("interest line " + std::to_string(i));
    for (int i = 0; i < 40; ++i)
        ctx.recent.push_back(Interaction{"r" + std::to_string(i), i, "s", {"d1"}, {}});

    UserModel m = model_user(ctx, p, TemplateSet::defaults(), titles());
    CHECK(m.text == "intent");
    for (const auto& r : sink.snapshot()) {
        INFO(r.prompt.substr(0, 60));
        CHECK(r.prompt_tokens <= 150.0);
    }
}
