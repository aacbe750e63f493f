#define COGS_NO_HTTP 1
#include <catch2/catch_amalgamated.hpp>

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <thread>

#include "cogs/cognition.hpp"

using namespace cogs;

namespace {

/// Scripted provider for failure-path tests: fails `failures` times with a
/// retryable/terminal error, then succeeds.
class FlakyProvider : public Provider {
public:
    FlakyProvider(ProviderConfig cfg, int failures, bool retryable)
        : Provider(std::move(cfg)), failures_(failures), retryable_(retryable) {}
    std::string id() const override { return "flaky"; }
    int calls() const { return calls_; }

protected:
    Completion complete_impl(const std::string&) override {
        if (++calls_ <= failures_) return {false, "", "transient", retryable_};
        return {true, "recovered", "", false};
    }

private:
    int failures_;
    bool retryable_;
    std::atomic<int> calls_{0};
};

std::filesystem::path temp_file(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / name;
    std::filesystem::remove(p);
    return p;
}

}  // namespace

TEST_CASE("mock provider echoes the last bracketed section by default") {
    MockProvider p(ProviderConfig{});
    Completion c = p.complete("[Examples]\nfoo\n\n[Query]\nred shoes\n\nPlease do the thing.");
    REQUIRE(c.ok);
    CHECK(c.text == "red shoes");

    // Multi-line section content is kept up to the blank line.
    Completion multi = p.complete("[Log]\nline one\nline two\n\ntrailing instruction");
    CHECK(multi.text == "line one\nline two");

    // No bracketed section at all: the whole prompt comes back trimmed.
    CHECK(p.complete("  just text  ").text == "just text");
}

TEST_CASE("mock rules match substrings in order, first wins") {
    MockProvider p(ProviderConfig{}, {{"alpha", false, "A", false},
                                      {"beta", false, "B", false},
                                      {"alpha beta", false, "never reached", false}});
    CHECK(p.complete("contains alpha beta").text == "A");
    CHECK(p.complete("only beta here").text == "B");
    CHECK(p.complete("[X]\nneither\n\ngo").text == "neither");
}

TEST_CASE("mock regex rules support capture groups") {
    MockProvider p(ProviderConfig{},
                   {{"\\[Query\\]\\n(\\w+) (\\w+)", true, "$2 then $1", false}});
    CHECK(p.complete("[Query]\nred shoes\n\ngo").text == "shoes then red");
}

TEST_CASE("bad mock regex is a usage error") {
    CHECK_THROWS_AS(MockProvider(ProviderConfig{}, {{"(unclosed", true, "x", false}}), UsageError);
}

TEST_CASE("mock fail rules produce terminal failures") {
    MockProvider p(ProviderConfig{}, {{"boom", false, "", true}});
    TraceSink sink;
    p.set_sink(&sink);
    Completion c = p.complete("this will boom now");
    CHECK_FALSE(c.ok);
    CHECK_FALSE(c.retryable);
    REQUIRE(sink.count() == 1);
    CHECK(sink.snapshot()[0].attempts == 1);  // terminal failures are not retried
}

TEST_CASE("prompt over the input budget is rejected before sending") {
    ProviderConfig cfg;
    cfg.input_budget_tokens = 5;  // allows floor(5/1.3) = 3 words
    MockProvider p(cfg);
    TraceSink sink;
    p.set_sink(&sink);

    CHECK(p.complete("one two three").ok);
    Completion c = p.complete("one two three four five");
    CHECK_FALSE(c.ok);
    CHECK(c.error.find("exceeds input budget") != std::string::npos);
    REQUIRE(sink.count() == 2);
    CHECK(sink.snapshot()[1].attempts == 0);  // never reached the transport
}

TEST_CASE("retryable failures are retried up to the configured extra attempts") {
    ProviderConfig cfg;
    cfg.retries = 2;
    FlakyProvider twice(cfg, 2, true);
    TraceSink sink;
    twice.set_sink(&sink);
    Completion c = twice.complete("x");
    CHECK(c.ok);
    CHECK(c.text == "recovered");
    CHECK(sink.snapshot()[0].attempts == 3);

    FlakyProvider three(cfg, 3, true);
    CHECK_FALSE(three.complete("x").ok);
    CHECK(three.calls() == 3);  // 1 + 2 retries, then give up

    FlakyProvider terminal(cfg, 1, false);
    CHECK_FALSE(terminal.complete("x").ok);
    CHECK(terminal.calls() == 1);  // non-retryable: no retry
}

TEST_CASE("every completion lands in the sink with token estimates") {
    MockProvider p(ProviderConfig{});
    TraceSink sink;
    p.set_sink(&sink);
    p.complete("a b c");
    auto records = sink.snapshot();
    REQUIRE(records.size() == 1);
    CHECK(records[0].provider_id == "mock");
    CHECK(records[0].ok);
    CHECK(records[0].prompt == "a b c");
    CHECK(records[0].prompt_tokens == Catch::Approx(3.9));
    CHECK(records[0].latency_seconds >= 0.0);
}

TEST_CASE("fifo gate admits at most capacity concurrent holders") {
    FifoGate gate(2);
    std::atomic<int> inside{0};
    std::atomic<int> peak{0};
    std::vector<std::thread> threads;
    for (int i = 0; i < 8; ++i) {
        threads.emplace_back([&] {
            gate.acquire();
            const int now = ++inside;
            int prev = peak.load();
            while (now > prev && !peak.compare_exchange_weak(prev, now)) {
            }
            std::this_thread::sleep_for(std::chrono::milliseconds(2));
            --inside;
            gate.release();
        });
    }
    for (auto& t : threads) t.join();
    CHECK(peak.load() <= 2);
    CHECK(peak.load() >= 1);
}

TEST_CASE("cached provider replays recorded completions") {
    const auto path = temp_file("cogs_cache_test.jsonl");

    {
        auto inner = std::make_unique<MockProvider>(
            ProviderConfig{}, std::vector<MockRule>{{"ping", false, "pong", false}});
        CachedProvider cache(std::move(inner), path.string(), ProviderConfig{});
        CHECK(cache.complete("ping 1").text == "pong");
        CHECK(cache.complete("ping 2").text == "pong");
        CHECK(cache.size() == 2);
    }

    // Replay without any wrapped provider: hits succeed, misses fail.
    CachedProvider replay(nullptr, path.string(), ProviderConfig{});
    CHECK(replay.size() == 2);
    CHECK(replay.complete("ping 1").ok);
    Completion miss = replay.complete("ping 3");
    CHECK_FALSE(miss.ok);
    CHECK(miss.error.find("cache miss") != std::string::npos);

    std::filesystem::remove(path);
}

TEST_CASE("cached provider tolerates a torn trailing line") {
    const auto path = temp_file("cogs_cache_torn.jsonl");
    {
        std::ofstream out(path);
        nlohmann::ordered_json j;
        j["key"] = CachedProvider::cache_key("p1");
        j["prompt"] = "p1";
        j["reply"] = "r1";
        out << j.dump() << "\n{\"key\": \"trunc";  // simulated crash mid-write
    }
    CachedProvider replay(nullptr, path.string(), ProviderConfig{});
    CHECK(replay.size() == 1);
    CHECK(replay.bad_lines() == 1);
    CHECK(replay.complete("p1").text == "r1");
    std::filesystem::remove(path);
}

TEST_CASE("cache keys are the fnv1a hash of the prompt in hex") {
    CHECK(CachedProvider::cache_key("") == "cbf29ce484222325");
    CHECK(CachedProvider::cache_key("a") == "af63dc4c8601ec8c");
}

TEST_CASE("chunk_summarize passes short text through untouched") {
    MockProvider p(ProviderConfig{});
    TraceSink sink;
    p.set_sink(&sink);
    CHECK(chunk_summarize(p, "short text", 100.0) == "short text");
    CHECK(sink.count() == 0);  // within budget: no provider call at all
}

TEST_CASE("chunk_summarize shrinks long text through the provider") {
    // Every chunk summarizes to one word, so one pass suffices.
    MockProvider p(ProviderConfig{},
                   {{"Please summarize the text above", false, "gist", false}});
    TraceSink sink;
    p.set_sink(&sink);

    std::string text;
    for (int i = 0; i < 400; ++i) text += "word" + std::to_string(i) + " ";
    const double budget = 130.0;  // 100 words
    const std::string out = chunk_summarize(p, text, budget);
    CHECK(estimate_tokens(out) <= budget);
    CHECK(out.find("gist") == 0);
    // 400 words, chunks of floor(130/1.3)-24 = 76 words -> ceil(400/76) = 6 calls.
    CHECK(sink.count() == 6);
}

TEST_CASE("chunk_summarize falls back to truncation when the provider fails") {
    MockProvider p(ProviderConfig{},
                   {{"Please summarize the text above", false, "", true}});
    std::string text;
    for (int i = 0; i < 100; ++i) text += "w" + std::to_string(i) + " ";
    const std::string out = chunk_summarize(p, text, 13.0);  // 10 words
    CHECK(estimate_tokens(out) <= 13.0);
    CHECK(out.rfind("w0 w1 ", 0) == 0);  // head truncation preserves the prefix
}

TEST_CASE("chunk_summarize truncates when summaries refuse to shrink") {
    // The mock echoes the [Text] section, so each pass reproduces its input
    // and the loop must bail out to truncation after 3 passes.
    MockProvider p(ProviderConfig{});
    std::string text;
    for (int i = 0; i < 100; ++i) text += "w" + std::to_string(i) + " ";
    TraceSink sink;
    p.set_sink(&sink);
    const std::string out = chunk_summarize(p, text, 13.0);
    CHECK(estimate_tokens(out) <= 13.0);
    CHECK_FALSE(out.empty());
}

TEST_CASE("mock rules load from a json file") {
    const auto path = temp_file("cogs_mock_rules.json");
    {
        std::ofstream out(path);
        out << R"({"delay_ms": 0, "rules": [
            {"match": "hello", "reply": "world"},
            {"match": "^\\[Q\\]$", "regex": true, "reply": "matched"},
            {"match": "die", "fail": true}
        ]})";
    }
    auto p = MockProvider::from_json_file(ProviderConfig{}, path.string());
    CHECK(p->complete("hello there").text == "world");
    CHECK(p->complete("[Q]").text == "matched");
    CHECK_FALSE(p->complete("die now").ok);
    CHECK_THROWS_AS(MockProvider::from_json_file(ProviderConfig{}, "/nonexistent/rules.json"),
                    DataError);
    std::filesystem::remove(path);
}
