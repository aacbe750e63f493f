#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <regex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "cogs/text.hpp"
#include "cogs/types.hpp"

namespace cogs {

struct ProviderConfig {
    std::string endpoint;  // chat-completions URL (http provider only)
    std::string model = "default";
    double temperature = 0.2;
    int max_output_tokens = 256;
    int input_budget_tokens = 3000;
    double timeout_seconds = 30.0;
    int retries = 2;  // extra attempts after the first, transient failures only
    int concurrency = 4;
    std::string api_key_env = "COGSEARCH_API_KEY";
};

struct Completion {
    bool ok = false;
    std::string text;
    std::string error;
    bool retryable = false;
};

struct CompletionRecord {
    std::string provider_id;
    std::string prompt;
    std::string reply;
    bool ok = false;
    std::string error;
    int attempts = 0;
    double prompt_tokens = 0.0;  // estimate
    double latency_seconds = 0.0;
};

/// Thread-safe collector of every completion a provider performed.
class TraceSink {
public:
    void append(CompletionRecord rec) {
        std::lock_guard lk(m_);
        records_.push_back(std::move(rec));
    }
    std::size_t count() const {
        std::lock_guard lk(m_);
        return records_.size();
    }
    std::vector<CompletionRecord> snapshot() const {
        std::lock_guard lk(m_);
        return records_;
    }
    void clear() {
        std::lock_guard lk(m_);
        records_.clear();
    }

private:
    mutable std::mutex m_;
    std::vector<CompletionRecord> records_;
};

/// Counting gate that admits waiters strictly in arrival order.
class FifoGate {
public:
    explicit FifoGate(int capacity) : cap_(static_cast<std::uint64_t>(capacity < 1 ? 1 : capacity)) {}

    void acquire() {
        std::unique_lock lk(m_);
        const std::uint64_t ticket = next_ticket_++;
        cv_.wait(lk, [&] { return ticket < released_ + cap_; });
    }

    void release() {
        std::lock_guard lk(m_);
        ++released_;
        cv_.notify_all();
    }

    std::uint64_t capacity() const { return cap_; }

private:
    const std::uint64_t cap_;
    std::mutex m_;
    std::condition_variable cv_;
    std::uint64_t next_ticket_ = 0;
    std::uint64_t released_ = 0;
};

/// Cognitive unit interface. `complete` enforces the input-token budget before
/// sending, serializes calls through the FIFO gate, retries transient
/// failures, and records every call to the attached sink.
class Provider {
public:
    explicit Provider(ProviderConfig cfg)
        : cfg_(std::move(cfg)), gate_(cfg_.concurrency) {}
    virtual ~Provider() = default;

    virtual std::string id() const = 0;
    const ProviderConfig& config() const { return cfg_; }
    void set_sink(TraceSink* sink) { sink_ = sink; }
    TraceSink* sink() const { return sink_; }

    Completion complete(const std::string& prompt) {
        CompletionRecord rec;
        rec.provider_id = id();
        rec.prompt = prompt;
        rec.prompt_tokens = estimate_tokens(prompt);
        const auto t0 = std::chrono::steady_clock::now();

        Completion result;
        if (rec.prompt_tokens > static_cast<double>(cfg_.input_budget_tokens)) {
            std::ostringstream msg;
            msg << "prompt estimate " << rec.prompt_tokens << " exceeds input budget "
                << cfg_.input_budget_tokens << " tokens; not sent";
            result.error = msg.str();
        } else {
            gate_.acquire();
            for (int attempt = 0; attempt <= cfg_.retries; ++attempt) {
                rec.attempts = attempt + 1;
                result = complete_impl(prompt);
                if (result.ok || !result.retryable) break;
            }
            gate_.release();
        }

        rec.ok = result.ok;
        rec.reply = result.text;
        rec.error = result.error;
        rec.latency_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (sink_) sink_->append(std::move(rec));
        return result;
    }

protected:
    virtual Completion complete_impl(const std::string& prompt) = 0;

    ProviderConfig cfg_;

private:
    FifoGate gate_;
    TraceSink* sink_ = nullptr;
};

/// Returns the content of the last [Header] section of a prompt: the lines
/// after the last header-only line, up to the next blank line.
inline std::string last_section_content(const std::string& prompt) {
    const auto lines = split_lines(prompt);
    std::size_t header = lines.size();
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const std::string t = trim(lines[i]);
        if (t.size() >= 2 && t.front() == '[' && t.back() == ']') header = i;
    }
    if (header == lines.size()) return trim(prompt);
    std::vector<std::string> content;
    for (std::size_t i = header + 1; i < lines.size(); ++i) {
        if (trim(lines[i]).empty()) break;
        content.push_back(lines[i]);
    }
    return trim(join(content, "\n"));
}

struct MockRule {
    std::string match;  // substring, or ECMAScript regex when `regex` is true
    bool regex = false;
    std::string reply;  // regex rules may use $1..$9 group references
    bool fail = false;  // matching prompt fails instead of replying
};

/// Deterministic offline provider: first matching rule wins; prompts no rule
/// matches are answered by echoing their last bracketed section.
class MockProvider : public Provider {
public:
    explicit MockProvider(ProviderConfig cfg, std::vector<MockRule> rules = {},
                          double delay_ms = 0.0)
        : Provider(std::move(cfg)), rules_(std::move(rules)), delay_ms_(delay_ms) {
        compiled_.reserve(rules_.size());
        for (const auto& r : rules_) {
            if (r.regex) {
                try {
                    compiled_.emplace_back(
                        std::regex(r.match, std::regex::ECMAScript | std::regex::multiline));
                } catch (const std::regex_error& e) {
                    throw UsageError("bad mock rule regex '" + r.match + "': " + e.what());
                }
            } else {
                compiled_.emplace_back();
            }
        }
    }

    static std::unique_ptr<MockProvider> from_json_file(ProviderConfig cfg,
                                                        const std::string& path,
                                                        double fallback_delay_ms = 0.0) {
        std::ifstream in(path);
        if (!in) throw DataError("cannot open mock rules file: " + path);
        nlohmann::json j;
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            throw DataError("bad mock rules file " + path + ": " + e.what());
        }
        std::vector<MockRule> rules;
        for (const auto& r : j.value("rules", nlohmann::json::array())) {
            MockRule rule;
            rule.match = r.value("match", "");
            rule.regex = r.value("regex", false);
            rule.reply = r.value("reply", "");
            rule.fail = r.value("fail", false);
            rules.push_back(std::move(rule));
        }
        return std::make_unique<MockProvider>(std::move(cfg), std::move(rules),
                                              j.value("delay_ms", fallback_delay_ms));
    }

    std::string id() const override { return "mock"; }

protected:
    Completion complete_impl(const std::string& prompt) override {
        if (delay_ms_ > 0.0)
            std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(delay_ms_));
        for (std::size_t i = 0; i < rules_.size(); ++i) {
            const MockRule& r = rules_[i];
            if (r.regex) {
                std::smatch m;
                if (std::regex_search(prompt, m, *compiled_[i])) {
                    if (r.fail) return {false, "", "mock rule failure: " + r.match, false};
                    return {true, m.format(r.reply), "", false};
                }
            } else if (prompt.find(r.match) != std::string::npos) {
                if (r.fail) return {false, "", "mock rule failure: " + r.match, false};
                return {true, r.reply, "", false};
            }
        }
        return {true, last_section_content(prompt), "", false};
    }

private:
    std::vector<MockRule> rules_;
    std::vector<std::optional<std::regex>> compiled_;
    double delay_ms_ = 0.0;
};

/// Chat-completions HTTP client. Sends {model, temperature, max_tokens,
/// messages:[{role:"user", content}]} and reads choices[0].message.content.
class HttpChatProvider : public Provider {
public:
    explicit HttpChatProvider(ProviderConfig cfg) : Provider(std::move(cfg)) {
        if (cfg_.endpoint.empty())
            throw ProviderError("http provider requires a non-empty endpoint");
        auto scheme_end = cfg_.endpoint.find("://");
        if (scheme_end == std::string::npos)
            throw ProviderError("http provider endpoint must start with http:// or https://");
        auto path_start = cfg_.endpoint.find('/', scheme_end + 3);
        if (path_start == std::string::npos) {
            base_ = cfg_.endpoint;
            path_ = "/v1/chat/completions";
        } else {
            base_ = cfg_.endpoint.substr(0, path_start);
            path_ = cfg_.endpoint.substr(path_start);
        }
    }

    std::string id() const override { return "http:" + cfg_.model; }

protected:
    Completion complete_impl(const std::string& prompt) override;

private:
    std::string base_;
    std::string path_;
};

/// Replay cache around another provider. Hits answer from a JSONL file keyed
/// by prompt hash; misses go to the wrapped provider and successful replies
/// are appended to the file. With no wrapped provider, misses fail.
class CachedProvider : public Provider {
public:
    CachedProvider(std::unique_ptr<Provider> inner, std::string path, ProviderConfig cfg)
        : Provider(std::move(cfg)), inner_(std::move(inner)), path_(std::move(path)) {
        std::ifstream in(path_);
        std::string line;
        while (in && std::getline(in, line)) {
            if (trim(line).empty()) continue;
            try {
                auto j = nlohmann::json::parse(line);
                cache_[j.at("key").get<std::string>()] = j.at("reply").get<std::string>();
            } catch (const nlohmann::json::exception&) {
                ++bad_lines_;  // tolerated: a torn final line must not kill replay
            }
        }
    }

    std::string id() const override {
        return "cached:" + (inner_ ? inner_->id() : std::string("none"));
    }
    std::size_t size() const {
        std::lock_guard lk(m_);
        return cache_.size();
    }
    std::size_t bad_lines() const { return bad_lines_; }

    static std::string cache_key(const std::string& prompt) {
        std::ostringstream os;
        os << std::hex << fnv1a64(prompt);
        return os.str();
    }

protected:
    Completion complete_impl(const std::string& prompt) override {
        const std::string key = cache_key(prompt);
        {
            std::lock_guard lk(m_);
            auto it = cache_.find(key);
            if (it != cache_.end()) return {true, it->second, "", false};
        }
        if (!inner_) return {false, "", "cache miss for key " + key + " and no live provider", false};
        Completion c = inner_->complete(prompt);
        if (c.ok) {
            std::lock_guard lk(m_);
            cache_[key] = c.text;
            std::ofstream out(path_, std::ios::app);
            if (out) {
                nlohmann::ordered_json j;
                j["key"] = key;
                j["prompt"] = prompt;
                j["reply"] = c.text;
                out << j.dump() << '\n';
            }
        }
        return c;
    }

private:
    std::unique_ptr<Provider> inner_;
    std::string path_;
    mutable std::mutex m_;
    std::map<std::string, std::string> cache_;
    std::size_t bad_lines_ = 0;
};

/// Shrinks text under the token budget by summarizing fixed-size chunks and
/// recursing (at most 3 passes); on provider failure or if still over budget,
/// falls back to head truncation. Text already within budget passes through.
inline std::string chunk_summarize(Provider& provider, const std::string& text, double budget) {
    if (estimate_tokens(text) <= budget) return text;
    constexpr int kMaxPasses = 3;
    constexpr std::size_t kPromptScaffoldWords = 24;  // headers + instruction sentence
    std::string cur = text;
    for (int pass = 0; pass < kMaxPasses; ++pass) {
        const auto words = split_ws(cur);
        auto chunk_words = static_cast<std::size_t>(budget / 1.3);
        chunk_words = chunk_words > kPromptScaffoldWords ? chunk_words - kPromptScaffoldWords : 1;
        std::vector<std::string> parts;
        for (std::size_t start = 0; start < words.size(); start += chunk_words) {
            const std::size_t end = std::min(words.size(), start + chunk_words);
            std::vector<std::string> chunk(words.begin() + static_cast<std::ptrdiff_t>(start),
                                           words.begin() + static_cast<std::ptrdiff_t>(end));
            const std::string prompt = "[Text]\n" + join(chunk, " ") +
                                       "\n\nPlease summarize the text above concisely, keeping "
                                       "the key details.";
            Completion c = provider.complete(prompt);
            if (!c.ok) return truncate_to_budget(text, budget);
            parts.push_back(trim(c.text));
        }
        cur = join(parts, " ");
        if (estimate_tokens(cur) <= budget) return cur;
    }
    return truncate_to_budget(cur, budget);
}

}  // namespace cogs

// The HTTP transport lives in a separate header so that translation units that
// never construct an HttpChatProvider do not pay for compiling httplib.
#if !defined(COGS_NO_HTTP)
#include "cogs/http_provider.hpp"
#endif
