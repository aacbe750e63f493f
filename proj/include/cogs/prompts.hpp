#pragma once

#include <array>
#include <filesystem>
#include <fstream>
#include <map>
#include <regex>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "cogs/cognition.hpp"
#include "cogs/text.hpp"
#include "cogs/types.hpp"

namespace cogs {

enum class PromptFamily {
    rewrite,
    retrieve,
    model_user,
    summarize_explicit,
    summarize_implicit,
    rank,
};

inline constexpr std::array<PromptFamily, 6> kAllFamilies = {
    PromptFamily::rewrite,          PromptFamily::retrieve,
    PromptFamily::model_user,       PromptFamily::summarize_explicit,
    PromptFamily::summarize_implicit, PromptFamily::rank,
};

inline const char* family_name(PromptFamily f) {
    switch (f) {
        case PromptFamily::rewrite: return "rewrite";
        case PromptFamily::retrieve: return "retrieve";
        case PromptFamily::model_user: return "model_user";
        case PromptFamily::summarize_explicit: return "summarize_explicit";
        case PromptFamily::summarize_implicit: return "summarize_implicit";
        case PromptFamily::rank: return "rank";
    }
    return "unknown";
}

struct PromptTemplate {
    PromptFamily family = PromptFamily::rewrite;
    std::string text;                          // body with {placeholder} slots
    std::vector<std::string> demonstrations;   // fill {demonstrations}, blank-line separated
};

/// Placeholders each family's template must contain.
inline const std::vector<std::string>& required_placeholders(PromptFamily f) {
    static const std::map<PromptFamily, std::vector<std::string>> req = {
        {PromptFamily::rewrite, {"query"}},
        {PromptFamily::retrieve, {"memory", "query"}},
        {PromptFamily::model_user, {"background", "interests", "recent", "rewritten_query"}},
        {PromptFamily::summarize_explicit, {"log"}},
        {PromptFamily::summarize_implicit, {"log"}},
        {PromptFamily::rank, {"preferences", "query", "documents"}},
    };
    return req.at(f);
}

/// Single-pass placeholder substitution: {name} is replaced when `values`
/// holds name; substituted text is never re-scanned; unknown names stay put.
inline std::string render_template(const std::string& text,
                                   const std::map<std::string, std::string>& values) {
    std::string out;
    out.reserve(text.size());
    std::size_t i = 0;
    while (i < text.size()) {
        if (text[i] == '{') {
            const std::size_t close = text.find('}', i + 1);
            if (close != std::string::npos) {
                const std::string name = text.substr(i + 1, close - i - 1);
                auto it = values.find(name);
                if (it != values.end()) {
                    out += it->second;
                    i = close + 1;
                    continue;
                }
            }
        }
        out.push_back(text[i]);
        ++i;
    }
    return out;
}

inline void validate_template(const PromptTemplate& tpl) {
    std::vector<std::string> missing;
    for (const auto& name : required_placeholders(tpl.family))
        if (tpl.text.find("{" + name + "}") == std::string::npos) missing.push_back(name);
    if (!missing.empty())
        throw UsageError(std::string("prompt template '") + family_name(tpl.family) +
                         "' is missing placeholders: " + join(missing, ", "));
}

namespace default_prompts {

inline constexpr const char* kRewrite =
    "[Examples]\n"
    "{demonstrations}\n"
    "\n"
    "[Query]\n"
    "{query}\n"
    "\n"
    "Please act as a query re-writer to enrich the query and make the query intent clearer. "
    "Reply with the re-written query only.\n";

inline constexpr const char* kRetrieve =
    "[Memory]\n"
    "{memory}\n"
    "\n"
    "[Query]\n"
    "{query}\n"
    "\n"
    "Please act as a retriever to extract personal interests/backgrounds related to the query "
    "from the memory. Reply with the matching memory lines only, one per line, or None if "
    "nothing in the memory applies.\n";

inline constexpr const char* kModelUser =
    "[User Background]\n"
    "{background}\n"
    "\n"
    "[User Interests]\n"
    "{interests}\n"
    "\n"
    "[Recent Queries]\n"
    "{recent}\n"
    "\n"
    "[Re-written Query]\n"
    "{rewritten_query}\n"
    "\n"
    "Please infer the user's personalized query intent based on the user profile. Reply with "
    "one short description of what the user is looking for.\n";

inline constexpr const char* kSummarizeExplicit =
    "[Examples]\n"
    "{demonstrations}\n"
    "\n"
    "[Query Log]\n"
    "{log}\n"
    "\n"
    "Please summarize the user interests into multiple topics based on the user's historical "
    "query log. Reply with one line per topic in the form topic: interest, interest.\n";

inline constexpr const char* kSummarizeImplicit =
    "[Examples]\n"
    "{demonstrations}\n"
    "\n"
    "[Query Log]\n"
    "{log}\n"
    "\n"
    "Please infer the user's implicit attributes, such as gender, age and social image, based "
    "on the user's historical query log. Reply with one line per attribute in the form "
    "attribute: value.\n";

inline constexpr const char* kRank =
    "[User Preferences]\n"
    "{preferences}\n"
    "\n"
    "[Query]\n"
    "{query}\n"
    "\n"
    "[Documents]\n"
    "{documents}\n"
    "\n"
    "Please rank these documents by measuring the relevance based on the query and user "
    "preferences. Reply with the document numbers from most to least relevant, separated "
    "by \" > \".\n";

}  // namespace default_prompts

class TemplateSet {
public:
    static TemplateSet defaults() {
        TemplateSet set;
        set.put({PromptFamily::rewrite, default_prompts::kRewrite,
                 {"Query: jaguar price\nRe-written: jaguar car price dealer listings"}});
        set.put({PromptFamily::retrieve, default_prompts::kRetrieve, {}});
        set.put({PromptFamily::model_user, default_prompts::kModelUser, {}});
        set.put({PromptFamily::summarize_explicit, default_prompts::kSummarizeExplicit,
                 {"Query log:\nrunning shoes sale: Road Runner Sports, store locator\n"
                  "marathon training plan: 16 week marathon schedule\n"
                  "Summary:\nRunning: running shoes, marathon training"}});
        set.put({PromptFamily::summarize_implicit, default_prompts::kSummarizeImplicit,
                 {"Query log:\nrunning shoes sale: Road Runner Sports, store locator\n"
                  "marathon training plan: 16 week marathon schedule\n"
                  "Summary:\nLifestyle: runner"}});
        set.put({PromptFamily::rank, default_prompts::kRank, {}});
        return set;
    }

    /// Defaults overridden by any <family>.txt / <family>.demos.txt found in
    /// `dir`. Demos files hold blank-line-separated demonstration blocks.
    static TemplateSet load_dir(const std::string& dir) {
        TemplateSet set = defaults();
        for (PromptFamily f : kAllFamilies) {
            const auto base = std::filesystem::path(dir) / family_name(f);
            if (auto text = read_file(base.string() + ".txt")) {
                PromptTemplate tpl = set.get(f);
                tpl.text = *text;
                set.put(std::move(tpl));
            }
            if (auto demos = read_file(base.string() + ".demos.txt")) {
                PromptTemplate tpl = set.get(f);
                tpl.demonstrations = split_blocks(*demos);
                set.put(std::move(tpl));
            }
        }
        return set;
    }

    const PromptTemplate& get(PromptFamily f) const { return templates_.at(f); }

    void put(PromptTemplate tpl) {
        validate_template(tpl);
        templates_[tpl.family] = std::move(tpl);
    }

    std::string render(PromptFamily f, std::map<std::string, std::string> values) const {
        const PromptTemplate& tpl = get(f);
        values.emplace("demonstrations", join(tpl.demonstrations, "\n\n"));
        return render_template(tpl.text, values);
    }

private:
    static std::optional<std::string> read_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) return std::nullopt;
        std::ostringstream os;
        os << in.rdbuf();
        return os.str();
    }

    static std::vector<std::string> split_blocks(const std::string& text) {
        std::vector<std::string> blocks;
        std::string cur;
        for (const auto& line : split_lines(text)) {
            if (trim(line).empty()) {
                if (!cur.empty()) blocks.push_back(trim(cur));
                cur.clear();
            } else {
                if (!cur.empty()) cur.push_back('\n');
                cur += line;
            }
        }
        if (!trim(cur).empty()) blocks.push_back(trim(cur));
        return blocks;
    }

    std::map<PromptFamily, PromptTemplate> templates_;
};

// ---------------------------------------------------------------------------
// Reply parsing. All parsers are lenient and never throw: a malformed reply
// degrades to an empty / identity result.
// ---------------------------------------------------------------------------

namespace detail {

/// Drops one leading "- ", "* " or "3. " / "3) " style bullet.
inline std::string strip_bullet(const std::string& line) {
    std::string s = trim(line);
    if (s.size() >= 2 && (s[0] == '-' || s[0] == '*') && s[1] == ' ') return trim(s.substr(2));
    std::size_t i = 0;
    while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
    if (i > 0 && i < s.size() && (s[i] == '.' || s[i] == ')') && i + 1 < s.size() &&
        s[i + 1] == ' ')
        return trim(s.substr(i + 2));
    return s;
}

inline std::vector<int> scan_ints(std::string_view s) {
    std::vector<int> out;
    std::size_t i = 0;
    while (i < s.size()) {
        if (std::isdigit(static_cast<unsigned char>(s[i]))) {
            std::size_t j = i;
            while (j < s.size() && std::isdigit(static_cast<unsigned char>(s[j]))) ++j;
            if (j - i <= 8) out.push_back(std::stoi(std::string(s.substr(i, j - i))));
            i = j;
        } else {
            ++i;
        }
    }
    return out;
}

}  // namespace detail

/// "key: v1, v2" lines -> explicit entries. Bulleted lines are unwrapped;
/// lines without a colon or with an empty side are skipped.
inline std::vector<ExplicitEntry> parse_topics(const std::string& reply) {
    std::vector<ExplicitEntry> entries;
    for (const auto& raw : split_lines(reply)) {
        const std::string line = detail::strip_bullet(raw);
        const std::size_t colon = line.find(':');
        if (colon == std::string::npos) continue;
        ExplicitEntry e;
        e.topic = trim(line.substr(0, colon));
        for (const auto& part : [&] {
                 std::vector<std::string> parts;
                 std::size_t start = colon + 1;
                 for (std::size_t i = start; i <= line.size(); ++i) {
                     if (i == line.size() || line[i] == ',') {
                         parts.push_back(line.substr(start, i - start));
                         start = i + 1;
                     }
                 }
                 return parts;
             }()) {
            const std::string v = trim(part);
            if (!v.empty()) e.interests.push_back(v);
        }
        if (!e.topic.empty() && !e.interests.empty()) entries.push_back(std::move(e));
    }
    return entries;
}

/// "attribute: value" lines -> implicit entries, same leniency as topics.
inline std::vector<ImplicitEntry> parse_attributes(const std::string& reply) {
    std::vector<ImplicitEntry> entries;
    for (const auto& raw : split_lines(reply)) {
        const std::string line = detail::strip_bullet(raw);
        const std::size_t colon = line.find(':');
        if (colon == std::string::npos) continue;
        ImplicitEntry e;
        e.attribute = trim(line.substr(0, colon));
        e.value = trim(line.substr(colon + 1));
        if (!e.attribute.empty() && !e.value.empty()) entries.push_back(std::move(e));
    }
    return entries;
}

struct RankParse {
    std::vector<int> order;  // 1-based document labels, always a permutation of 1..n
    bool parsed = false;     // false when the reply yielded no usable label
};

/// Accepts "3 > 1 > 2", numbered-list replies, or any text containing the
/// labels in order. Out-of-range labels are dropped, duplicates keep their
/// first position, and missing labels are appended in ascending order, so the
/// result is always a full permutation. A reply with no usable label returns
/// the identity permutation with `parsed == false`.
inline RankParse parse_ranking(const std::string& reply, int n) {
    std::vector<int> labels;
    if (reply.find('>') != std::string::npos) {
        std::size_t start = 0;
        for (std::size_t i = 0; i <= reply.size(); ++i) {
            if (i == reply.size() || reply[i] == '>') {
                const auto ints = detail::scan_ints(
                    std::string_view(reply).substr(start, i - start));
                if (!ints.empty()) labels.push_back(ints.front());
                start = i + 1;
            }
        }
    } else {
        static const std::regex item(R"(^\s*(\d+)[.)]\s*(.*)$)");
        std::vector<std::pair<int, std::string>> items;
        bool numbered = true;
        for (const auto& line : split_lines(reply)) {
            if (trim(line).empty()) continue;
            std::smatch m;
            if (!std::regex_match(line, m, item)) {
                numbered = false;
                break;
            }
            items.emplace_back(std::stoi(m[1].str()), m[2].str());
        }
        if (numbered && !items.empty()) {
            for (const auto& [lead, rest] : items) {
                const auto ints = detail::scan_ints(rest);
                labels.push_back(ints.empty() ? lead : ints.front());
            }
        } else {
            labels = detail::scan_ints(reply);
        }
    }

    RankParse out;
    std::vector<bool> seen(static_cast<std::size_t>(n) + 1, false);
    for (int v : labels) {
        if (v >= 1 && v <= n && !seen[static_cast<std::size_t>(v)]) {
            seen[static_cast<std::size_t>(v)] = true;
            out.order.push_back(v);
        }
    }
    out.parsed = !out.order.empty();
    for (int v = 1; v <= n; ++v)
        if (!seen[static_cast<std::size_t>(v)]) out.order.push_back(v);
    return out;
}

/// Cleans a rewrite reply: first non-empty line, minus wrapping quotes and
/// "re-written query:"-style prefixes. An empty result falls back to
/// `fallback` (the original query).
inline std::string strip_rewrite_reply(const std::string& reply, const std::string& fallback) {
    std::string s;
    for (const auto& line : split_lines(reply)) {
        s = trim(line);
        if (!s.empty()) break;
    }
    auto lower = [](std::string v) { return to_lower(v); };
    static const std::vector<std::string> prefixes = {"re-written query:", "rewritten query:",
                                                      "re-written:", "rewritten:", "query:"};
    for (int round = 0; round < 4; ++round) {
        std::string before = s;
        if (s.size() >= 2 && ((s.front() == '"' && s.back() == '"') ||
                              (s.front() == '\'' && s.back() == '\'')))
            s = trim(s.substr(1, s.size() - 2));
        const std::string ls = lower(s);
        for (const auto& p : prefixes) {
            if (ls.rfind(p, 0) == 0) {
                s = trim(s.substr(p.size()));
                break;
            }
        }
        if (s == before) break;
    }
    return s.empty() ? fallback : s;
}

struct RewriteResult {
    std::string text;
    bool degraded = false;  // provider failed; original query kept
};

inline RewriteResult rewrite_query(Provider& provider, const TemplateSet& templates,
                                   const std::string& query) {
    const std::string prompt = templates.render(PromptFamily::rewrite, {{"query", query}});
    Completion c = provider.complete(prompt);
    if (!c.ok) return {query, true};
    return {strip_rewrite_reply(c.text, query), false};
}

}  // namespace cogs
