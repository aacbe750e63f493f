#pragma once

#include <cctype>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace cogs {

inline bool is_word_char(unsigned char c) {
    // Bytes >= 0x80 (UTF-8 continuation/lead) count as word characters.
    return std::isalnum(c) != 0 || c >= 0x80;
}

inline char lower_ascii(unsigned char c) {
    return static_cast<char>(c >= 0x80 ? c : std::tolower(c));
}

inline std::string to_lower(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    for (unsigned char c : s) out.push_back(lower_ascii(c));
    return out;
}

inline std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

/// Canonical query form: lowercase, with every run of non-word bytes
/// (whitespace or punctuation) collapsed into a single space. Equivalent to
/// joining tokenize() output with spaces.
inline std::string normalize_query(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    bool pending_space = false;
    for (unsigned char c : s) {
        if (is_word_char(c)) {
            if (pending_space && !out.empty()) out.push_back(' ');
            pending_space = false;
            out.push_back(lower_ascii(c));
        } else {
            pending_space = true;
        }
    }
    return out;
}

/// Lowercase terms split on any non-alphanumeric byte. No stemming.
inline std::vector<std::string> tokenize(std::string_view s) {
    std::vector<std::string> terms;
    std::string cur;
    for (unsigned char c : s) {
        if (is_word_char(c)) {
            cur.push_back(lower_ascii(c));
        } else if (!cur.empty()) {
            terms.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) terms.push_back(std::move(cur));
    return terms;
}

inline std::vector<std::string> split_ws(std::string_view s) {
    std::vector<std::string> words;
    std::string cur;
    for (unsigned char c : s) {
        if (std::isspace(c)) {
            if (!cur.empty()) {
                words.push_back(std::move(cur));
                cur.clear();
            }
        } else {
            cur.push_back(static_cast<char>(c));
        }
    }
    if (!cur.empty()) words.push_back(std::move(cur));
    return words;
}

inline std::size_t whitespace_token_count(std::string_view s) {
    std::size_t n = 0;
    bool in_token = false;
    for (unsigned char c : s) {
        if (std::isspace(c)) {
            in_token = false;
        } else if (!in_token) {
            in_token = true;
            ++n;
        }
    }
    return n;
}

/// Upper-bound token estimate: whitespace token count x 1.3.
inline double estimate_tokens(std::string_view s) {
    return 1.3 * static_cast<double>(whitespace_token_count(s));
}

/// Keeps the largest whitespace-token prefix whose estimate fits the budget.
inline std::string truncate_to_budget(std::string_view s, double budget_tokens) {
    if (estimate_tokens(s) <= budget_tokens) return std::string(s);
    const auto keep = static_cast<std::size_t>(budget_tokens / 1.3);
    std::string out;
    std::size_t n = 0;
    bool in_token = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
        const bool ws = std::isspace(static_cast<unsigned char>(s[i])) != 0;
        if (ws) {
            in_token = false;
        } else if (!in_token) {
            if (n == keep) break;
            in_token = true;
            ++n;
        }
        if (n > 0) out.push_back(s[i]);
    }
    return trim(out);
}

inline std::string join(const std::vector<std::string>& parts, std::string_view sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i > 0) out.append(sep);
        out.append(parts[i]);
    }
    return out;
}

inline std::vector<std::string> split_lines(std::string_view s) {
    std::vector<std::string> lines;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= s.size(); ++i) {
        if (i == s.size() || s[i] == '\n') {
            std::string_view line = s.substr(start, i - start);
            if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
            lines.emplace_back(line);
            start = i + 1;
        }
    }
    if (!lines.empty() && lines.back().empty()) lines.pop_back();
    return lines;
}

/// Stable 64-bit content hash (FNV-1a); used for replay-cache keys.
inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace cogs
