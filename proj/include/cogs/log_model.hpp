#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "cogs/text.hpp"
#include "cogs/types.hpp"

namespace cogs {

constexpr std::int64_t kSessionGapSeconds = 1800;
constexpr double kDefaultSplitFraction = 0.85;

struct ParsedUser {
    std::string user_id;
    std::vector<Session> sessions;  // time order
};

struct ParsedLog {
    std::vector<ParsedUser> users;              // order of first appearance
    std::map<std::string, std::string> titles;  // doc_id -> title
    std::size_t total_lines = 0;
    std::vector<std::size_t> malformed_lines;  // 1-based line numbers
};

namespace detail {

inline std::vector<std::string> split_tsv(const std::string& line) {
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= line.size(); ++i) {
        if (i == line.size() || line[i] == '\t') {
            fields.emplace_back(line, start, i - start);
            start = i + 1;
        }
    }
    return fields;
}

inline bool parse_timestamp(const std::string& s, std::int64_t& out) {
    if (s.empty()) return false;
    std::size_t pos = 0;
    try {
        out = std::stoll(s, &pos);
    } catch (const std::exception&) {
        return false;
    }
    return pos == s.size() && out >= 0;
}

}  // namespace detail

/// Groups a user's time-ordered interactions into sessions. Interactions that
/// carry a session id stay together while the id repeats contiguously; when
/// ids are absent, a timestamp gap over `gap_seconds` opens a new session.
inline std::vector<Session> segment_sessions(const std::vector<Interaction>& interactions,
                                             std::int64_t gap_seconds = kSessionGapSeconds) {
    std::vector<Session> sessions;
    for (const auto& it : interactions) {
        bool fresh = sessions.empty();
        if (!fresh) {
            const Session& cur = sessions.back();
            const Interaction& prev = cur.interactions.back();
            if (!it.session_id.empty() || !prev.session_id.empty()) {
                fresh = it.session_id != prev.session_id;
            } else {
                fresh = it.timestamp - prev.timestamp > gap_seconds;
            }
        }
        if (fresh) sessions.push_back(Session{it.session_id, {}});
        sessions.back().interactions.push_back(it);
    }
    return sessions;
}

/// Reads the 7-column TSV query log:
///   user_id  session_id  query  timestamp  doc_id  doc_title  click_tag
/// Rows sharing (user, session, query, timestamp) merge into one Interaction.
/// Malformed rows are skipped and counted; more than 10% malformed is fatal.
inline ParsedLog parse_log(std::istream& in) {
    if (!in) throw DataError("query log stream is not readable");

    struct RawInteraction {
        Interaction interaction;
        std::map<std::string, int> seen;  // doc_id -> 1 clicked / 0 skipped
    };
    struct RawUser {
        std::string user_id;
        std::vector<RawInteraction> interactions;  // order of first appearance
        std::map<std::string, std::size_t> index;  // group key -> position
    };

    std::vector<RawUser> users;
    std::map<std::string, std::size_t> user_index;

    ParsedLog out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        ++out.total_lines;

        auto fields = detail::split_tsv(line);
        std::int64_t ts = 0;
        const bool shape_ok = fields.size() == 7 && !fields[0].empty() && !fields[2].empty() &&
                              !fields[4].empty() && (fields[6] == "0" || fields[6] == "1") &&
                              detail::parse_timestamp(fields[3], ts);
        if (!shape_ok) {
            out.malformed_lines.push_back(line_no);
            continue;
        }
        const std::string& user_id = fields[0];
        const std::string& session_id = fields[1];
        const std::string& query = fields[2];
        const std::string& doc_id = fields[4];
        const std::string& title = fields[5];
        const int clicked = fields[6] == "1" ? 1 : 0;

        auto [uit, user_fresh] = user_index.emplace(user_id, users.size());
        if (user_fresh) users.push_back(RawUser{user_id, {}, {}});
        RawUser& user = users[uit->second];

        const std::string key = session_id + '\x1f' + query + '\x1f' + std::to_string(ts);
        auto [git, group_fresh] = user.index.emplace(key, user.interactions.size());
        if (group_fresh) {
            user.interactions.push_back(RawInteraction{
                Interaction{query, ts, session_id, {}, {}}, {}});
        }
        RawInteraction& raw = user.interactions[git->second];

        auto [dit, doc_fresh] = raw.seen.emplace(doc_id, clicked);
        if (doc_fresh) {
            (clicked ? raw.interaction.clicked : raw.interaction.skipped).push_back(doc_id);
        } else if (clicked && dit->second == 0) {
            // A later clicked row wins over an earlier skipped row for the same doc.
            dit->second = 1;
            auto& sk = raw.interaction.skipped;
            sk.erase(std::find(sk.begin(), sk.end(), doc_id));
            raw.interaction.clicked.push_back(doc_id);
        }
        if (!title.empty() && !out.titles.count(doc_id)) out.titles[doc_id] = title;
    }

    if (out.total_lines > 0 &&
        10 * out.malformed_lines.size() > out.total_lines) {
        std::ostringstream msg;
        msg << "query log has " << out.malformed_lines.size() << " malformed lines out of "
            << out.total_lines << " (over 10%); first offenders:";
        for (std::size_t i = 0; i < out.malformed_lines.size() && i < 20; ++i)
            msg << ' ' << out.malformed_lines[i];
        throw DataError(msg.str());
    }

    for (auto& raw_user : users) {
        std::vector<Interaction> interactions;
        interactions.reserve(raw_user.interactions.size());
        for (auto& r : raw_user.interactions) interactions.push_back(std::move(r.interaction));
        std::stable_sort(interactions.begin(), interactions.end(),
                         [](const Interaction& a, const Interaction& b) {
                             return a.timestamp < b.timestamp;
                         });
        out.users.push_back(ParsedUser{raw_user.user_id, segment_sessions(interactions)});
    }
    return out;
}

/// Emits the same 7-column TSV the parser reads; parse(serialize(x)) == x.
inline void serialize_log(const ParsedLog& log, std::ostream& out) {
    auto title_of = [&](const std::string& doc_id) {
        auto it = log.titles.find(doc_id);
        return it == log.titles.end() ? std::string() : it->second;
    };
    for (const auto& user : log.users) {
        for (const auto& session : user.sessions) {
            for (const auto& it : session.interactions) {
                auto emit = [&](const std::string& doc_id, int tag) {
                    out << user.user_id << '\t' << it.session_id << '\t' << it.query << '\t'
                        << it.timestamp << '\t' << doc_id << '\t' << title_of(doc_id) << '\t'
                        << tag << '\n';
                };
                for (const auto& d : it.clicked) emit(d, 1);
                for (const auto& d : it.skipped) emit(d, 0);
            }
        }
    }
}

/// Number of leading interactions kept as history under `fraction`.
inline std::size_t split_point(std::size_t n, double fraction) {
    return static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 1e-9));
}

struct SplitResult {
    std::vector<UserHistory> histories;
    std::vector<TestQuery> tests;  // user order, then time order
    std::vector<std::string> excluded_users;
};

/// Time-ordered per-user split: the first floor(fraction*n) interactions form
/// the history (its last session becomes the short-term session), the rest
/// become test queries. Users with fewer than 2 interactions are excluded.
inline SplitResult split_history(const ParsedLog& log, double fraction = kDefaultSplitFraction) {
    if (fraction <= 0.0 || fraction >= 1.0)
        throw UsageError("split fraction must lie strictly between 0 and 1");
    SplitResult out;
    for (const auto& user : log.users) {
        std::vector<Interaction> all;
        for (const auto& s : user.sessions)
            all.insert(all.end(), s.interactions.begin(), s.interactions.end());
        if (all.size() < 2) {
            out.excluded_users.push_back(user.user_id);
            continue;
        }
        const std::size_t h = std::max<std::size_t>(1, split_point(all.size(), fraction));
        std::vector<Interaction> head(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(h));
        auto sessions = segment_sessions(head);

        UserHistory hist;
        hist.user_id = user.user_id;
        hist.short_term = sessions.back();
        sessions.pop_back();
        hist.long_term = std::move(sessions);
        out.histories.push_back(std::move(hist));

        for (std::size_t i = h; i < all.size(); ++i) {
            const Interaction& it = all[i];
            TestQuery tq;
            tq.user_id = user.user_id;
            tq.query = it.query;
            tq.timestamp = it.timestamp;
            tq.session_id = it.session_id;
            tq.clicked = it.clicked;
            tq.skipped = it.skipped;
            out.tests.push_back(std::move(tq));
        }
    }
    return out;
}

}  // namespace cogs
