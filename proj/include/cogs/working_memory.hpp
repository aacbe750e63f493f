#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "cogs/cognition.hpp"
#include "cogs/longterm_memory.hpp"
#include "cogs/prompts.hpp"
#include "cogs/text.hpp"
#include "cogs/types.hpp"

namespace cogs {

constexpr int kDefaultRecentM = 5;

/// Everything user modeling sees for one query.
struct WorkingContext {
    std::string original_query;
    std::string rewritten_query;
    std::vector<Interaction> recent;      // last m short-term interactions
    std::vector<std::string> interests;   // retrieved explicit profile lines
    std::vector<std::string> background;  // retrieved implicit profile lines
    bool rewrite_degraded = false;
    bool retrieval_degraded = false;
};

struct AssembleOptions {
    bool rewrite = true;  // rewrite step on; otherwise the original query is kept
    bool recent = true;   // include recent short-term interactions
    int m = kDefaultRecentM;
    RetrievalOptions retrieval;
};

/// Builds the working context: optional query rewrite, the last m short-term
/// interactions, and profile lines retrieved from long-term memory (keyed by
/// the rewritten query, which is the original when rewriting is off).
inline WorkingContext assemble_context(const std::string& query, const Session& short_term,
                                       const LongTermStore& longterm, Provider* provider,
                                       const TemplateSet& templates,
                                       const AssembleOptions& opt = {}) {
    WorkingContext ctx;
    ctx.original_query = query;
    ctx.rewritten_query = query;
    if (opt.rewrite && provider != nullptr) {
        auto rw = rewrite_query(*provider, templates, query);
        ctx.rewritten_query = rw.text;
        ctx.rewrite_degraded = rw.degraded;
    }
    if (opt.recent && opt.m > 0) {
        const auto& all = short_term.interactions;
        const std::size_t m = std::min(all.size(), static_cast<std::size_t>(opt.m));
        ctx.recent.assign(all.end() - static_cast<std::ptrdiff_t>(m), all.end());
    }
    if (opt.retrieval.want_explicit || opt.retrieval.want_implicit) {
        auto profile =
            retrieve_profile(longterm, ctx.rewritten_query, provider, templates, opt.retrieval);
        ctx.interests = std::move(profile.interests);
        ctx.background = std::move(profile.background);
        ctx.retrieval_degraded = profile.degraded;
    }
    return ctx;
}

inline std::string render_recent(const std::vector<Interaction>& recent,
                                 const TitleLookup& titles) {
    std::vector<std::string> lines;
    lines.reserve(recent.size());
    for (const auto& it : recent) lines.push_back(render_interaction(it, titles));
    return join(lines, "\n");
}

struct UserModel {
    std::string text;       // U_{q,H}: the personalized intent description
    bool degraded = false;  // provider failed; rewritten query used as-is
};

/// Asks the provider for the personalized intent U_{q,H}. Profile sections are
/// chunk-summarized first whenever the full prompt would exceed the input
/// budget, so the rendered prompt always fits. Failure or an empty reply
/// degrades to the rewritten query.
inline UserModel model_user(const WorkingContext& ctx, Provider& provider,
                            const TemplateSet& templates, const TitleLookup& titles) {
    std::string background = join(ctx.background, "\n");
    std::string interests = join(ctx.interests, "\n");
    std::string recent = render_recent(ctx.recent, titles);

    const double budget = static_cast<double>(provider.config().input_budget_tokens);
    const double scaffold = estimate_tokens(templates.render(
        PromptFamily::model_user,
        {{"background", ""}, {"interests", ""}, {"recent", ""}, {"rewritten_query", ""}}));
    const double avail =
        budget - scaffold - 8.0 - estimate_tokens(ctx.rewritten_query);
    const double total =
        estimate_tokens(background) + estimate_tokens(interests) + estimate_tokens(recent);
    if (total > avail && total > 0.0) {
        auto shrink = [&](std::string& section) {
            const double share = std::max(8.0, avail * estimate_tokens(section) / total);
            section = chunk_summarize(provider, section, share);
        };
        shrink(background);
        shrink(interests);
        shrink(recent);
    }

    const std::string prompt = templates.render(PromptFamily::model_user,
                                                {{"background", background},
                                                 {"interests", interests},
                                                 {"recent", recent},
                                                 {"rewritten_query", ctx.rewritten_query}});
    const Completion c = provider.complete(prompt);
    if (!c.ok) return {ctx.rewritten_query, true};
    const std::string text = trim(c.text);
    return {text.empty() ? ctx.rewritten_query : text, false};
}

}  // namespace cogs
