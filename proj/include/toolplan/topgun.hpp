#pragma once

// Code-driven planning: generate a program answering the query with the
// retrieved pseudo functions, execute it linked against them, and reflect
// on failures until verified or the budget runs out. Retrieval happens once;
// the retrieved set is frozen for all reflexion iterations.

#include <stdexcept>
#include <string>
#include <vector>

#include "toolplan/codesynth.hpp"
#include "toolplan/corpus.hpp"
#include "toolplan/llm.hpp"
#include "toolplan/sandbox.hpp"

namespace toolplan {

struct PlanningError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline constexpr std::size_t kDefaultRetrievalK = 8;

// Pseudo-function definitions first, then the plan; definitions precede all
// uses.
inline std::string
assemble_execution_unit(std::string const & plan_source,
                        std::vector<std::string> const & pseudo_sources)
{
    std::string unit;
    for (auto const & source : pseudo_sources) {
        unit += source;
        unit += "\n\n";
    }
    unit += plan_source;
    unit += "\n";
    return unit;
}

// One reflection round: the refactored code block for a failing candidate.
inline std::string refine(Plan const & plan, FeedbackRecord const & feedback,
                          Backend & backend, TokenUsage * usage = nullptr)
{
    CompletionRequest request;
    request.prompt = render_reflection_prompt(plan.candidate_source, feedback);
    auto response = backend.complete(request);
    if (usage) *usage += response.usage;
    std::string code = extract_code_block(response.text);
    if (code.empty())
        throw PlanningError("reflection produced an empty code block");
    return code;
}

struct PlanResult {
    Plan plan;
    std::vector<RetrievalHit> retrieved;  // frozen retrieval set
};

inline PlanResult plan_query(std::string const & query,
                             ToolCorpus const & corpus, Backend & backend,
                             Sandbox const & sandbox,
                             std::size_t k = kDefaultRetrievalK,
                             int max_iters = kDefaultMaxIters,
                             SandboxLimits const & limits = {})
{
    if (corpus.size() == 0) throw PlanningError("corpus is empty");
    if (k < 1) throw PlanningError("k must be >= 1");
    if (max_iters < 1) throw PlanningError("max_iters must be >= 1");

    PlanResult result;
    Plan & plan = result.plan;
    plan.query = query;

    result.retrieved = corpus.retrieve(query, k);
    auto pseudo_sources = corpus.pseudo_sources(result.retrieved);

    CompletionRequest request;
    request.prompt = render_topgun_prompt(query, pseudo_sources);
    auto response = backend.complete(request);
    plan.token_usage += response.usage;
    plan.candidate_source = extract_code_block(response.text);

    for (int iteration = 1; iteration <= max_iters; ++iteration) {
        std::string unit =
            assemble_execution_unit(plan.candidate_source, pseudo_sources);
        FeedbackRecord feedback =
            feedback_from_result(sandbox.execute(unit, limits));
        plan.revisions.push_back({plan.candidate_source, feedback});
        if (feedback.verified) {
            plan.verified = true;
            return result;
        }
        if (iteration == max_iters) break;
        plan.candidate_source =
            refine(plan, feedback, backend, &plan.token_usage);
    }
    plan.verified = false;
    return result;
}

}  // namespace toolplan
