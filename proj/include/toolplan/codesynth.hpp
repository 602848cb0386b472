#pragma once

// Pseudo-function synthesis: generate a signature per tool description,
// verify it by executing a model-generated function call in the sandbox,
// and reflect on failures until verified or the budget runs out.

#include <stdexcept>
#include <string>
#include <vector>

#include "toolplan/llm.hpp"
#include "toolplan/model.hpp"
#include "toolplan/pycode.hpp"
#include "toolplan/sandbox.hpp"

namespace toolplan {

struct SynthesisError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SynthesisResult {
    PseudoFunction pseudo;
    std::vector<Revision> revisions;  // one (source, feedback) per attempt
    std::string call_snippet;         // last generated verification call
    TokenUsage token_usage;
};

inline constexpr int kDefaultMaxIters = 5;

namespace detail {

// Structural gate run before any execution. Returns an empty string when the
// candidate is acceptable, otherwise a diagnostic usable as feedback.
inline std::string check_definition_structure(std::string const & source,
                                              std::string const & tool_name)
{
    std::vector<pycode::DefHeader> headers;
    try {
        headers = pycode::parse_def_headers(source, /*top_level_only=*/true);
    } catch (pycode::ParseError const & e) {
        return std::string("definition does not parse: ") + e.what();
    }
    if (headers.empty())
        return "no top-level function definition found";
    if (headers.size() > 1)
        return "multiple top-level function definitions found; only the def "
               "itself is allowed";
    if (headers.front().name != tool_name)
        return "function definition is named '" + headers.front().name
               + "' but the tool is named '" + tool_name + "'";
    if (pycode::extract_return_repr(source).empty())
        return "function definition must return an example object";
    return {};
}

}  // namespace detail

// Asks the backend for an executable call to the pseudo function and checks
// that the snippet really invokes it without redefining or importing it.
inline std::string generate_function_call(PseudoFunction const & pseudo,
                                          Backend & backend,
                                          TokenUsage * usage = nullptr)
{
    {
        auto headers = pycode::parse_def_headers(pseudo.source);
        if (headers.size() != 1)
            throw SynthesisError("pseudo source must contain exactly one "
                                 "function definition");
    }
    CompletionRequest request;
    request.prompt = render_function_call_prompt(pseudo);
    auto response = backend.complete(request);
    if (usage) *usage += response.usage;
    std::string snippet = extract_code_block(response.text);

    bool calls_target = false;
    try {
        for (auto const & name : pycode::imported_names(snippet)) {
            if (name == pseudo.tool_name)
                throw SynthesisError("function call snippet imports the target "
                                     "function");
        }
        for (auto const & header : pycode::parse_def_headers(snippet)) {
            if (header.name == pseudo.tool_name)
                throw SynthesisError("function call snippet redefines the "
                                     "target function");
        }
        auto statements = pycode::parse_statements(snippet);
        std::function<void(pycode::Expr const &)> walk =
            [&](pycode::Expr const & e) {
                if (e.kind == pycode::ExprKind::Call && !e.children.empty()
                    && e.children.front().kind == pycode::ExprKind::Name
                    && e.children.front().text == pseudo.tool_name)
                    calls_target = true;
                for (auto const & child : e.children) walk(child);
            };
        for (auto const & st : statements)
            for (auto const & e : st.exprs) walk(e);
    } catch (pycode::ParseError const & e) {
        throw SynthesisError(std::string("function call snippet does not "
                                         "parse: ") + e.what());
    }
    if (!calls_target)
        throw SynthesisError("no call to " + pseudo.tool_name
                             + " found in the completion");
    return snippet;
}

// Runs definition followed by call snippet in the sandbox; verified means a
// clean exit within limits.
inline FeedbackRecord verify_signature(std::string const & pseudo_source,
                                       std::string const & call_snippet,
                                       Sandbox const & sandbox,
                                       SandboxLimits const & limits = {})
{
    if (pseudo_source.empty() || call_snippet.empty())
        throw std::invalid_argument("both definition and call must be "
                                    "non-empty");
    std::string unit = pseudo_source + "\n\n" + call_snippet + "\n";
    return feedback_from_result(sandbox.execute(unit, limits));
}

inline SynthesisResult synthesize_signature(ToolDescription const & tool,
                                            Backend & backend,
                                            Sandbox const & sandbox,
                                            int max_iters = kDefaultMaxIters,
                                            SandboxLimits const & limits = {})
{
    if (max_iters < 1) throw std::invalid_argument("max_iters must be >= 1");
    auto violations = validate_tool_description(tool);
    if (!violations.empty())
        throw std::invalid_argument("invalid tool description: "
                                    + violations.front());

    SynthesisResult result;
    result.pseudo.tool_name = tool.name;

    std::string source;
    FeedbackRecord feedback;
    for (int iteration = 1; iteration <= max_iters; ++iteration) {
        CompletionRequest request;
        request.prompt = iteration == 1
                             ? render_codesynth_prompt(tool)
                             : render_reflection_prompt(source, feedback);
        auto response = backend.complete(request);
        result.token_usage += response.usage;
        std::string candidate = extract_code_block(response.text);

        std::string structural =
            detail::check_definition_structure(candidate, tool.name);
        if (!structural.empty()) {
            source = candidate;
            feedback = FeedbackRecord{false, structural, "", 0};
            result.revisions.push_back({source, feedback});
            continue;
        }

        bool definition_changed = candidate != source;
        source = candidate;
        result.pseudo.source = source;
        result.pseudo.docstring = pycode::extract_docstring(source);
        result.pseudo.dummy_return_repr = pycode::extract_return_repr(source);

        if (definition_changed || result.call_snippet.empty()) {
            try {
                result.call_snippet = generate_function_call(
                    result.pseudo, backend, &result.token_usage);
            } catch (SynthesisError const & e) {
                feedback = FeedbackRecord{false, e.what(), "", 0};
                result.revisions.push_back({source, feedback});
                continue;
            }
        }

        feedback = verify_signature(source, result.call_snippet, sandbox,
                                    limits);
        result.revisions.push_back({source, feedback});
        if (feedback.verified) {
            result.pseudo.verified = true;
            result.pseudo.iterations_used = iteration;
            return result;
        }
    }

    // budget exhausted: hand back the last candidate with its history
    result.pseudo.source = source;
    result.pseudo.verified = false;
    result.pseudo.iterations_used = max_iters;
    result.pseudo.docstring = pycode::extract_docstring(source);
    result.pseudo.dummy_return_repr = pycode::extract_return_repr(source);
    return result;
}

}  // namespace toolplan
