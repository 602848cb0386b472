#pragma once

// Backend-agnostic completion interface, prompt rendering, and code-block
// extraction. The scripted backend replays canned responses and is the
// default for tests and offline runs; the HTTP backend speaks the common
// chat-completion JSON shape.

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "toolplan/model.hpp"

namespace toolplan {

struct CompletionRequest {
    std::string prompt;
    double temperature = 0.0;
    int max_tokens = 0;  // 0 = backend default
    std::vector<std::string> stop_markers;
};

struct CompletionResponse {
    std::string text;
    TokenUsage usage;  // usage.calls == 1
};

struct BackendError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

class Backend {
public:
    virtual ~Backend() = default;
    virtual CompletionResponse complete(CompletionRequest const & request) = 0;
};

// ---------------------------------------------------------------------------
// Mock token accounting: ceil(byte_length / 4). Real backends report
// provider usage instead.

inline long approx_tokens(std::string_view text)
{
    return static_cast<long>((text.size() + 3) / 4);
}

// ---------------------------------------------------------------------------
// Scripted backend. Entries are consumed in order; an entry fires when its
// matcher is empty (matches anything) or appears as a substring of the
// prompt. Replay is deterministic for a fixed request sequence.

class ScriptedBackend final : public Backend {
public:
    struct Entry {
        std::string match;  // empty = any prompt
        std::string response;
    };

    ScriptedBackend() = default;
    explicit ScriptedBackend(std::vector<Entry> script)
    : script_(std::move(script)), consumed_(script_.size(), false)
    {}
    ScriptedBackend(std::initializer_list<Entry> script)
    : script_(script), consumed_(script_.size(), false)
    {}
    // movable despite the mutex; the source must be idle
    ScriptedBackend(ScriptedBackend && other) noexcept
    : script_(std::move(other.script_)), consumed_(std::move(other.consumed_))
    {}

    static ScriptedBackend from_file(std::string const & path)
    {
        std::ifstream in(path);
        if (!in) throw BackendError("cannot open script file: " + path);
        json doc = json::parse(in, nullptr, /*allow_exceptions=*/false);
        if (doc.is_discarded() || !doc.is_array())
            throw BackendError("malformed script file: " + path);
        std::vector<Entry> script;
        for (auto const & item : doc) {
            Entry e;
            e.match = item.value("match", std::string{});
            e.response = item.at("response").get<std::string>();
            script.push_back(std::move(e));
        }
        return ScriptedBackend(std::move(script));
    }

    CompletionResponse complete(CompletionRequest const & request) override
    {
        if (request.prompt.empty())
            throw BackendError("empty prompt");
        std::lock_guard lock(mutex_);
        for (std::size_t i = 0; i < script_.size(); ++i) {
            if (consumed_[i]) continue;
            if (!script_[i].match.empty()
                && request.prompt.find(script_[i].match) == std::string::npos)
                continue;
            consumed_[i] = true;
            CompletionResponse r;
            r.text = script_[i].response;
            r.usage.prompt_tokens = approx_tokens(request.prompt);
            r.usage.completion_tokens = approx_tokens(r.text);
            r.usage.calls = 1;
            return r;
        }
        throw BackendError("script exhausted: no unconsumed entry matches the "
                           "request");
    }

    std::size_t remaining() const
    {
        std::lock_guard lock(mutex_);
        std::size_t n = 0;
        for (bool c : consumed_) n += !c;
        return n;
    }

private:
    std::vector<Entry> script_;
    std::vector<bool> consumed_;
    mutable std::mutex mutex_;
};

// ---------------------------------------------------------------------------
// Prompt templates. The text is fixed, including line breaks and trailing
// spaces; substitutions fill the "{}" placeholders in order.

namespace prompts {

inline constexpr char const * kCodeSynth =
    "You are a Python code assistant that can generate a \n"
    "pseudo-Python function given the name, description, \n"
    "and arguments.\n"
    "\n"
    "function name: {}\n"
    "function description: {}\n"
    "\n"
    "You have to generate a pseudo-Python function that only \n"
    "contains docstring and a return example object for the \n"
    "above-given information. Use dummy examples as return \n"
    "objects.\n"
    "\n"
    "Maintain the return datatype. Docsrting contains Args and \n"
    "Returns. Maintain the arguments typing. The arguments are \n"
    "optional and should be assigned relevant default values\n"
    "according to their return type. \n"
    "\n"
    "Only generate the def function itself as instructed above, \n"
    "no typing imports or other code is needed. \n";

inline constexpr char const * kTopgun =
    "You are a Python code assistant. Today, you are challenged \n"
    "to generate a Python code for executing a query. You will \n"
    "be given a list of pseudo functions that you will use in \n"
    "your Python code to help you in solving the query correctly.\n"
    "\n"
    "Understand the query properly and use the required \n"
    "function to solve it.\n"
    "\n"
    "We have the following pseudo functions:\n"
    "=====\n"
    "{}\n"
    "=====\n"
    "\n"
    "Let's start\n"
    "\n"
    "If the query is {}\n"
    "Return the python code to execute it with the help of given \n"
    "functions. Do not use double quotes; only use single quotes.\n"
    "Always have to the code within ```python\\n<--Your Code-->\\n```\n"
    "Always remember if a function is to input or output an object \n"
    "assume the object to be a string.\n";

inline constexpr char const * kFunctionCall =
    "You are a Python code assistant. You are given a function. \n"
    "For the given function, write an executable function call \n"
    "using dummy argument values. \n"
    "\n"
    "Provided Libraries: {}\n"
    "\n"
    "Details of the provided library can only be fetched using \n"
    "the query engine tool, feel free to use it.\n"
    "\n"
    "-You can import the required classes from one of the provided \n"
    " libraries, according to the function arguments and documentation.\n"
    "-If any library is not provided, ignore any imports.\n"
    "-Do not import {} function for which you generate the \n"
    " function call.\n"
    "-Do not generate any unnecessary import statements.\n"
    "-No print statements are needed.\n"
    "-Always have to code within ```python\\n<--Your Code-->\\n```\n"
    "\n"
    "Example:\n"
    "\n"
    "Given Function: \n"
    "  def add(a: int, b: int) -> int:\n"
    "      '''\n"
    "      Given integers a and b, \n"
    "      return the total value of a and b.\n"
    "      '''\n"
    "      return a + b\n"
    "    \n"
    "Function Call:\n"
    "  a = 1\n"
    "  b = 4\n"
    "  add(a, b)\n"
    "\n"
    "The function name is: {}\n"
    "The function description is: {}\n"
    "The Function is: {}\n"
    "Function Call:\n";

inline constexpr char const * kSelfReflection =
    "You are a Python code assistant. You will be given your last\n"
    "Python code implementation, and an error in your last \n"
    "implementation will be provided. Taking the error into \n"
    "account, refactor your Python code.\n"
    "\n"
    "Use the query engine to export the information needed \n"
    "to resolve.\n"
    "\n"
    "Always have to code within ```python\\n<--Your Code-->\\n```\n"
    "\n"
    "Previous python code implementation: {}\n"
    "Self-reflection: {}\n"
    "\n"
    "Refactored Python code:\n";

inline std::string fill(std::string_view tmpl,
                        std::vector<std::string> const & values)
{
    std::string out;
    out.reserve(tmpl.size());
    std::size_t pos = 0, next_value = 0;
    while (true) {
        std::size_t hole = tmpl.find("{}", pos);
        if (hole == std::string_view::npos) break;
        out += tmpl.substr(pos, hole - pos);
        out += next_value < values.size() ? values[next_value] : "";
        ++next_value;
        pos = hole + 2;
    }
    out += tmpl.substr(pos);
    return out;
}

}  // namespace prompts

inline std::string render_codesynth_prompt(ToolDescription const & tool)
{
    auto violations = validate_tool_description(tool);
    if (!violations.empty())
        throw std::invalid_argument("invalid tool description: "
                                    + violations.front());
    return prompts::fill(prompts::kCodeSynth, {tool.name, tool.description});
}

inline std::string
render_topgun_prompt(std::string const & query,
                     std::vector<std::string> const & pseudo_sources)
{
    if (pseudo_sources.empty())
        throw std::invalid_argument("at least one pseudo source is required");
    std::string joined;
    for (std::size_t i = 0; i < pseudo_sources.size(); ++i) {
        if (i) joined += "\n\n";
        joined += pseudo_sources[i];
    }
    return prompts::fill(prompts::kTopgun, {joined, query});
}

inline std::string render_reflection_prompt(std::string const & prev_source,
                                            FeedbackRecord const & feedback)
{
    if (feedback.verified)
        throw std::invalid_argument(
            "reflection requires a failing feedback record");
    return prompts::fill(prompts::kSelfReflection,
                         {prev_source, feedback.message});
}

inline std::string render_function_call_prompt(PseudoFunction const & pseudo)
{
    if (pseudo.source.empty())
        throw std::invalid_argument("pseudo function source is empty");
    // No external libraries are provided in the black-box setting; the
    // template tells the model to ignore imports in that case.
    return prompts::fill(prompts::kFunctionCall,
                         {"", pseudo.tool_name, pseudo.tool_name,
                          pseudo.docstring, pseudo.source});
}

// ---------------------------------------------------------------------------
// Code-block extraction: content of the first fenced block, language tag and
// fences stripped; unfenced completions are returned trimmed.

inline std::string extract_code_block(std::string_view completion)
{
    auto trim = [](std::string_view s) {
        std::size_t b = s.find_first_not_of(" \t\r\n");
        if (b == std::string_view::npos) return std::string{};
        std::size_t e = s.find_last_not_of(" \t\r\n");
        return std::string(s.substr(b, e - b + 1));
    };
    std::size_t open = completion.find("```");
    if (open == std::string_view::npos) return trim(completion);
    std::size_t content = open + 3;
    std::size_t close = completion.find("```", content);
    std::size_t newline = completion.find('\n', content);
    if (newline != std::string_view::npos
        && (close == std::string_view::npos || newline < close)) {
        content = newline + 1;  // skip the language tag line
        close = completion.find("```", content);
    }
    if (close == std::string_view::npos)
        return trim(completion.substr(content));
    return trim(completion.substr(content, close - content));
}

}  // namespace toolplan
