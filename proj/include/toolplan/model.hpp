#pragma once

// Shared domain types for the tool-planning pipeline. All types are plain
// immutable-after-construction values with canonical JSON encodings.

#include <cctype>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

namespace toolplan {

using json = nlohmann::ordered_json;

struct ArgHint {
    std::string name;
    std::string type_hint;
    std::string default_value;  // empty = no default
};

// A named black-box tool with a natural-language description.
struct ToolDescription {
    std::string name;
    std::string description;
    std::vector<ArgHint> arg_hints;
    std::string return_hint;
};

// A verified signature stand-in: definition text with docstring and a dummy
// return object.
struct PseudoFunction {
    std::string tool_name;
    std::string source;
    std::string docstring;
    std::string dummy_return_repr;
    int iterations_used = 1;
    bool verified = false;
};

struct FeedbackRecord {
    bool verified = false;
    std::string message;         // empty iff verified
    std::string source_excerpt;  // offending line(s), optional
    long duration_ms = 0;
};

struct TokenUsage {
    long prompt_tokens = 0;
    long completion_tokens = 0;
    long calls = 0;

    TokenUsage & operator+=(TokenUsage const & other)
    {
        prompt_tokens += other.prompt_tokens;
        completion_tokens += other.completion_tokens;
        calls += other.calls;
        return *this;
    }
    long total() const { return prompt_tokens + completion_tokens; }
};

struct Revision {
    std::string source;
    FeedbackRecord feedback;
};

// A candidate program answering a query, with its full revision history.
struct Plan {
    std::string query;
    std::string candidate_source;
    std::vector<Revision> revisions;
    bool verified = false;
    TokenUsage token_usage;
};

// Ordered argument map: positional indices ("0", "1", ...) first, then
// keyword names sorted lexicographically. Values are canonical argument text.
using ArgMap = std::vector<std::pair<std::string, std::string>>;

// Bare call expressions bind to the reserved name "_".
inline constexpr char const * kUnboundResult = "_";

struct ToolCallStep {
    std::string tool_name;
    ArgMap arguments;
    std::string binding = kUnboundResult;

    friend bool operator==(ToolCallStep const &, ToolCallStep const &) = default;
};

struct SolutionTrajectory {
    std::vector<ToolCallStep> steps;
    std::string method_label;

    friend bool operator==(SolutionTrajectory const &,
                           SolutionTrajectory const &) = default;
};

// ---------------------------------------------------------------------------
// Validation

inline bool is_identifier(std::string const & s)
{
    if (s.empty()) return false;
    if (!(std::isalpha(static_cast<unsigned char>(s[0])) || s[0] == '_'))
        return false;
    for (char c : s) {
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_'))
            return false;
    }
    return true;
}

// Violations are values, not faults.
inline std::vector<std::string>
validate_tool_description(ToolDescription const & desc)
{
    std::vector<std::string> violations;
    if (desc.name.empty())
        violations.push_back("empty name");
    else if (!is_identifier(desc.name))
        violations.push_back("invalid identifier: " + desc.name);
    if (desc.description.empty())
        violations.push_back("empty description");
    for (auto const & hint : desc.arg_hints) {
        if (!is_identifier(hint.name))
            violations.push_back("invalid argument name: " + hint.name);
    }
    return violations;
}

// ---------------------------------------------------------------------------
// JSON encodings (lower_snake_case field names; the on-disk exchange format)

inline void to_json(json & j, ArgHint const & h)
{
    j = json{{"name", h.name},
             {"type_hint", h.type_hint},
             {"default_value", h.default_value}};
}

inline void from_json(json const & j, ArgHint & h)
{
    j.at("name").get_to(h.name);
    j.at("type_hint").get_to(h.type_hint);
    j.at("default_value").get_to(h.default_value);
}

inline void to_json(json & j, ToolDescription const & d)
{
    j = json{{"name", d.name},
             {"description", d.description},
             {"arg_hints", d.arg_hints},
             {"return_hint", d.return_hint}};
}

inline void from_json(json const & j, ToolDescription & d)
{
    j.at("name").get_to(d.name);
    j.at("description").get_to(d.description);
    d.arg_hints = j.value("arg_hints", std::vector<ArgHint>{});
    d.return_hint = j.value("return_hint", std::string{});
}

inline void to_json(json & j, PseudoFunction const & p)
{
    j = json{{"tool_name", p.tool_name},
             {"source", p.source},
             {"docstring", p.docstring},
             {"dummy_return_repr", p.dummy_return_repr},
             {"iterations_used", p.iterations_used},
             {"verified", p.verified}};
}

inline void from_json(json const & j, PseudoFunction & p)
{
    j.at("tool_name").get_to(p.tool_name);
    j.at("source").get_to(p.source);
    j.at("docstring").get_to(p.docstring);
    j.at("dummy_return_repr").get_to(p.dummy_return_repr);
    j.at("iterations_used").get_to(p.iterations_used);
    j.at("verified").get_to(p.verified);
}

inline void to_json(json & j, FeedbackRecord const & f)
{
    j = json{{"verified", f.verified},
             {"message", f.message},
             {"source_excerpt", f.source_excerpt},
             {"duration_ms", f.duration_ms}};
}

inline void from_json(json const & j, FeedbackRecord & f)
{
    j.at("verified").get_to(f.verified);
    j.at("message").get_to(f.message);
    f.source_excerpt = j.value("source_excerpt", std::string{});
    f.duration_ms = j.value("duration_ms", 0L);
}

inline void to_json(json & j, TokenUsage const & u)
{
    j = json{{"prompt_tokens", u.prompt_tokens},
             {"completion_tokens", u.completion_tokens},
             {"calls", u.calls}};
}

inline void from_json(json const & j, TokenUsage & u)
{
    j.at("prompt_tokens").get_to(u.prompt_tokens);
    j.at("completion_tokens").get_to(u.completion_tokens);
    j.at("calls").get_to(u.calls);
}

inline void to_json(json & j, Revision const & r)
{
    j = json{{"source", r.source}, {"feedback", r.feedback}};
}

inline void from_json(json const & j, Revision & r)
{
    j.at("source").get_to(r.source);
    j.at("feedback").get_to(r.feedback);
}

inline void to_json(json & j, Plan const & p)
{
    j = json{{"query", p.query},
             {"candidate_source", p.candidate_source},
             {"revisions", p.revisions},
             {"verified", p.verified},
             {"token_usage", p.token_usage}};
}

inline void from_json(json const & j, Plan & p)
{
    j.at("query").get_to(p.query);
    j.at("candidate_source").get_to(p.candidate_source);
    j.at("revisions").get_to(p.revisions);
    j.at("verified").get_to(p.verified);
    j.at("token_usage").get_to(p.token_usage);
}

inline void to_json(json & j, ToolCallStep const & s)
{
    json args = json::object();
    for (auto const & [key, value] : s.arguments) args[key] = value;
    j = json{{"tool_name", s.tool_name},
             {"arguments", std::move(args)},
             {"binding", s.binding}};
}

inline void from_json(json const & j, ToolCallStep & s)
{
    j.at("tool_name").get_to(s.tool_name);
    s.arguments.clear();
    for (auto const & [key, value] : j.at("arguments").items())
        s.arguments.emplace_back(key, value.get<std::string>());
    s.binding = j.value("binding", std::string{kUnboundResult});
}

inline void to_json(json & j, SolutionTrajectory const & t)
{
    j = json{{"steps", t.steps}, {"method_label", t.method_label}};
}

inline void from_json(json const & j, SolutionTrajectory & t)
{
    j.at("steps").get_to(t.steps);
    t.method_label = j.value("method_label", std::string{});
}

}  // namespace toolplan
