#pragma once

// Evaluation metrics: exact-match trajectory success rate, definition-header
// F1 between generated and reference signatures, reflexion-iteration curves,
// and per-method token consumption reports. Everything here is pure.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <tuple>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "toolplan/model.hpp"
#include "toolplan/pycode.hpp"

namespace toolplan {

struct EvalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Trajectory matching. Arguments are compared after canonicalization;
// bindings are presentation only and excluded. Positional arguments compare
// in order, keyword arguments as a name-sorted sequence.

namespace detail {

inline bool numeric_key(std::string const & key)
{
    return !key.empty()
           && key.find_first_not_of("0123456789") == std::string::npos;
}

struct SplitArgs {
    std::vector<std::string> positional;                       // canonical text
    std::vector<std::pair<std::string, std::string>> keyword;  // sorted
};

inline SplitArgs split_arguments(ArgMap const & arguments)
{
    SplitArgs out;
    std::vector<std::pair<long, std::string>> positional;
    for (auto const & [key, value] : arguments) {
        std::string canonical = pycode::canonicalize_argument(value);
        if (numeric_key(key))
            positional.emplace_back(std::stol(key), std::move(canonical));
        else
            out.keyword.emplace_back(key, std::move(canonical));
    }
    std::sort(positional.begin(), positional.end());
    std::sort(out.keyword.begin(), out.keyword.end());
    for (auto & [index, value] : positional)
        out.positional.push_back(std::move(value));
    return out;
}

}  // namespace detail

inline bool step_match(ToolCallStep const & predicted, ToolCallStep const & gold)
{
    if (predicted.tool_name != gold.tool_name) return false;
    auto a = detail::split_arguments(predicted.arguments);
    auto b = detail::split_arguments(gold.arguments);
    return a.positional == b.positional && a.keyword == b.keyword;
}

inline bool trajectory_match(SolutionTrajectory const & predicted,
                             SolutionTrajectory const & gold)
{
    if (predicted.steps.size() != gold.steps.size()) return false;
    for (std::size_t i = 0; i < predicted.steps.size(); ++i) {
        if (!step_match(predicted.steps[i], gold.steps[i])) return false;
    }
    return true;
}

inline double success_rate(
    std::vector<std::pair<SolutionTrajectory, SolutionTrajectory>> const & cases)
{
    if (cases.empty()) throw EvalError("success_rate needs at least one case");
    std::size_t matched = 0;
    for (auto const & [predicted, gold] : cases)
        matched += trajectory_match(predicted, gold);
    return 100.0 * static_cast<double>(matched)
           / static_cast<double>(cases.size());
}

// ---------------------------------------------------------------------------
// Definition-header F1. The node set of a definition header:
//   function name, parameter names, type annotations and defaults paired to
//   their parameter position, and the return annotation. The body (hence the
//   docstring) never participates. An untyped parameter contributes only its
//   name; a missing return annotation contributes nothing. Including the
//   function name keeps the set non-empty for every valid definition.

namespace detail {

// (kind, position, text); position is -1 for position-free nodes
using HeaderNode = std::tuple<int, int, std::string>;

inline std::vector<HeaderNode> header_nodes(std::string const & source)
{
    std::vector<pycode::DefHeader> headers;
    try {
        headers = pycode::parse_def_headers(source);
    } catch (pycode::ParseError const & e) {
        throw EvalError(std::string("definition does not parse: ") + e.what());
    }
    if (headers.size() != 1)
        throw EvalError("expected exactly one function definition, found "
                        + std::to_string(headers.size()));
    pycode::DefHeader const & h = headers.front();

    enum { FuncName, ParamName, Annotation, Default, ReturnAnnotation };
    std::vector<HeaderNode> nodes;
    nodes.emplace_back(FuncName, -1, h.name);
    for (std::size_t i = 0; i < h.params.size(); ++i) {
        auto const & p = h.params[i];
        nodes.emplace_back(ParamName, -1, p.prefix + p.name);
        if (!p.annotation.empty())
            nodes.emplace_back(Annotation, static_cast<int>(i), p.annotation);
        if (!p.default_value.empty())
            nodes.emplace_back(Default, static_cast<int>(i), p.default_value);
    }
    if (!h.return_annotation.empty())
        nodes.emplace_back(ReturnAnnotation, -1, h.return_annotation);
    std::sort(nodes.begin(), nodes.end());
    return nodes;
}

}  // namespace detail

inline double signature_f1(std::string const & candidate_source,
                           std::string const & reference_source)
{
    auto candidate = detail::header_nodes(candidate_source);
    auto reference = detail::header_nodes(reference_source);
    std::vector<detail::HeaderNode> common;
    std::set_intersection(candidate.begin(), candidate.end(),
                          reference.begin(), reference.end(),
                          std::back_inserter(common));
    if (common.empty()) return 0.0;
    double matched = static_cast<double>(common.size());
    double precision = matched / static_cast<double>(candidate.size());
    double recall = matched / static_cast<double>(reference.size());
    return 2.0 * precision * recall / (precision + recall);
}

// Mean F1 at each iteration cutoff. A case whose history is shorter than the
// longest one carries its last value forward; generation stops improving once
// verified, so the last candidate stands for all later iterations.
inline std::vector<double>
reflexion_curve(std::vector<std::vector<std::string>> const & runs,
                std::vector<std::string> const & references)
{
    if (runs.empty()) throw EvalError("reflexion_curve needs at least one case");
    if (runs.size() != references.size())
        throw EvalError("runs and references differ in length");
    std::size_t iterations = 0;
    for (auto const & history : runs) {
        if (history.empty())
            throw EvalError("every case needs at least one candidate");
        iterations = std::max(iterations, history.size());
    }
    std::vector<double> curve(iterations, 0.0);
    for (std::size_t c = 0; c < runs.size(); ++c) {
        double last = 0.0;
        for (std::size_t i = 0; i < iterations; ++i) {
            if (i < runs[c].size())
                last = signature_f1(runs[c][i], references[c]);
            curve[i] += last;
        }
    }
    for (double & value : curve) value /= static_cast<double>(runs.size());
    return curve;
}

// ---------------------------------------------------------------------------
// Token consumption report, grouped by method label. Empty groups are
// omitted; means are arithmetic over plans.

struct MethodTokenStats {
    std::size_t plans = 0;
    double mean_prompt_tokens = 0.0;
    double mean_completion_tokens = 0.0;
    double mean_total_tokens = 0.0;
    double mean_calls = 0.0;
};

using TokenReport = std::map<std::string, MethodTokenStats>;

inline TokenReport
token_report(std::map<std::string, std::vector<Plan>> const & groups)
{
    TokenReport report;
    for (auto const & [method, plans] : groups) {
        if (plans.empty()) continue;
        MethodTokenStats stats;
        stats.plans = plans.size();
        for (auto const & plan : plans) {
            stats.mean_prompt_tokens += static_cast<double>(plan.token_usage.prompt_tokens);
            stats.mean_completion_tokens
                += static_cast<double>(plan.token_usage.completion_tokens);
            stats.mean_calls += static_cast<double>(plan.token_usage.calls);
        }
        double n = static_cast<double>(stats.plans);
        stats.mean_prompt_tokens /= n;
        stats.mean_completion_tokens /= n;
        stats.mean_calls /= n;
        stats.mean_total_tokens =
            stats.mean_prompt_tokens + stats.mean_completion_tokens;
        report.emplace(method, stats);
    }
    return report;
}

inline json token_report_json(TokenReport const & report)
{
    json out = json::object();
    for (auto const & [method, stats] : report) {
        out[method] = {{"plans", stats.plans},
                       {"mean_prompt_tokens", stats.mean_prompt_tokens},
                       {"mean_completion_tokens", stats.mean_completion_tokens},
                       {"mean_total_tokens", stats.mean_total_tokens},
                       {"mean_calls", stats.mean_calls}};
    }
    return out;
}

inline std::string token_report_text(TokenReport const & report)
{
    auto fmt = [](double value) {
        char buffer[32];
        std::snprintf(buffer, sizeof buffer, "%.1f", value);
        return std::string(buffer);
    };
    std::vector<std::vector<std::string>> rows;
    rows.push_back({"method", "plans", "prompt", "completion", "total", "calls"});
    for (auto const & [method, stats] : report) {
        rows.push_back({method, std::to_string(stats.plans),
                        fmt(stats.mean_prompt_tokens),
                        fmt(stats.mean_completion_tokens),
                        fmt(stats.mean_total_tokens), fmt(stats.mean_calls)});
    }
    std::vector<std::size_t> widths(rows.front().size(), 0);
    for (auto const & row : rows)
        for (std::size_t i = 0; i < row.size(); ++i)
            widths[i] = std::max(widths[i], row[i].size());
    std::string out;
    for (auto const & row : rows) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i) out += "  ";
            out += row[i];
            if (i + 1 < row.size())
                out.append(widths[i] - row[i].size(), ' ');
        }
        out += '\n';
    }
    return out;
}

// ---------------------------------------------------------------------------
// Gold-trajectory fixtures: a JSON list of {query, steps:[{tool_name,
// arguments}]} records.

struct GoldCase {
    std::string query;
    SolutionTrajectory trajectory;
};

inline std::vector<GoldCase> load_gold_cases(std::string const & path)
{
    std::ifstream in(path);
    if (!in) throw EvalError("cannot open gold file: " + path);
    json doc = json::parse(in, nullptr, /*allow_exceptions=*/false);
    if (doc.is_discarded() || !doc.is_array())
        throw EvalError("malformed gold file: " + path);
    std::vector<GoldCase> cases;
    for (auto const & item : doc) {
        GoldCase c;
        try {
            c.query = item.at("query").get<std::string>();
            for (auto const & step : item.at("steps"))
                c.trajectory.steps.push_back(step.get<ToolCallStep>());
        } catch (json::exception const & e) {
            throw EvalError("malformed gold record in " + path + ": "
                            + e.what());
        }
        cases.push_back(std::move(c));
    }
    return cases;
}

}  // namespace toolplan
