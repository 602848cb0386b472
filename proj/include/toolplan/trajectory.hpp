#pragma once

// Converts a verified program into an ordered solution trajectory.
//
// parse_static simulates evaluation order over the syntax tree: every call
// expression whose callee is a known tool becomes a step, arguments before
// the calls containing them, in source order. A nested call gets a synthetic
// binding _nested_<ordinal> when the call consuming its result runs its
// argument pre-pass, which is how the runtime tracer names results, so the
// two views agree on straight-line programs. Control flow records each
// syntactic call site once; trace_dynamic re-runs the program against
// instrumented pseudo functions and is authoritative for runtime
// multiplicity.

#include <functional>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "toolplan/corpus.hpp"
#include "toolplan/model.hpp"
#include "toolplan/pycode.hpp"
#include "toolplan/sandbox.hpp"

namespace toolplan {

namespace detail {

class CallExtractor {
public:
    CallExtractor(std::set<std::string> const & tool_names,
                  SolutionTrajectory & out)
    : tools_(tool_names),
      out_(out),
      printer_([this](pycode::Expr const & call)
                   -> std::optional<std::string> {
          auto it = names_.find(&call);
          if (it == names_.end()) return std::nullopt;
          return it->second;
      })
    {}

    bool is_tool_call(pycode::Expr const & e) const
    {
        return e.kind == pycode::ExprKind::Call && !e.children.empty()
               && e.children.front().kind == pycode::ExprKind::Name
               && tools_.count(e.children.front().text) != 0;
    }

    // Walks an expression in evaluation order, emitting a step for every
    // tool call encountered.
    void evaluate(pycode::Expr const & e)
    {
        if (is_tool_call(e)) {
            emit(e, {});
            return;
        }
        for (auto const & child : e.children) evaluate(child);
    }

    // Emits a step for `call`. Nested tool calls run first; then, mirroring
    // the runtime tracer, a pre-pass over the freshly evaluated arguments
    // names any result that has no name yet. The step's own binding stays
    // open until the whole program has run (a later consumer may name it).
    void emit(pycode::Expr const & call, std::string binding)
    {
        for (std::size_t i = 1; i < call.children.size(); ++i)
            evaluate(call.children[i]);
        for (std::size_t i = 1; i < call.children.size(); ++i)
            assign_names(call.children[i]);

        ArgMap arguments;
        std::vector<std::pair<std::string, std::string>> keyword;
        std::size_t positional = 0;
        for (std::size_t i = 1; i < call.children.size(); ++i) {
            std::string text = printer_.print(call.children[i]);
            std::string const & name = call.strs[i - 1];
            if (name.empty())
                arguments.emplace_back(std::to_string(positional++),
                                       std::move(text));
            else
                keyword.emplace_back(name, std::move(text));
        }
        std::sort(keyword.begin(), keyword.end());
        for (auto & kv : keyword) arguments.push_back(std::move(kv));

        out_.steps.push_back(
            {call.children.front().text, std::move(arguments), {}});
        pending_.emplace_back(out_.steps.size() - 1, &call);
        if (!binding.empty()) names_.emplace(&call, std::move(binding));
    }

    // Resolves step bindings once every statement has been walked.
    void finish()
    {
        for (auto const & [index, call] : pending_) {
            auto it = names_.find(call);
            out_.steps[index].binding =
                it != names_.end() ? it->second : std::string(kUnboundResult);
        }
        pending_.clear();
    }

private:
    // Names unnamed tool results in argument source order, recursing into
    // containers, exactly as the tracer's pre-pass does.
    void assign_names(pycode::Expr const & e)
    {
        using pycode::ExprKind;
        if (is_tool_call(e)) {
            if (names_.find(&e) == names_.end())
                names_.emplace(&e,
                               "_nested_" + std::to_string(++nested_counter_));
            return;
        }
        if (e.kind == ExprKind::List || e.kind == ExprKind::Tuple
            || e.kind == ExprKind::Set || e.kind == ExprKind::Dict
            || e.kind == ExprKind::Paren) {
            for (auto const & child : e.children) assign_names(child);
        }
    }

    std::set<std::string> const & tools_;
    SolutionTrajectory & out_;
    pycode::Printer printer_;
    std::map<pycode::Expr const *, std::string> names_;
    std::vector<std::pair<std::size_t, pycode::Expr const *>> pending_;
    int nested_counter_ = 0;
};

}  // namespace detail

inline SolutionTrajectory
parse_static(std::string const & plan_source,
             std::set<std::string> const & tool_names,
             std::string method_label = {})
{
    SolutionTrajectory trajectory;
    trajectory.method_label = std::move(method_label);
    auto statements = pycode::parse_statements(plan_source);  // may throw
    detail::CallExtractor extractor(tool_names, trajectory);

    for (auto const & st : statements) {
        if (st.kind == pycode::StmtKind::Assign && !st.exprs.empty()) {
            // targets first (they can contain subscript expressions), then
            // the value
            for (std::size_t i = 0; i + 1 < st.exprs.size(); ++i)
                extractor.evaluate(st.exprs[i]);
            pycode::Expr const & value = st.exprs.back();
            if (extractor.is_tool_call(value)) {
                extractor.emit(value, st.name_binding.empty()
                                          ? std::string(kUnboundResult)
                                          : st.name_binding);
            } else {
                extractor.evaluate(value);
            }
            continue;
        }
        if (st.kind == pycode::StmtKind::Expression && st.exprs.size() == 1
            && extractor.is_tool_call(st.exprs.front())) {
            extractor.emit(st.exprs.front(), kUnboundResult);
            continue;
        }
        for (auto const & e : st.exprs) extractor.evaluate(e);
    }
    extractor.finish();
    return trajectory;
}

// ---------------------------------------------------------------------------
// Dynamic trace oracle

struct TraceError : std::runtime_error {
    FeedbackRecord feedback;
    explicit TraceError(FeedbackRecord fb)
    : std::runtime_error("dynamic trace failed: " + fb.message),
      feedback(std::move(fb))
    {}
};

namespace detail {

inline std::string base64_encode(std::string_view input)
{
    static constexpr char alphabet[] =
        "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
    std::string out;
    out.reserve((input.size() + 2) / 3 * 4);
    std::size_t i = 0;
    while (i + 2 < input.size()) {
        unsigned v = (static_cast<unsigned char>(input[i]) << 16)
                     | (static_cast<unsigned char>(input[i + 1]) << 8)
                     | static_cast<unsigned char>(input[i + 2]);
        out += alphabet[(v >> 18) & 63];
        out += alphabet[(v >> 12) & 63];
        out += alphabet[(v >> 6) & 63];
        out += alphabet[v & 63];
        i += 3;
    }
    if (i + 1 == input.size()) {
        unsigned v = static_cast<unsigned char>(input[i]) << 16;
        out += alphabet[(v >> 18) & 63];
        out += alphabet[(v >> 12) & 63];
        out += "==";
    } else if (i + 2 == input.size()) {
        unsigned v = (static_cast<unsigned char>(input[i]) << 16)
                     | (static_cast<unsigned char>(input[i + 1]) << 8);
        out += alphabet[(v >> 18) & 63];
        out += alphabet[(v >> 12) & 63];
        out += alphabet[(v >> 6) & 63];
        out += "=";
    }
    return out;
}

// Instrumentation preamble: wraps each pseudo function to log its calls with
// canonical argument text matching the static extractor's conventions.
inline constexpr char const * kTracePreamble = R"PY(
import base64 as _base64
import json as _json

_steps = []
_result_names = {}
_nested_counter = [0]

class _ToolResult:
    def __init__(self, value):
        object.__setattr__(self, '_value', value)
    def __getattr__(self, name):
        return getattr(object.__getattribute__(self, '_value'), name)
    def __getitem__(self, key):
        return object.__getattribute__(self, '_value')[key]
    def __iter__(self):
        return iter(object.__getattribute__(self, '_value'))
    def __len__(self):
        return len(object.__getattribute__(self, '_value'))
    def __bool__(self):
        return bool(object.__getattribute__(self, '_value'))
    def __repr__(self):
        return repr(object.__getattribute__(self, '_value'))
    def __str__(self):
        return str(object.__getattribute__(self, '_value'))

def _name(value):
    # Names unnamed tool results in argument source order, so synthetic
    # ordinals match the syntactic extractor (inner calls complete, and are
    # therefore named, before the calls containing them).
    if isinstance(value, _ToolResult):
        key = id(value)
        if key not in _result_names:
            _nested_counter[0] += 1
            _result_names[key] = '_nested_%d' % _nested_counter[0]
    elif isinstance(value, (list, tuple)):
        for item in value:
            _name(item)
    elif isinstance(value, dict):
        for k, v in value.items():
            _name(k)
            _name(v)

def _canon(value):
    if isinstance(value, _ToolResult):
        _name(value)
        return _result_names[id(value)]
    if isinstance(value, str):
        escaped = (value.replace('\\', '\\\\').replace("'", "\\'")
                   .replace('\n', '\\n').replace('\r', '\\r')
                   .replace('\t', '\\t'))
        return "'" + escaped + "'"
    if value is None or isinstance(value, bool):
        return repr(value)
    if isinstance(value, (int, float)):
        return repr(value)
    if isinstance(value, list):
        return '[' + ', '.join(_canon(v) for v in value) + ']'
    if isinstance(value, tuple):
        inner = ', '.join(_canon(v) for v in value)
        if len(value) == 1:
            inner += ','
        return '(' + inner + ')'
    if isinstance(value, dict):
        return '{' + ', '.join(
            _canon(k) + ': ' + _canon(v) for k, v in value.items()) + '}'
    return repr(value)

def _unwrap(value):
    if isinstance(value, _ToolResult):
        return object.__getattribute__(value, '_value')
    return value

def _instrument(name, fn):
    def _traced(*args, **kwargs):
        for a in args:
            _name(a)
        for v in kwargs.values():
            _name(v)
        arguments = []
        for i, a in enumerate(args):
            arguments.append([str(i), _canon(a)])
        for key in sorted(kwargs):
            arguments.append([key, _canon(kwargs[key])])
        raw = fn(*[_unwrap(a) for a in args],
                 **{k: _unwrap(v) for k, v in kwargs.items()})
        result = _ToolResult(raw)
        _steps.append({'tool_name': name, 'arguments': arguments,
                       'result': result})
        return result
    return _traced

class _TracingNamespace(dict):
    def __setitem__(self, key, value):
        if isinstance(value, _ToolResult):
            rid = id(value)
            if rid not in _result_names:
                _result_names[rid] = key
        dict.__setitem__(self, key, value)
)PY";

inline constexpr char const * kTraceEpilogue = R"PY(
_plan_source = _base64.b64decode(_PLAN_B64).decode('utf-8')
_globals = {'__builtins__': __builtins__, '__name__': '__trace__'}
for _tool_name in _TOOL_NAMES:
    _globals[_tool_name] = _instrument(_tool_name, globals()[_tool_name])
exec(compile(_plan_source, 'plan.py', 'exec'), _globals, _TracingNamespace())

_out = []
for _s in _steps:
    _out.append({'tool_name': _s['tool_name'],
                 'arguments': _s['arguments'],
                 'binding': _result_names.get(id(_s['result']), '_')})
print('__TRAJECTORY__' + _json.dumps({'steps': _out}))
)PY";

}  // namespace detail

inline SolutionTrajectory trace_dynamic(std::string const & plan_source,
                                        ToolCorpus const & corpus,
                                        Sandbox const & sandbox,
                                        SandboxLimits const & limits = {},
                                        std::string method_label = {})
{
    std::string unit = detail::kTracePreamble;
    unit += "\n";
    for (auto const & name : corpus.names()) {
        unit += corpus.at(name).pseudo.source;
        unit += "\n\n";
    }
    unit += "_TOOL_NAMES = [";
    for (auto const & name : corpus.names())
        unit += pycode::quote_single(name) + ", ";
    unit += "]\n";
    unit += "_PLAN_B64 = '" + detail::base64_encode(plan_source) + "'\n";
    unit += detail::kTraceEpilogue;

    ExecutionResult result = sandbox.execute(unit, limits);
    if (result.exit_status != ExitStatus::Clean)
        throw TraceError(feedback_from_result(result));

    std::size_t marker = result.stdout_text.rfind("__TRAJECTORY__");
    if (marker == std::string::npos)
        throw TraceError(FeedbackRecord{
            false, "trace produced no trajectory record", "", result.duration_ms});
    json doc = json::parse(result.stdout_text.substr(marker + 14), nullptr,
                           /*allow_exceptions=*/false);
    if (doc.is_discarded())
        throw TraceError(FeedbackRecord{false, "trace record is malformed", "",
                                        result.duration_ms});

    SolutionTrajectory trajectory;
    trajectory.method_label = std::move(method_label);
    for (auto const & step : doc.at("steps")) {
        ToolCallStep s;
        s.tool_name = step.at("tool_name").get<std::string>();
        for (auto const & pair : step.at("arguments"))
            s.arguments.emplace_back(pair.at(0).get<std::string>(),
                                     pair.at(1).get<std::string>());
        s.binding = step.at("binding").get<std::string>();
        trajectory.steps.push_back(std::move(s));
    }
    return trajectory;
}

// ---------------------------------------------------------------------------
// Export: the black-box answer record. final_answer and per-step responses
// stay empty here; gray-box executors populate them later.

inline std::string arguments_text(ArgMap const & arguments)
{
    std::string out = "{";
    bool first = true;
    for (auto const & [key, value] : arguments) {
        if (!first) out += ", ";
        first = false;
        bool positional = !key.empty()
                          && key.find_first_not_of("0123456789")
                                 == std::string::npos;
        out += positional ? key : pycode::quote_single(key);
        out += ": ";
        out += value;
    }
    return out + "}";
}

inline json export_tooleval(std::string const & query,
                            SolutionTrajectory const & trajectory,
                            std::string const & method_label)
{
    json record;
    record["query"] = query;
    record["answer"] = {{"method", method_label},
                        {"total_steps", trajectory.steps.size()},
                        {"final_answer", ""}};
    json details = json::array();
    for (auto const & step : trajectory.steps) {
        details.push_back({{"role", "tool"},
                           {"message",
                            {{"name", step.tool_name},
                             {"arguments", arguments_text(step.arguments)},
                             {"response", ""}}}});
    }
    record["answer_details"] = std::move(details);
    return record;
}

}  // namespace toolplan
