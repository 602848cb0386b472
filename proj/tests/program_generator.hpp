#pragma once

// Random straight-line program generator used to cross-check the syntactic
// call extractor against the dynamic tracer. Programs bind tool results to
// variables, call tools bare, nest calls as arguments (depth-limited), and
// mix literal kinds whose canonical text is identical on both sides.

#include <algorithm>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "toolplan/corpus.hpp"

namespace testgen {

inline toolplan::ToolCorpus make_tool_corpus(int tool_count)
{
    toolplan::ToolCorpus corpus(/*permissive=*/true);
    for (int i = 0; i < tool_count; ++i) {
        std::string name = "tool" + std::to_string(i);
        toolplan::ToolDescription desc{
            name, "generated test tool number " + std::to_string(i), {}, "str"};
        toolplan::PseudoFunction pseudo;
        pseudo.tool_name = name;
        pseudo.source = "def " + name + "(*args, **kwargs):\n    return 'r"
                        + std::to_string(i) + "'";
        pseudo.dummy_return_repr = "'r" + std::to_string(i) + "'";
        pseudo.verified = true;
        corpus.add(std::move(desc), std::move(pseudo));
    }
    return corpus;
}

inline std::set<std::string> tool_names(toolplan::ToolCorpus const & corpus)
{
    auto names = corpus.names();
    return {names.begin(), names.end()};
}

class ProgramGenerator {
public:
    ProgramGenerator(std::mt19937 & rng, int tool_count)
    : rng_(rng), tool_count_(tool_count)
    {}

    std::string generate()
    {
        bound_.clear();
        std::string program;
        int statements = 1 + static_cast<int>(rng_() % 8);
        for (int i = 0; i < statements; ++i) {
            unsigned roll = rng_() % 100;
            if (roll < 60 || (roll < 75 && bound_.empty())) {
                std::string var = "v" + std::to_string(next_var_++);
                program += var + " = " + call(2) + "\n";
                bound_.push_back(var);
            } else if (roll < 75) {
                // rebind an existing variable
                std::string const & var = bound_[rng_() % bound_.size()];
                program += var + " = " + call(2) + "\n";
            } else {
                program += call(2) + "\n";
            }
        }
        return program;
    }

private:
    std::string call(int depth)
    {
        std::string out = "tool" + std::to_string(rng_() % tool_count_) + "(";
        int positional = static_cast<int>(rng_() % 4);
        int keyword = static_cast<int>(rng_() % 3);
        bool first = true;
        for (int i = 0; i < positional; ++i) {
            if (!first) out += ", ";
            out += value(depth);
            first = false;
        }
        static char const * const names[] = {"alpha", "beta", "gamma", "delta"};
        std::vector<std::string> kw(names, names + 4);
        std::shuffle(kw.begin(), kw.end(), rng_);
        for (int i = 0; i < keyword; ++i) {
            if (!first) out += ", ";
            out += kw[static_cast<std::size_t>(i)] + "=" + value(depth);
            first = false;
        }
        return out + ")";
    }

    std::string value(int depth)
    {
        if (depth > 0 && rng_() % 5 == 0) return call(depth - 1);
        if (!bound_.empty() && rng_() % 5 == 0)
            return bound_[rng_() % bound_.size()];
        return literal();
    }

    std::string literal()
    {
        static char const * const words[] = {"apple", "delta kilo", "x1",
                                             "order 7", "zed"};
        switch (rng_() % 8) {
            case 0: return std::to_string(static_cast<int>(rng_() % 1000));
            case 1:
                // avoid -0: the text differs from the runtime repr
                return "-" + std::to_string(1 + static_cast<int>(rng_() % 50));
            case 2:
                return std::to_string(static_cast<int>(rng_() % 90)) + "."
                       + std::to_string(1 + static_cast<int>(rng_() % 9));
            case 3: return std::string("'") + words[rng_() % 5] + "'";
            case 4: return rng_() % 2 ? "True" : "False";
            case 5: return "None";
            case 6: {
                int n = static_cast<int>(rng_() % 3);
                std::string out = "[";
                for (int i = 0; i < n; ++i) {
                    if (i) out += ", ";
                    out += scalar();
                }
                return out + "]";
            }
            default:
                return "{'key': " + scalar() + "}";
        }
    }

    std::string scalar()
    {
        switch (rng_() % 3) {
            case 0: return std::to_string(static_cast<int>(rng_() % 100));
            case 1: return "'item'";
            default: return "None";
        }
    }

    std::mt19937 & rng_;
    int tool_count_;
    std::vector<std::string> bound_;
    int next_var_ = 0;
};

}  // namespace testgen
