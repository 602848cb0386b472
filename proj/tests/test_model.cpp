#include "doctest.h"

#include <random>

#include "toolplan/model.hpp"

using namespace toolplan;

namespace {

std::string random_text(std::mt19937 & rng)
{
    static char const chars[] =
        "abcdefghijklmnopqrstuvwxyz ABC'\"\n\t_0123456789";
    std::string out;
    std::size_t n = rng() % 24;
    for (std::size_t i = 0; i < n; ++i)
        out += chars[rng() % (sizeof chars - 1)];
    return out;
}

ToolDescription random_description(std::mt19937 & rng)
{
    ToolDescription d;
    d.name = "tool_" + std::to_string(rng() % 1000);
    d.description = random_text(rng);
    std::size_t args = rng() % 4;
    for (std::size_t i = 0; i < args; ++i)
        d.arg_hints.push_back({"arg" + std::to_string(i), "str",
                               rng() % 2 ? "'x'" : ""});
    d.return_hint = "str";
    return d;
}

}  // namespace

TEST_CASE("identifier validation")
{
    CHECK(is_identifier("get_weather"));
    CHECK(is_identifier("_private"));
    CHECK(is_identifier("x1"));
    CHECK_FALSE(is_identifier(""));
    CHECK_FALSE(is_identifier("1x"));
    CHECK_FALSE(is_identifier("has space"));
    CHECK_FALSE(is_identifier("dash-ed"));
}

TEST_CASE("tool description validation reports every violation")
{
    ToolDescription good{"lookup", "Finds things.", {{"key", "str", ""}}, "str"};
    CHECK(validate_tool_description(good).empty());

    ToolDescription bad;
    bad.name = "9bad";
    bad.description = "";
    bad.arg_hints.push_back({"also bad", "", ""});
    auto violations = validate_tool_description(bad);
    CHECK(violations.size() == 3);

    ToolDescription empty_name;
    empty_name.description = "ok";
    auto v2 = validate_tool_description(empty_name);
    REQUIRE(v2.size() == 1);
    CHECK(v2.front() == "empty name");
}

TEST_CASE("tool description JSON round-trip")
{
    std::mt19937 rng(7);
    for (int i = 0; i < 50; ++i) {
        ToolDescription d = random_description(rng);
        ToolDescription back = json(d).get<ToolDescription>();
        CHECK(back.name == d.name);
        CHECK(back.description == d.description);
        CHECK(back.return_hint == d.return_hint);
        REQUIRE(back.arg_hints.size() == d.arg_hints.size());
        for (std::size_t a = 0; a < d.arg_hints.size(); ++a) {
            CHECK(back.arg_hints[a].name == d.arg_hints[a].name);
            CHECK(back.arg_hints[a].default_value
                  == d.arg_hints[a].default_value);
        }
    }
}

TEST_CASE("pseudo function and feedback round-trip")
{
    std::mt19937 rng(11);
    for (int i = 0; i < 50; ++i) {
        PseudoFunction p;
        p.tool_name = "t" + std::to_string(i);
        p.source = random_text(rng);
        p.docstring = random_text(rng);
        p.dummy_return_repr = random_text(rng);
        p.iterations_used = 1 + static_cast<int>(rng() % 5);
        p.verified = rng() % 2 == 0;
        PseudoFunction back = json(p).get<PseudoFunction>();
        CHECK(back.tool_name == p.tool_name);
        CHECK(back.source == p.source);
        CHECK(back.docstring == p.docstring);
        CHECK(back.dummy_return_repr == p.dummy_return_repr);
        CHECK(back.iterations_used == p.iterations_used);
        CHECK(back.verified == p.verified);

        FeedbackRecord f{rng() % 2 == 0, random_text(rng), random_text(rng),
                         static_cast<long>(rng() % 10000)};
        FeedbackRecord fb = json(f).get<FeedbackRecord>();
        CHECK(fb.verified == f.verified);
        CHECK(fb.message == f.message);
        CHECK(fb.source_excerpt == f.source_excerpt);
        CHECK(fb.duration_ms == f.duration_ms);
    }
}

TEST_CASE("token usage accumulates")
{
    TokenUsage a{100, 40, 1};
    TokenUsage b{50, 10, 2};
    a += b;
    CHECK(a.prompt_tokens == 150);
    CHECK(a.completion_tokens == 50);
    CHECK(a.calls == 3);
    CHECK(a.total() == 200);
}

TEST_CASE("plan round-trip keeps revision history")
{
    Plan p;
    p.query = "where is my package?";
    p.candidate_source = "x = f()\n";
    p.revisions.push_back({"x = g()\n", {false, "NameError: g", "x = g()", 12}});
    p.revisions.push_back({"x = f()\n", {true, "", "", 9}});
    p.verified = true;
    p.token_usage = {200, 80, 2};

    Plan back = json(p).get<Plan>();
    CHECK(back.query == p.query);
    CHECK(back.candidate_source == p.candidate_source);
    REQUIRE(back.revisions.size() == 2);
    CHECK(back.revisions[0].feedback.message == "NameError: g");
    CHECK(back.revisions[1].feedback.verified);
    CHECK(back.verified);
    CHECK(back.token_usage.calls == 2);
}

TEST_CASE("trajectory steps compare by value and round-trip")
{
    ToolCallStep s1{"f", {{"0", "'a'"}, {"k", "1"}}, "x"};
    ToolCallStep s2 = s1;
    CHECK(s1 == s2);
    s2.arguments[1].second = "2";
    CHECK_FALSE(s1 == s2);

    SolutionTrajectory t;
    t.method_label = "topgun";
    t.steps = {s1, {"g", {}, kUnboundResult}};
    SolutionTrajectory back = json(t).get<SolutionTrajectory>();
    CHECK(back == t);
    CHECK(back.steps[1].binding == "_");
}

TEST_CASE("argument maps preserve insertion order through JSON")
{
    // positional keys first, then keywords; ordered_json keeps that order
    ToolCallStep s{"f", {{"0", "1"}, {"1", "2"}, {"alpha", "'x'"}}, "_"};
    json j = s;
    std::vector<std::string> keys;
    for (auto const & [key, value] : j.at("arguments").items())
        keys.push_back(key);
    CHECK(keys == std::vector<std::string>{"0", "1", "alpha"});
    CHECK(json(s).get<ToolCallStep>() == s);
}
