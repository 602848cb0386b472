#include "doctest.h"

#include <random>

#include "program_generator.hpp"
#include "toolplan/trajectory.hpp"

using namespace toolplan;

namespace {

std::set<std::string> const kTools{"fetch", "report", "merge"};

ToolCallStep step(std::string name, ArgMap args, std::string binding)
{
    return {std::move(name), std::move(args), std::move(binding)};
}

}  // namespace

TEST_CASE("direct assignments bind the target name")
{
    auto t = parse_static("result = fetch('ORD1')\n", kTools);
    REQUIRE(t.steps.size() == 1);
    CHECK(t.steps[0] == step("fetch", {{"0", "'ORD1'"}}, "result"));
}

TEST_CASE("bare calls bind the reserved placeholder")
{
    auto t = parse_static("report(target='x')\n", kTools);
    REQUIRE(t.steps.size() == 1);
    CHECK(t.steps[0] == step("report", {{"target", "'x'"}}, "_"));
}

TEST_CASE("keyword arguments sort after positionals")
{
    auto t = parse_static("fetch(1, zulu='z', alpha='a')\n", kTools);
    REQUIRE(t.steps.size() == 1);
    CHECK(t.steps[0].arguments
          == ArgMap{{"0", "1"}, {"alpha", "'a'"}, {"zulu", "'z'"}});
}

TEST_CASE("nested calls are numbered innermost-first")
{
    auto t = parse_static("x = merge(fetch(report()), fetch('b'))\n", kTools);
    REQUIRE(t.steps.size() == 4);
    CHECK(t.steps[0] == step("report", {}, "_nested_1"));
    CHECK(t.steps[1] == step("fetch", {{"0", "_nested_1"}}, "_nested_2"));
    CHECK(t.steps[2] == step("fetch", {{"0", "'b'"}}, "_nested_3"));
    CHECK(t.steps[3]
          == step("merge", {{"0", "_nested_2"}, {"1", "_nested_3"}}, "x"));
}

TEST_CASE("nested results are named in evaluation order, not keyword order")
{
    auto t = parse_static("x = merge(beta=report(), alpha=fetch('a'))\n",
                          kTools);
    REQUIRE(t.steps.size() == 3);
    CHECK(t.steps[0] == step("report", {}, "_nested_1"));
    CHECK(t.steps[1] == step("fetch", {{"0", "'a'"}}, "_nested_2"));
    // argument text still sorts keywords
    CHECK(t.steps[2] == step("merge",
                             {{"alpha", "_nested_2"}, {"beta", "_nested_1"}},
                             "x"));
}

TEST_CASE("non-tool calls pass through as argument text")
{
    auto t = parse_static("x = fetch(str(42), len('ab'))\n", kTools);
    REQUIRE(t.steps.size() == 1);
    CHECK(t.steps[0].arguments == ArgMap{{"0", "str(42)"}, {"1", "len('ab')"}});
}

TEST_CASE("tool calls inside control flow are recorded once per call site")
{
    auto t = parse_static(
        "if fetch('a'):\n"
        "    report(kind='then')\n"
        "else:\n"
        "    report(kind='else')\n"
        "for item in fetch('b'):\n"
        "    merge(item)\n",
        kTools);
    REQUIRE(t.steps.size() == 5);
    // results consumed by control flow, never by a tool, stay unbound
    CHECK(t.steps[0] == step("fetch", {{"0", "'a'"}}, "_"));
    CHECK(t.steps[1] == step("report", {{"kind", "'then'"}}, "_"));
    CHECK(t.steps[2] == step("report", {{"kind", "'else'"}}, "_"));
    CHECK(t.steps[3] == step("fetch", {{"0", "'b'"}}, "_"));
    CHECK(t.steps[4] == step("merge", {{"0", "item"}}, "_"));
}

TEST_CASE("unparseable plans raise")
{
    CHECK_THROWS_AS(parse_static("x = fetch(\n", kTools), pycode::ParseError);
}

TEST_CASE("base64 encoding matches known vectors")
{
    using toolplan::detail::base64_encode;
    CHECK(base64_encode("") == "");
    CHECK(base64_encode("f") == "Zg==");
    CHECK(base64_encode("fo") == "Zm8=");
    CHECK(base64_encode("foo") == "Zm9v");
    CHECK(base64_encode("foobar") == "Zm9vYmFy");
    CHECK(base64_encode("sure.") == "c3VyZS4=");
}

TEST_CASE("dynamic tracing agrees with static parsing on fixed plans")
{
    auto corpus = testgen::make_tool_corpus(3);
    auto names = testgen::tool_names(corpus);
    Sandbox sandbox;
    char const * plans[] = {
        "x = tool0('a')\ntool1(x, beta=2)\n",
        "r = tool2(tool0(), k=tool1())\n",
        "r = tool2(beta=tool0(), alpha=tool1())\n",
        "v = tool0([1, 'a'], {'k': None})\nv = tool1(v)\ntool2(v, v)\n",
        "tool0()\ntool0()\n",
    };
    for (auto plan : plans) {
        auto parsed = parse_static(plan, names);
        auto traced = trace_dynamic(plan, corpus, sandbox);
        CHECK(parsed.steps == traced.steps);
    }
}

TEST_CASE("dynamic tracing is authoritative for loops")
{
    auto corpus = testgen::make_tool_corpus(1);
    Sandbox sandbox;
    std::string plan = "for i in range(3):\n    tool0(i)\n";
    auto traced = trace_dynamic(plan, corpus, sandbox);
    REQUIRE(traced.steps.size() == 3);
    CHECK(traced.steps[0].arguments == ArgMap{{"0", "0"}});
    CHECK(traced.steps[2].arguments == ArgMap{{"0", "2"}});
    // the static view sees the one syntactic call site
    CHECK(parse_static(plan, testgen::tool_names(corpus)).steps.size() == 1);
}

TEST_CASE("dynamic tracing agrees with static parsing on random programs")
{
    auto corpus = testgen::make_tool_corpus(5);
    auto names = testgen::tool_names(corpus);
    Sandbox sandbox;
    std::mt19937 rng(99);
    testgen::ProgramGenerator generator(rng, 5);
    for (int trial = 0; trial < 60; ++trial) {
        std::string plan = generator.generate();
        CAPTURE(plan);
        auto parsed = parse_static(plan, names);
        auto traced = trace_dynamic(plan, corpus, sandbox);
        REQUIRE(parsed.steps == traced.steps);
    }
}

TEST_CASE("failing plans raise a trace error with feedback")
{
    auto corpus = testgen::make_tool_corpus(1);
    Sandbox sandbox;
    try {
        trace_dynamic("tool0(undefined_name)\n", corpus, sandbox);
        FAIL("expected TraceError");
    } catch (TraceError const & e) {
        CHECK_FALSE(e.feedback.verified);
        CHECK(e.feedback.message.find("NameError") != std::string::npos);
    }
}

TEST_CASE("argument text renders bare positions and quoted keywords")
{
    CHECK(arguments_text({}) == "{}");
    CHECK(arguments_text({{"0", "'KTN02'"}}) == "{0: 'KTN02'}");
    CHECK(arguments_text({{"0", "1"}, {"code", "'KTN02'"}})
          == "{0: 1, 'code': 'KTN02'}");
}

TEST_CASE("export records follow the black-box answer shape")
{
    SolutionTrajectory t;
    t.steps = {step("fetch", {{"code", "'KTN02'"}}, "x"),
               step("report", {{"0", "x"}}, "_")};
    json record = export_tooleval("track my package", t, "gpt4_topgun");
    CHECK(record.at("query") == "track my package");
    CHECK(record.at("answer").at("method") == "gpt4_topgun");
    CHECK(record.at("answer").at("total_steps") == 2);
    CHECK(record.at("answer").at("final_answer") == "");
    auto const & details = record.at("answer_details");
    REQUIRE(details.size() == 2);
    CHECK(details[0].at("role") == "tool");
    CHECK(details[0].at("message").at("name") == "fetch");
    CHECK(details[0].at("message").at("arguments") == "{'code': 'KTN02'}");
    CHECK(details[0].at("message").at("response") == "");
    // key order is part of the format
    std::vector<std::string> keys;
    for (auto const & [key, value] : record.items()) keys.push_back(key);
    CHECK(keys == std::vector<std::string>{"query", "answer",
                                           "answer_details"});
}
