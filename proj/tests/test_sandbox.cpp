#include "doctest.h"

#include <chrono>

#include "toolplan/sandbox.hpp"

using namespace toolplan;

TEST_CASE("clean execution captures stdout")
{
    Sandbox sandbox;
    auto result = sandbox.execute("print('hello')\nprint(40 + 2)\n");
    CHECK(result.exit_status == ExitStatus::Clean);
    CHECK(result.stdout_text == "hello\n42\n");
    CHECK(feedback_from_result(result).verified);
}

TEST_CASE("exceptions produce a truncated traceback feedback")
{
    Sandbox sandbox;
    auto result = sandbox.execute("x = 1\nraise ValueError('boom')\n");
    CHECK(result.exit_status == ExitStatus::Exception);
    auto feedback = feedback_from_result(result);
    CHECK_FALSE(feedback.verified);
    CHECK(feedback.message.find("ValueError: boom") != std::string::npos);
    // only the final frame survives
    CHECK(feedback.message.rfind("  File ", 0) == 0);
    CHECK(feedback.source_excerpt == "raise ValueError('boom')");
}

TEST_CASE("deep tracebacks keep only the last frame and stay capped")
{
    Sandbox sandbox;
    auto result = sandbox.execute(
        "def a():\n    return b()\n"
        "def b():\n    return c()\n"
        "def c():\n    raise KeyError('missing" + std::string(2000, 'x')
        + "')\na()\n");
    auto feedback = feedback_from_result(result);
    CHECK(feedback.message.size() == 1000);  // cap keeps the message tail
    CHECK(feedback.message.find("\n  File ") == std::string::npos);
}

TEST_CASE("syntax errors are reported as exceptions")
{
    Sandbox sandbox;
    auto result = sandbox.execute("def broken(:\n");
    CHECK(result.exit_status == ExitStatus::Exception);
    auto feedback = feedback_from_result(result);
    CHECK(feedback.message.find("SyntaxError") != std::string::npos);
}

TEST_CASE("wall-clock timeout kills the process within the bound")
{
    Sandbox sandbox;
    SandboxLimits limits;
    limits.wall_time_seconds = 2.0;
    auto start = std::chrono::steady_clock::now();
    auto result = sandbox.execute("while True:\n    pass\n", limits);
    auto elapsed_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                          std::chrono::steady_clock::now() - start)
                          .count();
    CHECK(result.exit_status == ExitStatus::Timeout);
    CHECK(elapsed_ms < 2500);
    auto feedback = feedback_from_result(result);
    CHECK(feedback.message == "execution exceeded 2 seconds");
}

TEST_CASE("network access is denied")
{
    Sandbox sandbox;
    auto result = sandbox.execute(
        "import socket\n"
        "socket.create_connection(('127.0.0.1', 80))\n");
    CHECK(result.exit_status == ExitStatus::Exception);
    auto feedback = feedback_from_result(result);
    CHECK(feedback.message.find("network access is disabled")
          != std::string::npos);
}

TEST_CASE("urllib is blocked through the socket layer")
{
    Sandbox sandbox;
    auto result = sandbox.execute(
        "import urllib.request\n"
        "urllib.request.urlopen('http://127.0.0.1:1/', timeout=1)\n");
    CHECK(result.exit_status == ExitStatus::Exception);
}

TEST_CASE("executions share no interpreter state")
{
    Sandbox sandbox;
    auto first = sandbox.execute("leak = 'secret'\nprint('set')\n");
    CHECK(first.exit_status == ExitStatus::Clean);
    auto second = sandbox.execute("print(leak)\n");
    CHECK(second.exit_status == ExitStatus::Exception);
    CHECK(second.stderr_text.find("NameError") != std::string::npos);
}

TEST_CASE("address-space limit turns huge allocations into resource faults")
{
    Sandbox sandbox;
    SandboxLimits limits;
    limits.memory_bytes = 256L * 1024 * 1024;
    auto result = sandbox.execute("blob = bytearray(1 << 30)\n", limits);
    CHECK(result.exit_status == ExitStatus::ResourceLimit);
    CHECK_FALSE(feedback_from_result(result).verified);
}

TEST_CASE("missing interpreter raises instead of reporting feedback")
{
    Sandbox sandbox("/nonexistent/python-binary");
    CHECK_THROWS_AS(sandbox.execute("print(1)\n"), SandboxError);
}

TEST_CASE("invalid limits are rejected")
{
    Sandbox sandbox;
    SandboxLimits limits;
    limits.wall_time_seconds = 0;
    CHECK_THROWS_AS(sandbox.execute("print(1)\n", limits), SandboxError);
}

TEST_CASE("fractional limits format cleanly in feedback")
{
    CHECK(format_seconds(2.0) == "2");
    CHECK(format_seconds(0.5) == "0.5");
    CHECK(format_seconds(10.0) == "10");
}
