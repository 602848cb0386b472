#pragma once

// Isolated execution of generated code in a fresh interpreter subprocess.
// Each run gets a scratch working directory, a wall-clock limit enforced by
// the parent, an address-space limit, and a socket layer that refuses
// connections. Process isolation is the boundary; this is not a jail.

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>

#include "toolplan/model.hpp"

namespace toolplan {

enum class ExitStatus { Clean, Exception, Timeout, ResourceLimit };

struct ExecutionResult {
    ExitStatus exit_status = ExitStatus::Clean;
    std::string stdout_text;
    std::string stderr_text;
    long duration_ms = 0;
    double wall_limit_seconds = 0;  // the limit this run was executed under
};

struct SandboxLimits {
    double wall_time_seconds = 10.0;
    long memory_bytes = 512L * 1024 * 1024;
};

struct SandboxError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace detail {

inline constexpr char const * kRunnerSource = R"PY(
import sys, traceback

try:
    import resource
    _mem = int(sys.argv[2])
    try:
        resource.setrlimit(resource.RLIMIT_AS, (_mem, _mem))
    except (ValueError, OSError):
        pass
except ImportError:
    pass

import socket

def _denied(*args, **kwargs):
    raise OSError('network access is disabled in the sandbox')

socket.socket = _denied
socket.create_connection = _denied
socket.socketpair = _denied

with open(sys.argv[1], 'r') as _f:
    _source = _f.read()

try:
    _code = compile(_source, 'unit.py', 'exec')
    exec(_code, {'__name__': '__main__'})
except MemoryError:
    traceback.print_exc()
    sys.exit(4)
except SystemExit:
    raise
except BaseException:
    traceback.print_exc()
    sys.exit(1)
)PY";

inline constexpr char const * kExecFailedMarker = "__toolplan_exec_failed__";

}  // namespace detail

class Sandbox {
public:
    Sandbox()
    {
        if (char const * p = std::getenv("TOOLPLAN_PYTHON"); p && *p)
            interpreter_ = p;
    }
    explicit Sandbox(std::string interpreter)
    : interpreter_(std::move(interpreter))
    {}

    std::string const & interpreter() const { return interpreter_; }

    ExecutionResult execute(std::string const & unit,
                            SandboxLimits const & limits = {}) const
    {
        namespace fs = std::filesystem;
        if (limits.wall_time_seconds <= 0 || limits.memory_bytes <= 0)
            throw SandboxError("limits must be positive");

        char scratch_template[] = "/tmp/toolplan-sbx-XXXXXX";
        char * scratch_c = ::mkdtemp(scratch_template);
        if (!scratch_c) throw SandboxError("cannot create scratch directory");
        fs::path scratch(scratch_c);
        struct ScratchGuard {
            fs::path path;
            ~ScratchGuard()
            {
                std::error_code ec;
                fs::remove_all(path, ec);
            }
        } guard{scratch};

        write_file(scratch / "unit.py", unit);
        write_file(scratch / "runner.py", detail::kRunnerSource);

        int out_pipe[2], err_pipe[2];
        if (::pipe(out_pipe) != 0 || ::pipe(err_pipe) != 0)
            throw SandboxError("cannot create pipes");

        auto start = std::chrono::steady_clock::now();
        pid_t pid = ::fork();
        if (pid < 0) throw SandboxError("fork failed");
        if (pid == 0) {
            ::setpgid(0, 0);
            ::dup2(out_pipe[1], STDOUT_FILENO);
            ::dup2(err_pipe[1], STDERR_FILENO);
            ::close(out_pipe[0]);
            ::close(out_pipe[1]);
            ::close(err_pipe[0]);
            ::close(err_pipe[1]);
            if (::chdir(scratch.c_str()) != 0) ::_exit(126);
            std::string mem = std::to_string(limits.memory_bytes);
            ::execlp(interpreter_.c_str(), interpreter_.c_str(), "runner.py",
                     "unit.py", mem.c_str(), static_cast<char *>(nullptr));
            // exec failed; report and bail without running atexit handlers
            ssize_t ignored = ::write(STDERR_FILENO, detail::kExecFailedMarker,
                                      std::strlen(detail::kExecFailedMarker));
            (void)ignored;
            ::_exit(127);
        }

        ::close(out_pipe[1]);
        ::close(err_pipe[1]);

        ExecutionResult result;
        result.wall_limit_seconds = limits.wall_time_seconds;
        bool timed_out = drain(out_pipe[0], err_pipe[0], result, start,
                               limits.wall_time_seconds, pid);
        ::close(out_pipe[0]);
        ::close(err_pipe[0]);

        int status = 0;
        ::waitpid(pid, &status, 0);
        result.duration_ms = static_cast<long>(
            std::chrono::duration_cast<std::chrono::milliseconds>(
                std::chrono::steady_clock::now() - start)
                .count());

        if (timed_out) {
            result.exit_status = ExitStatus::Timeout;
            return result;
        }
        if (WIFEXITED(status)) {
            int code = WEXITSTATUS(status);
            if (code == 0) {
                result.exit_status = ExitStatus::Clean;
            } else if (code == 4) {
                result.exit_status = ExitStatus::ResourceLimit;
            } else if (code == 127
                       && result.stderr_text.find(detail::kExecFailedMarker)
                              != std::string::npos) {
                throw SandboxError("interpreter not found: " + interpreter_);
            } else {
                result.exit_status = ExitStatus::Exception;
            }
        } else {
            result.exit_status = ExitStatus::Exception;
        }
        return result;
    }

private:
    static void write_file(std::filesystem::path const & path,
                           std::string_view content)
    {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw SandboxError("cannot write " + path.string());
        out << content;
    }

    // Reads both pipes until EOF, killing the process group at the deadline.
    // Returns true when the deadline fired.
    static bool drain(int out_fd, int err_fd, ExecutionResult & result,
                      std::chrono::steady_clock::time_point start,
                      double wall_time_seconds, pid_t pid)
    {
        bool timed_out = false;
        bool out_open = true, err_open = true;
        auto deadline = start
                        + std::chrono::milliseconds(
                            static_cast<long>(wall_time_seconds * 1000));
        char buffer[4096];
        while (out_open || err_open) {
            auto now = std::chrono::steady_clock::now();
            long remaining_ms =
                timed_out ? 200
                          : static_cast<long>(
                              std::chrono::duration_cast<std::chrono::milliseconds>(
                                  deadline - now)
                                  .count());
            if (!timed_out && remaining_ms <= 0) {
                ::kill(-pid, SIGKILL);
                ::kill(pid, SIGKILL);
                timed_out = true;
                remaining_ms = 200;
            }
            struct pollfd fds[2];
            nfds_t n = 0;
            if (out_open) fds[n++] = {out_fd, POLLIN, 0};
            if (err_open) fds[n++] = {err_fd, POLLIN, 0};
            int ready = ::poll(fds, n, static_cast<int>(remaining_ms));
            if (ready < 0) {
                if (errno == EINTR) continue;
                break;
            }
            if (ready == 0) continue;  // deadline handling on next pass
            for (nfds_t i = 0; i < n; ++i) {
                if (!(fds[i].revents & (POLLIN | POLLHUP))) continue;
                ssize_t got = ::read(fds[i].fd, buffer, sizeof(buffer));
                if (got > 0) {
                    auto & sink = fds[i].fd == out_fd ? result.stdout_text
                                                      : result.stderr_text;
                    sink.append(buffer, static_cast<std::size_t>(got));
                } else {
                    (fds[i].fd == out_fd ? out_open : err_open) = false;
                }
            }
        }
        return timed_out;
    }

    std::string interpreter_ = "python3";
};

// ---------------------------------------------------------------------------
// Feedback conversion. Exceptions keep the final traceback frame plus the
// error line, capped at 1000 characters; full dumps degrade reflection
// prompts.

inline std::string format_seconds(double seconds)
{
    if (seconds == static_cast<long>(seconds))
        return std::to_string(static_cast<long>(seconds));
    std::string s = std::to_string(seconds);
    while (!s.empty() && s.back() == '0') s.pop_back();
    if (!s.empty() && s.back() == '.') s.pop_back();
    return s;
}

inline FeedbackRecord feedback_from_result(ExecutionResult const & result)
{
    FeedbackRecord fb;
    fb.duration_ms = result.duration_ms;
    switch (result.exit_status) {
        case ExitStatus::Clean:
            fb.verified = true;
            return fb;
        case ExitStatus::Timeout:
            fb.message = "execution exceeded "
                         + format_seconds(result.wall_limit_seconds)
                         + " seconds";
            return fb;
        case ExitStatus::ResourceLimit:
        case ExitStatus::Exception:
            break;
    }
    // Last "  File ..." frame to the end of the traceback.
    std::string const & err = result.stderr_text;
    std::size_t frame = err.rfind("\n  File ");
    std::string message;
    if (frame != std::string::npos) {
        message = err.substr(frame + 1);
    } else if (err.rfind("  File ", 0) == 0) {
        message = err;
    } else {
        message = err;
    }
    // offending line: the indented source line inside the kept frame
    std::size_t nl = message.find('\n');
    if (nl != std::string::npos) {
        std::size_t line_end = message.find('\n', nl + 1);
        std::string candidate = message.substr(
            nl + 1, line_end == std::string::npos ? std::string::npos
                                                  : line_end - nl - 1);
        if (candidate.rfind("    ", 0) == 0)
            fb.source_excerpt = candidate.substr(4);
    }
    while (!message.empty()
           && (message.back() == '\n' || message.back() == '\r'))
        message.pop_back();
    if (message.size() > 1000) message = message.substr(message.size() - 1000);
    if (message.empty()) message = "execution failed";
    fb.message = std::move(message);
    return fb;
}

}  // namespace toolplan
