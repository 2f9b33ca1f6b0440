#include "evoalloc/mutation.hpp"

#include <cerrno>
#include <chrono>
#include <csignal>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <fcntl.h>
#include <poll.h>
#include <sys/resource.h>
#include <sys/wait.h>
#include <unistd.h>

namespace evoalloc {

namespace {

// Drain a nonblocking fd into a string; returns false when the fd is done.
bool drain(int fd, std::string& dst) {
    char buf[4096];
    for (;;) {
        ssize_t n = read(fd, buf, sizeof buf);
        if (n > 0) {
            dst.append(buf, static_cast<std::size_t>(n));
            continue;
        }
        if (n == 0) return false;
        if (errno == EAGAIN || errno == EWOULDBLOCK) return true;
        return false;
    }
}

std::string last_nonempty_line(const std::string& text) {
    std::size_t end = text.find_last_not_of(" \t\r\n");
    if (end == std::string::npos) return {};
    std::size_t begin = text.rfind('\n', end);
    begin = (begin == std::string::npos) ? 0 : begin + 1;
    return text.substr(begin, end - begin + 1);
}

} // namespace

ExecutionResult execute_candidate(const std::string& program, Task task, const std::string& interpreter,
                                  const std::string& scratch_dir, const SandboxLimits& limits) {
    ExecutionResult result;

    std::error_code ec;
    std::filesystem::create_directories(scratch_dir, ec);
    if (ec) throw environment_error("cannot create scratch dir " + scratch_dir + ": " + ec.message());

    std::filesystem::path script = std::filesystem::path(scratch_dir) / "candidate.py";
    {
        std::ofstream out(script);
        if (!out) throw environment_error("cannot write candidate program to " + script.string());
        out << program;
    }

    int out_pipe[2], err_pipe[2];
    if (pipe(out_pipe) != 0 || pipe(err_pipe) != 0)
        throw environment_error("pipe() failed");

    pid_t pid = fork();
    if (pid < 0) throw environment_error("fork() failed");
    if (pid == 0) {
        // child: confine cwd to the scratch dir, cap the address space,
        // detach stdin, route stdout/stderr to the parent pipes
        if (chdir(scratch_dir.c_str()) != 0) _exit(127);
        struct rlimit rl;
        rl.rlim_cur = rl.rlim_max = static_cast<rlim_t>(limits.memory_bytes);
        setrlimit(RLIMIT_AS, &rl);
        dup2(out_pipe[1], STDOUT_FILENO);
        dup2(err_pipe[1], STDERR_FILENO);
        close(out_pipe[0]);
        close(out_pipe[1]);
        close(err_pipe[0]);
        close(err_pipe[1]);
        int devnull = open("/dev/null", O_RDONLY);
        if (devnull >= 0) dup2(devnull, STDIN_FILENO);
        execlp(interpreter.c_str(), interpreter.c_str(), "candidate.py", static_cast<char*>(nullptr));
        _exit(127);
    }

    close(out_pipe[1]);
    close(err_pipe[1]);
    fcntl(out_pipe[0], F_SETFL, O_NONBLOCK);
    fcntl(err_pipe[0], F_SETFL, O_NONBLOCK);

    auto deadline = std::chrono::steady_clock::now() +
                    std::chrono::milliseconds(static_cast<long>(limits.wall_seconds * 1000.0));
    bool out_open = true, err_open = true;
    bool timed_out = false;
    while (out_open || err_open) {
        auto now = std::chrono::steady_clock::now();
        if (now >= deadline) {
            timed_out = true;
            kill(pid, SIGKILL);
            break;
        }
        struct pollfd fds[2];
        nfds_t nfds = 0;
        if (out_open) fds[nfds++] = {out_pipe[0], POLLIN, 0};
        if (err_open) fds[nfds++] = {err_pipe[0], POLLIN, 0};
        int wait_ms = static_cast<int>(
            std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now).count());
        int rc = poll(fds, nfds, std::max(1, std::min(wait_ms, 200)));
        if (rc < 0 && errno != EINTR) break;
        if (out_open) out_open = drain(out_pipe[0], result.stdout_text);
        if (err_open) err_open = drain(err_pipe[0], result.stderr_text);
    }
    // final drain after exit/kill
    drain(out_pipe[0], result.stdout_text);
    drain(err_pipe[0], result.stderr_text);
    close(out_pipe[0]);
    close(err_pipe[0]);

    int status = 0;
    waitpid(pid, &status, 0);

    if (timed_out) {
        result.reason = "timeout after " + std::to_string(limits.wall_seconds) + "s";
        return result;
    }
    if (WIFEXITED(status) && WEXITSTATUS(status) == 127) {
        throw environment_error("sandbox interpreter unavailable: " + interpreter);
    }
    if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) {
        result.reason = WIFSIGNALED(status)
                            ? ("killed by signal " + std::to_string(WTERMSIG(status)))
                            : ("exit status " + std::to_string(WEXITSTATUS(status)));
        return result;
    }

    std::string line = last_nonempty_line(result.stdout_text);
    if (line.empty()) {
        result.reason = "no output";
        return result;
    }
    ParsedConfiguration parsed = parse_configuration(task, line);
    if (!parsed.config) {
        result.reason = "parse failure: " + parsed.error;
        return result;
    }
    result.ok = true;
    result.config = std::move(parsed.config);
    return result;
}

} // namespace evoalloc
