#pragma once
// Task-tool hosting behind a uniform dispatch interface: deterministic mock
// adapters for replay, local adapters (subprocess shells, workspace editor),
// and the observation truncation/compression policies.

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include "restage/config_model.hpp"
#include "restage/react_codec.hpp"

namespace restage {

struct Observation {
    std::string body;
    bool truncated = false;
    std::string source_tool;
    long latency_ms = 0;
};

// One think/act/observe step of a stage trace. raw_assistant keeps the exact
// completion text for training-data export.
struct TraceStep {
    std::string thought;
    ToolCall call;
    Observation observation;
    std::string raw_assistant;
    std::optional<double> logprob;
};

inline std::size_t line_count(const std::string& text) {
    if (text.empty()) return 0;
    return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')) + 1;
}

// Head-preserving truncation. N in the marker is the overflow beyond the cap;
// the head shrinks by the marker length so the result is exactly `cap` chars.
inline std::string truncate_message(const std::string& body, std::size_t char_cap) {
    if (body.size() <= char_cap) return body;
    const std::size_t removed = body.size() - char_cap;
    const std::string marker = "... (truncated " + std::to_string(removed) + " characters) ...";
    if (marker.size() >= char_cap) {
        throw Error(Errc::config_error, "char cap smaller than truncation marker");
    }
    return body.substr(0, char_cap - marker.size()) + marker;
}

// Keeps the most recent `keep` observations intact and replaces earlier ones
// with a line-count placeholder. Thoughts and actions are untouched; step
// count and order are preserved.
inline std::vector<TraceStep> compress_old_observations(std::vector<TraceStep> steps,
                                                        std::size_t keep) {
    if (steps.size() <= keep) return steps;
    const std::size_t cutoff = steps.size() - keep;
    for (std::size_t i = 0; i < cutoff; ++i) {
        const std::size_t lines = line_count(steps[i].observation.body);
        steps[i].observation.body =
            "Old environment output: (" + std::to_string(lines) + " lines omitted)";
        steps[i].observation.truncated = true;
    }
    return steps;
}

struct MockToolEntry {
    std::string tool;
    std::string match;  // substring of the serialized arguments; empty matches all
    std::string body;
};

// Deterministic scripted tool responses: the first unconsumed entry whose
// matcher fits the call wins; exhaustion falls back to default_body so
// generated call sequences never fail.
class MockEnvironment {
public:
    explicit MockEnvironment(std::vector<MockToolEntry> entries,
                             std::string default_body = "No scripted response available.")
        : entries_(std::move(entries)), default_body_(std::move(default_body)) {
        consumed_.assign(entries_.size(), false);
    }

    std::string next(const ToolCall& call) {
        const std::string args = call.arguments.dump();
        for (std::size_t i = 0; i < entries_.size(); ++i) {
            if (consumed_[i]) continue;
            if (entries_[i].tool != call.name) continue;
            if (!entries_[i].match.empty() && args.find(entries_[i].match) == std::string::npos) {
                continue;
            }
            consumed_[i] = true;
            return entries_[i].body;
        }
        return default_body_;
    }

private:
    std::vector<MockToolEntry> entries_;
    std::vector<bool> consumed_;
    std::string default_body_;
};

// Endpoints and knobs for the networked adapters (see live_tools.hpp).
struct LiveToolOptions {
    std::string search_base_url = "http://127.0.0.1:8080";
    std::string search_path = "/search";
    std::string reader_base_url = "http://127.0.0.1:3000";
    int max_results_per_query = 10;
    int http_timeout_s = 60;
};

// Per-run tool state. Owned by exactly one running agent; never shared.
// An edit-history entry of nullopt means the file did not exist before the
// edit (i.e. the edit was a create).
struct ToolSession {
    std::shared_ptr<MockEnvironment> mock;
    std::filesystem::path workspace;
    std::map<std::string, std::vector<std::optional<std::string>>> edit_history;
    std::chrono::milliseconds default_timeout{120000};
};

enum class AdapterKind { mock, live };

struct ToolAdapter {
    ToolSchema schema;
    AdapterKind kind = AdapterKind::mock;
    std::function<std::string(const ToolCall&, ToolSession&)> execute;
};

// Read-mostly after construction; dispatch converts every failure into an
// error-text observation so the agent can self-correct in the loop.
class ToolRegistry {
public:
    void register_tool(ToolAdapter adapter) {
        const std::string name = adapter.schema.name;
        adapters_[name] = std::move(adapter);
    }

    bool has(const std::string& name) const { return adapters_.count(name) > 0; }

    const ToolSchema& schema(const std::string& name) const {
        auto it = adapters_.find(name);
        if (it == adapters_.end()) throw Error(Errc::tool_not_registered, name);
        return it->second.schema;
    }

    Observation dispatch(const ToolCall& call, ToolSession& session) const {
        Observation obs;
        obs.source_tool = call.name;
        const auto start = std::chrono::steady_clock::now();
        auto it = adapters_.find(call.name);
        if (it == adapters_.end()) {
            obs.body = "Error: ToolNotRegistered: tool '" + call.name + "' is not registered.";
        } else {
            try {
                obs.body = it->second.execute(call, session);
            } catch (const Error& e) {
                obs.body = std::string("Error: ") + e.what();
            } catch (const std::exception& e) {
                obs.body = "Error: ToolFailure: " + std::string(e.what());
            }
        }
        obs.latency_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                             std::chrono::steady_clock::now() - start)
                             .count();
        return obs;
    }

private:
    std::map<std::string, ToolAdapter> adapters_;
};

// ---------------------------------------------------------------------------
// Subprocess runner (default sandbox for bash / code_interpreter)
// ---------------------------------------------------------------------------

struct SubprocessResult {
    int exit_code = -1;
    std::string output;  // stdout + stderr interleaved
    bool timed_out = false;
};

inline SubprocessResult run_subprocess(const std::vector<std::string>& argv,
                                       const std::filesystem::path& cwd,
                                       std::chrono::milliseconds timeout) {
    int fds[2];
    if (pipe(fds) != 0) throw Error(Errc::tool_failure, "pipe() failed");
    pid_t pid = fork();
    if (pid < 0) {
        close(fds[0]);
        close(fds[1]);
        throw Error(Errc::tool_failure, "fork() failed");
    }
    if (pid == 0) {
        close(fds[0]);
        dup2(fds[1], STDOUT_FILENO);
        dup2(fds[1], STDERR_FILENO);
        close(fds[1]);
        if (!cwd.empty()) {
            if (chdir(cwd.c_str()) != 0) _exit(126);
        }
        std::vector<char*> cargv;
        for (const auto& a : argv) cargv.push_back(const_cast<char*>(a.c_str()));
        cargv.push_back(nullptr);
        execvp(cargv[0], cargv.data());
        _exit(127);
    }
    close(fds[1]);

    SubprocessResult result;
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    char buf[4096];
    bool open = true;
    while (open) {
        auto remaining = std::chrono::duration_cast<std::chrono::milliseconds>(
            deadline - std::chrono::steady_clock::now());
        if (remaining.count() <= 0) {
            kill(pid, SIGKILL);
            result.timed_out = true;
            break;
        }
        struct pollfd pfd{fds[0], POLLIN, 0};
        int rc = poll(&pfd, 1, static_cast<int>(std::min<long long>(remaining.count(), 250)));
        if (rc > 0) {
            ssize_t n = read(fds[0], buf, sizeof(buf));
            if (n > 0) {
                result.output.append(buf, static_cast<std::size_t>(n));
            } else {
                open = false;
            }
        }
    }
    close(fds[0]);
    int status = 0;
    waitpid(pid, &status, 0);
    if (!result.timed_out && WIFEXITED(status)) result.exit_code = WEXITSTATUS(status);
    return result;
}

// ---------------------------------------------------------------------------
// Local adapters
// ---------------------------------------------------------------------------

namespace tools {

inline std::chrono::milliseconds call_timeout(const ToolCall& call, const ToolSession& session) {
    if (call.arguments.contains("timeout") && call.arguments["timeout"].is_number()) {
        return std::chrono::seconds(call.arguments["timeout"].get<int>());
    }
    return session.default_timeout;
}

inline std::string execute_bash(const ToolCall& call, ToolSession& session) {
    const std::string command = call.arguments.at("command").get<std::string>();
    std::filesystem::path cwd = session.workspace;
    if (call.arguments.contains("cwd")) {
        cwd = call.arguments["cwd"].get<std::string>();
    }
    auto result = run_subprocess({"bash", "-c", command}, cwd, call_timeout(call, session));
    if (result.timed_out) {
        throw Error(Errc::tool_timeout, "bash command exceeded the timeout");
    }
    std::string out = result.output;
    if (result.exit_code != 0) {
        out += (out.empty() ? "" : "\n");
        out += "(exit code " + std::to_string(result.exit_code) + ")";
    }
    return out.empty() ? "(no output)" : out;
}

inline std::string code_interpreter(const ToolCall& call, ToolSession& session) {
    const std::string code = call.arguments.at("code").get<std::string>();
    std::filesystem::create_directories(session.workspace);
    const auto script = session.workspace / ".restage_cell.py";
    {
        std::ofstream out(script, std::ios::binary | std::ios::trunc);
        out << code;
    }
    auto result = run_subprocess({"python3", script.string()}, session.workspace,
                                 call_timeout(call, session));
    if (result.timed_out) {
        throw Error(Errc::tool_timeout, "python execution exceeded the timeout");
    }
    std::string out = result.output;
    if (result.exit_code != 0) {
        out += (out.empty() ? "" : "\n");
        out += "(exit code " + std::to_string(result.exit_code) + ")";
    }
    return out.empty() ? "(no output)" : out;
}

inline std::filesystem::path resolve_in_workspace(const std::string& raw,
                                                  const ToolSession& session) {
    std::filesystem::path p(raw);
    if (p.is_relative()) p = session.workspace / p;
    return p;
}

inline std::string numbered_view(const std::string& content, long start, long end) {
    std::istringstream in(content);
    std::ostringstream out;
    std::string line;
    long n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (n < start) continue;
        if (end != -1 && n > end) break;
        out << n << "\t" << line << "\n";
    }
    return out.str();
}

inline std::string str_replace_editor(const ToolCall& call, ToolSession& session) {
    const std::string command = call.arguments.at("command").get<std::string>();
    const auto path = resolve_in_workspace(call.arguments.at("path").get<std::string>(), session);

    auto read_file = [&]() {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw Error(Errc::tool_failure, "cannot open " + path.string());
        std::ostringstream buf;
        buf << in.rdbuf();
        return buf.str();
    };
    auto write_file = [&](const std::string& content) {
        std::filesystem::create_directories(path.parent_path());
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out << content;
    };

    if (command == "view") {
        if (std::filesystem::is_directory(path)) {
            std::ostringstream out;
            out << "Directory " << path.string() << ":\n";
            std::vector<std::string> names;
            for (const auto& e : std::filesystem::directory_iterator(path)) {
                names.push_back(e.path().filename().string());
            }
            std::sort(names.begin(), names.end());
            for (const auto& n : names) out << n << "\n";
            return out.str();
        }
        long start = 1, end = -1;
        if (call.arguments.contains("view_range")) {
            const auto& range = call.arguments["view_range"];
            if (!range.is_array() || range.size() != 2) {
                throw Error(Errc::tool_failure, "view_range must be [start, end]");
            }
            start = range[0].get<long>();
            end = range[1].get<long>();
        }
        return numbered_view(read_file(), start, end);
    }
    if (command == "create") {
        if (std::filesystem::exists(path)) {
            throw Error(Errc::tool_failure, "file already exists: " + path.string());
        }
        if (!call.arguments.contains("file_text")) {
            throw Error(Errc::tool_failure, "create requires file_text");
        }
        write_file(call.arguments["file_text"].get<std::string>());
        session.edit_history[path.string()].push_back(std::nullopt);
        return "File created: " + path.string();
    }
    if (command == "str_replace") {
        if (!call.arguments.contains("old_str")) {
            throw Error(Errc::tool_failure, "str_replace requires old_str");
        }
        const std::string old_str = call.arguments["old_str"].get<std::string>();
        const std::string new_str = call.arguments.value("new_str", std::string{});
        std::string content = read_file();
        std::size_t first = content.find(old_str);
        if (first == std::string::npos) {
            throw Error(Errc::tool_failure, "old_str not found in " + path.string());
        }
        if (content.find(old_str, first + 1) != std::string::npos) {
            throw Error(Errc::tool_failure, "old_str is not unique in " + path.string());
        }
        session.edit_history[path.string()].push_back(content);
        content.replace(first, old_str.size(), new_str);
        write_file(content);
        return "Edited " + path.string();
    }
    if (command == "insert") {
        if (!call.arguments.contains("insert_line") || !call.arguments.contains("new_str")) {
            throw Error(Errc::tool_failure, "insert requires insert_line and new_str");
        }
        const long at = call.arguments["insert_line"].get<long>();
        const std::string new_str = call.arguments["new_str"].get<std::string>();
        std::string content = read_file();
        session.edit_history[path.string()].push_back(content);
        std::vector<std::string> lines;
        {
            std::istringstream in(content);
            std::string line;
            while (std::getline(in, line)) lines.push_back(line);
        }
        if (at < 0 || at > static_cast<long>(lines.size())) {
            throw Error(Errc::tool_failure, "insert_line out of range");
        }
        lines.insert(lines.begin() + at, new_str);
        std::string rebuilt;
        for (const auto& l : lines) rebuilt += l + "\n";
        write_file(rebuilt);
        return "Inserted text at line " + std::to_string(at) + " in " + path.string();
    }
    if (command == "undo_edit") {
        auto it = session.edit_history.find(path.string());
        if (it == session.edit_history.end() || it->second.empty()) {
            throw Error(Errc::tool_failure, "no edit history for " + path.string());
        }
        const std::optional<std::string> previous = it->second.back();
        it->second.pop_back();
        if (!previous) {
            std::filesystem::remove(path);
            return "Reverted creation of " + path.string();
        }
        write_file(*previous);
        return "Reverted last edit of " + path.string();
    }
    throw Error(Errc::tool_failure, "unknown editor command: " + command);
}

}  // namespace tools

// Registers mock adapters for every task tool in the pool; responses come
// from the session's MockEnvironment.
inline ToolRegistry make_mock_registry(const GlobalToolPool& pool) {
    ToolRegistry registry;
    for (const auto& name : pool.names()) {
        ToolAdapter adapter;
        adapter.schema = pool.schema(name);
        adapter.kind = AdapterKind::mock;
        adapter.execute = [](const ToolCall& call, ToolSession& session) -> std::string {
            if (!session.mock) {
                throw Error(Errc::tool_failure, "no mock environment attached to this session");
            }
            return session.mock->next(call);
        };
        registry.register_tool(std::move(adapter));
    }
    return registry;
}

}  // namespace restage
