#pragma once
// Live adapters for the networked tools: a SearxNG-compatible search client,
// a reader-endpoint visit client with goal-directed extraction through the
// LLM backend, and the workspace file analyzer. None of these re-implement
// the upstream services; they are thin clients behind the tool contracts.

#include <httplib.h>

#include "restage/llm_backend.hpp"
#include "restage/tool_registry.hpp"

namespace restage {

namespace tools {

inline std::string url_encode(const std::string& value) {
    static const char* hex = "0123456789ABCDEF";
    std::string out;
    for (unsigned char c : value) {
        if (isalnum(c) || c == '-' || c == '_' || c == '.' || c == '~') {
            out += static_cast<char>(c);
        } else {
            out += '%';
            out += hex[c >> 4];
            out += hex[c & 15];
        }
    }
    return out;
}

inline std::vector<std::string> string_or_array(const json& value) {
    std::vector<std::string> out;
    if (value.is_string()) {
        out.push_back(value.get<std::string>());
    } else if (value.is_array()) {
        for (const auto& v : value) out.push_back(v.get<std::string>());
    }
    return out;
}

inline std::string live_search(const ToolCall& call, const LiveToolOptions& options) {
    httplib::Client client(options.search_base_url);
    client.set_read_timeout(options.http_timeout_s, 0);
    std::string out;
    for (const auto& query : string_or_array(call.arguments.at("query"))) {
        auto res = client.Get(options.search_path + "?format=json&q=" + url_encode(query));
        if (!res) throw Error(Errc::tool_failure, "search endpoint unreachable");
        if (res->status != 200) {
            throw Error(Errc::tool_failure, "search returned HTTP " + std::to_string(res->status));
        }
        json reply = json::parse(res->body, nullptr, false);
        if (reply.is_discarded()) throw Error(Errc::tool_failure, "search returned invalid JSON");
        if (!out.empty()) out += "\n\n";
        out += "Search results for \"" + query + "\":";
        int rank = 0;
        for (const auto& result : reply.value("results", json::array())) {
            if (++rank > options.max_results_per_query) break;
            out += "\n" + std::to_string(rank) + ". " + result.value("title", std::string{});
            out += "\nURL: " + result.value("url", std::string{});
            out += "\nSummary: " + result.value("content", std::string{});
        }
        if (rank == 0) out += "\n(no results)";
    }
    return out;
}

inline std::string extract_with_backend(LlmBackend& backend, const SamplingParams& params,
                                        const std::string& goal, const std::string& content) {
    std::vector<ChatMessage> messages{
        {Role::system,
         "You extract information from documents. Return only the evidence relevant to the "
         "stated goal, quoting key facts; say NOT FOUND if the document does not contain it."},
        {Role::user, "Goal: " + goal + "\n\nDocument:\n" + content}};
    return backend.complete(messages, params).text;
}

inline std::string live_visit(const ToolCall& call, const LiveToolOptions& options,
                              LlmBackend* extraction_backend, const SamplingParams& params) {
    const std::string goal = call.arguments.at("goal").get<std::string>();
    httplib::Client client(options.reader_base_url);
    client.set_read_timeout(options.http_timeout_s, 0);
    std::string out;
    for (const auto& url : string_or_array(call.arguments.at("url"))) {
        auto res = client.Get("/" + url);
        if (!res) throw Error(Errc::tool_failure, "reader endpoint unreachable");
        if (res->status != 200) {
            throw Error(Errc::tool_failure, "reader returned HTTP " + std::to_string(res->status));
        }
        std::string digest = res->body;
        if (extraction_backend) {
            digest = extract_with_backend(*extraction_backend, params, goal, digest);
        }
        if (!out.empty()) out += "\n\n";
        out += "Content from " + url + ":\n" + digest;
    }
    return out;
}

inline bool looks_binary(const std::string& content) {
    const std::size_t probe = std::min<std::size_t>(content.size(), 8192);
    for (std::size_t i = 0; i < probe; ++i) {
        if (content[i] == '\0') return true;
    }
    return false;
}

inline std::string live_file_analyzer(const ToolCall& call, ToolSession& session,
                                      LlmBackend* extraction_backend,
                                      const SamplingParams& params) {
    const std::string goal = call.arguments.at("goal").get<std::string>();
    const auto path = resolve_in_workspace(call.arguments.at("file_path").get<std::string>(),
                                           session);
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::tool_failure, "cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    const std::string content = buf.str();
    if (looks_binary(content)) {
        throw Error(Errc::tool_failure,
                    "image/binary analysis requires a vision model, which this build does not ship");
    }
    if (extraction_backend) {
        return extract_with_backend(*extraction_backend, params, goal, content);
    }
    return "Content of " + path.filename().string() + ":\n" + content;
}

}  // namespace tools

// Live registry: search and visit are HTTP clients against configurable
// endpoints; code_interpreter and bash run in the subprocess sandbox;
// str_replace_editor and file_analyzer operate on the session workspace.
inline ToolRegistry make_live_registry(const GlobalToolPool& pool, LiveToolOptions options,
                                       std::shared_ptr<LlmBackend> extraction_backend = nullptr,
                                       SamplingParams extraction_params = SamplingParams::runtime()) {
    ToolRegistry registry;
    auto opts = std::make_shared<LiveToolOptions>(std::move(options));
    for (const auto& name : pool.names()) {
        ToolAdapter adapter;
        adapter.schema = pool.schema(name);
        adapter.kind = AdapterKind::live;
        if (name == "search") {
            adapter.execute = [opts](const ToolCall& call, ToolSession&) {
                return tools::live_search(call, *opts);
            };
        } else if (name == "visit") {
            adapter.execute = [opts, extraction_backend, extraction_params](const ToolCall& call,
                                                                            ToolSession&) {
                return tools::live_visit(call, *opts, extraction_backend.get(), extraction_params);
            };
        } else if (name == "execute_bash") {
            adapter.execute = tools::execute_bash;
        } else if (name == "code_interpreter") {
            adapter.execute = tools::code_interpreter;
        } else if (name == "str_replace_editor") {
            adapter.execute = tools::str_replace_editor;
        } else if (name == "file_analyzer") {
            adapter.execute = [extraction_backend, extraction_params](const ToolCall& call,
                                                                      ToolSession& session) {
                return tools::live_file_analyzer(call, session, extraction_backend.get(),
                                                 extraction_params);
            };
        } else {
            adapter.execute = [](const ToolCall& call, ToolSession&) -> std::string {
                throw Error(Errc::tool_failure, "no live adapter for tool: " + call.name);
            };
        }
        registry.register_tool(std::move(adapter));
    }
    return registry;
}

}  // namespace restage
