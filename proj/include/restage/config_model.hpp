#pragma once
// Stage configuration formalism: the per-stage (sub_goal, strategy, toolbox,
// knowledge) tuple, reconfiguration requests, the global history pool, and
// the global tool pool with its validation rules.

#include <algorithm>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "restage/errors.hpp"
#include "restage/react_codec.hpp"

namespace restage {

inline constexpr const char* kReconfigureToolName = "reconfigure";
inline constexpr const char* kFinishToolName = "finish";

// Knowledge directives understood by resolve_knowledge. "ALL" is matched
// exactly and case-sensitively; lenient matching risks silently injecting
// huge histories.
inline constexpr const char* kKnowledgeAllDirective = "ALL";

struct StageConfiguration {
    int stage_index = 0;
    std::string sub_goal;
    std::string strategy;
    std::vector<std::string> toolbox;  // ordered, no duplicates, task tools only
    std::string knowledge;             // resolved text, may be empty
};

struct ReconfigDetails {
    std::optional<std::string> toolbox_requirements;
    std::optional<std::string> knowledge_requirements;
    std::optional<std::string> execution_strategy_requirements;

    bool empty() const {
        return !toolbox_requirements && !knowledge_requirements && !execution_strategy_requirements;
    }
};

struct ReconfigRequest {
    std::string proposed_sub_goal;  // new_sub_goal
    std::string update_reason;
    std::string update_content;     // metadata only; never forwarded to the engine
    ReconfigDetails details;
};

struct ExecutionSummary {
    int stage_index = 0;
    std::string sub_goal;
    std::string summary;
};

class GlobalHistoryPool {
public:
    void append(ExecutionSummary entry) {
        if (!entries_.empty() && entry.stage_index != entries_.back().stage_index + 1) {
            throw Error(Errc::config_error, "history pool stage indices must be contiguous");
        }
        if (entries_.empty() && entry.stage_index != 0) {
            throw Error(Errc::config_error, "history pool must start at stage 0");
        }
        if (entry.summary.empty()) {
            throw Error(Errc::config_error, "execution summary must be non-empty");
        }
        entries_.push_back(std::move(entry));
    }

    const std::vector<ExecutionSummary>& entries() const { return entries_; }
    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }

private:
    std::vector<ExecutionSummary> entries_;
};

// "Iteration k:" blocks, 1-based, separated by a blank line.
inline std::string serialize_history(const GlobalHistoryPool& pool) {
    std::string out;
    std::size_t k = 1;
    for (const auto& entry : pool.entries()) {
        if (!out.empty()) out += "\n\n";
        out += "Iteration " + std::to_string(k++) + ":\n";
        out += "Sub-goal: " + entry.sub_goal + "\n";
        out += "Summary: " + entry.summary;
    }
    return out;
}

// "" -> empty knowledge, "ALL" -> the serialized history pool, anything else
// is already the summary text and passes through verbatim.
inline std::string resolve_knowledge(const std::string& directive, const GlobalHistoryPool& pool) {
    if (directive.empty()) return "";
    if (directive == kKnowledgeAllDirective) return serialize_history(pool);
    return directive;
}

class GlobalToolPool {
public:
    GlobalToolPool() = default;

    void add_task_tool(ToolSchema schema) {
        if (is_reserved(schema.name)) {
            throw Error(Errc::reserved_tool, schema.name + " is a management tool name");
        }
        if (tools_.count(schema.name)) {
            throw Error(Errc::config_error, "duplicate tool: " + schema.name);
        }
        order_.push_back(schema.name);
        tools_.emplace(schema.name, std::move(schema));
    }

    void set_management_schemas(ToolSchema reconfigure, ToolSchema finish) {
        if (reconfigure.name != kReconfigureToolName || finish.name != kFinishToolName) {
            throw Error(Errc::config_error, "management schemas must be named reconfigure/finish");
        }
        reconfigure_ = std::move(reconfigure);
        finish_ = std::move(finish);
    }

    static bool is_reserved(const std::string& name) {
        return name == kReconfigureToolName || name == kFinishToolName;
    }

    bool has(const std::string& name) const { return tools_.count(name) > 0; }

    const ToolSchema& schema(const std::string& name) const {
        auto it = tools_.find(name);
        if (it == tools_.end()) throw Error(Errc::unknown_tool, name);
        return it->second;
    }

    const ToolSchema& reconfigure_schema() const { return require(reconfigure_, "reconfigure"); }
    const ToolSchema& finish_schema() const { return require(finish_, "finish"); }
    bool has_management_schemas() const { return reconfigure_.has_value() && finish_.has_value(); }

    // Task tool names in registration order.
    const std::vector<std::string>& names() const { return order_; }
    std::size_t size() const { return order_.size(); }

private:
    static const ToolSchema& require(const std::optional<ToolSchema>& s, const char* what) {
        if (!s) throw Error(Errc::missing_schema, what);
        return *s;
    }

    std::map<std::string, ToolSchema> tools_;
    std::vector<std::string> order_;
    std::optional<ToolSchema> reconfigure_;
    std::optional<ToolSchema> finish_;
};

// Loads the full tool pool from a schema asset: a JSON array of tool
// definitions. Entries named reconfigure/finish become the management
// schemas; the rest are task tools, in file order.
inline GlobalToolPool tool_pool_from_json(const json& j) {
    if (!j.is_array()) throw Error(Errc::config_error, "tool schema asset must be a JSON array");
    GlobalToolPool pool;
    std::optional<ToolSchema> reconfigure, finish;
    for (const auto& entry : j) {
        ToolSchema schema = tool_schema_from_json(entry);
        if (schema.name == kReconfigureToolName) {
            reconfigure = std::move(schema);
        } else if (schema.name == kFinishToolName) {
            finish = std::move(schema);
        } else {
            pool.add_task_tool(std::move(schema));
        }
    }
    if (!reconfigure || !finish) {
        throw Error(Errc::config_error, "tool schema asset must define reconfigure and finish");
    }
    pool.set_management_schemas(std::move(*reconfigure), std::move(*finish));
    return pool;
}

// De-duplicates (order-preserving) and checks membership against the pool.
// enforce_min applies the engine prompt's >=3-tool rule; it is waived when
// the pool itself has fewer than 3 task tools.
inline std::vector<std::string> validate_toolbox(const std::vector<std::string>& proposed,
                                                 const GlobalToolPool& pool,
                                                 bool enforce_min) {
    if (pool.size() == 0) throw Error(Errc::config_error, "tool pool is empty");
    std::vector<std::string> out;
    for (const auto& name : proposed) {
        if (GlobalToolPool::is_reserved(name)) throw Error(Errc::reserved_tool, name);
        if (!pool.has(name)) throw Error(Errc::unknown_tool, name);
        if (std::find(out.begin(), out.end(), name) == out.end()) out.push_back(name);
    }
    if (enforce_min && pool.size() >= 3 && out.size() < 3) {
        throw Error(Errc::too_few_tools,
                    "toolbox has " + std::to_string(out.size()) + " tools, need at least 3");
    }
    return out;
}

inline void validate_configuration(const StageConfiguration& config, const GlobalToolPool& pool) {
    if (config.stage_index < 0) throw Error(Errc::config_error, "negative stage_index");
    std::vector<std::string> checked = validate_toolbox(config.toolbox, pool, false);
    if (checked.size() != config.toolbox.size()) {
        throw Error(Errc::config_error, "toolbox contains duplicate names");
    }
}

// --- JSON (de)serialization, tool-call field names on the wire ---

inline json details_to_json(const ReconfigDetails& d) {
    json j = json::object();
    if (d.toolbox_requirements) j["toolbox_requirements"] = *d.toolbox_requirements;
    if (d.knowledge_requirements) j["knowledge_requirements"] = *d.knowledge_requirements;
    if (d.execution_strategy_requirements) {
        j["execution_strategy_requirements"] = *d.execution_strategy_requirements;
    }
    return j;
}

inline ReconfigDetails details_from_json(const json& j) {
    ReconfigDetails d;
    if (j.contains("toolbox_requirements")) {
        d.toolbox_requirements = j["toolbox_requirements"].get<std::string>();
    }
    if (j.contains("knowledge_requirements")) {
        d.knowledge_requirements = j["knowledge_requirements"].get<std::string>();
    }
    if (j.contains("execution_strategy_requirements")) {
        d.execution_strategy_requirements = j["execution_strategy_requirements"].get<std::string>();
    }
    return d;
}

inline json request_to_json(const ReconfigRequest& r) {
    json j{{"new_sub_goal", r.proposed_sub_goal},
           {"update_reason", r.update_reason},
           {"update_content", r.update_content}};
    if (!r.details.empty()) j["additional_details"] = details_to_json(r.details);
    return j;
}

inline ReconfigRequest request_from_json(const json& j) {
    ReconfigRequest r;
    r.proposed_sub_goal = j.at("new_sub_goal").get<std::string>();
    r.update_reason = j.at("update_reason").get<std::string>();
    r.update_content = j.value("update_content", std::string{});
    if (j.contains("additional_details")) r.details = details_from_json(j["additional_details"]);
    return r;
}

inline json configuration_to_json(const StageConfiguration& c) {
    return json{{"stage_index", c.stage_index},
                {"sub_goal", c.sub_goal},
                {"strategy", c.strategy},
                {"toolbox", c.toolbox},
                {"knowledge", c.knowledge}};
}

inline StageConfiguration configuration_from_json(const json& j) {
    StageConfiguration c;
    c.stage_index = j.at("stage_index").get<int>();
    c.sub_goal = j.at("sub_goal").get<std::string>();
    c.strategy = j.at("strategy").get<std::string>();
    c.toolbox = j.at("toolbox").get<std::vector<std::string>>();
    c.knowledge = j.at("knowledge").get<std::string>();
    return c;
}

inline json summary_to_json(const ExecutionSummary& s) {
    return json{{"stage_index", s.stage_index},
                {"sub_goal", s.sub_goal},
                {"execution_summary", s.summary}};
}

inline ExecutionSummary summary_from_json(const json& j) {
    ExecutionSummary s;
    s.stage_index = j.at("stage_index").get<int>();
    s.sub_goal = j.at("sub_goal").get<std::string>();
    s.summary = j.at("execution_summary").get<std::string>();
    return s;
}

}  // namespace restage
