#pragma once
// Renders the inference-agent and configuration-engine prompts from external
// template assets, and assembles tool definition blocks.

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "restage/config_model.hpp"
#include "restage/react_codec.hpp"

namespace restage {

struct PromptBundle {
    std::string system_text;
    std::string user_prefix;
    std::string user_suffix;
    std::string tool_block;

    std::string user_text() const {
        std::string out = user_prefix;
        if (!tool_block.empty()) out += "\n\n" + tool_block;
        if (!user_suffix.empty()) out += "\n\n" + user_suffix;
        return out;
    }
};

namespace detail {

inline std::string normalize_newlines(std::string text) {
    return replace_all(std::move(text), "\r\n", "\n");
}

inline std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::template_error, "cannot read " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return normalize_newlines(buf.str());
}

inline void require_placeholder(const std::string& text, const std::string& slot,
                                const std::string& which) {
    if (text.find("{" + slot + "}") == std::string::npos) {
        throw Error(Errc::template_error, which + " template is missing {" + slot + "}");
    }
}

inline std::string fill(std::string text, const std::string& slot, const std::string& value) {
    return replace_all(std::move(text), "{" + slot + "}", value);
}

}  // namespace detail

// Template assets keyed by role; loaded once at startup so prompt edits need
// no rebuild.
struct PromptTemplates {
    std::string inference_system;
    std::string reconfig_system;
    std::string react_user_prefix;
    std::string react_user_suffix;

    static PromptTemplates load(const std::filesystem::path& dir) {
        PromptTemplates t;
        t.inference_system = detail::read_text_file(dir / "inference_system.txt");
        t.reconfig_system = detail::read_text_file(dir / "reconfig_system.txt");
        t.react_user_prefix = detail::read_text_file(dir / "react_user_prefix.txt");
        t.react_user_suffix = detail::read_text_file(dir / "react_user_suffix.txt");
        t.validate();
        return t;
    }

    void validate() const {
        for (const char* slot : {"MAIN_TASK_CONTENT", "SUB_GOAL_CONTENT", "EXECUTION_STRATEGY",
                                 "TOOLBOX_LIST", "KNOWLEDGE_CONTENT"}) {
            detail::require_placeholder(inference_system, slot, "inference_system");
        }
        for (const char* slot : {"MAIN_TASK_CONTENT", "ALL_AVAILABLE_TOOLS", "EXECUTION_HISTORY",
                                 "UPDATE_REQUIREMENT"}) {
            detail::require_placeholder(reconfig_system, slot, "reconfig_system");
        }
    }
};

inline std::string render_tool_block(const std::vector<ToolSchema>& schemas) {
    std::string out;
    for (const auto& schema : schemas) {
        if (!out.empty()) out += "\n\n";
        out += tool_schema_to_json(schema).dump(2);
    }
    return out;
}

inline std::string render_toolbox_list(const std::vector<std::string>& toolbox) {
    std::string out;
    for (const auto& name : toolbox) {
        if (!out.empty()) out += ", ";
        out += name;
    }
    return out;
}

// System prompt for one stage plus the ReAct user block. `schemas` must
// include every toolbox tool; management schemas are rendered in the order
// given. Tools outside toolbox + management are dropped so the prompt never
// mentions them.
inline PromptBundle render_inference_prompt(const std::string& task,
                                            const StageConfiguration& config,
                                            const std::vector<ToolSchema>& schemas,
                                            const PromptTemplates& templates) {
    PromptBundle bundle;
    std::string text = templates.inference_system;
    text = detail::fill(std::move(text), "MAIN_TASK_CONTENT", task);
    text = detail::fill(std::move(text), "SUB_GOAL_CONTENT", config.sub_goal);
    text = detail::fill(std::move(text), "EXECUTION_STRATEGY", config.strategy);
    text = detail::fill(std::move(text), "TOOLBOX_LIST", render_toolbox_list(config.toolbox));
    text = detail::fill(std::move(text), "KNOWLEDGE_CONTENT", config.knowledge);
    bundle.system_text = std::move(text);

    std::vector<ToolSchema> selected;
    for (const auto& name : config.toolbox) {
        const ToolSchema* found = nullptr;
        for (const auto& s : schemas) {
            if (s.name == name) { found = &s; break; }
        }
        if (!found) throw Error(Errc::missing_schema, name);
        selected.push_back(*found);
    }
    for (const auto& s : schemas) {
        if (GlobalToolPool::is_reserved(s.name)) selected.push_back(s);
    }
    bundle.tool_block = render_tool_block(selected);
    bundle.user_prefix = templates.react_user_prefix;
    bundle.user_suffix = templates.react_user_suffix;
    return bundle;
}

inline std::string render_update_requirement(const ReconfigRequest& request) {
    json j{{"new_sub_goal", request.proposed_sub_goal},
           {"update_reason", request.update_reason}};
    if (!request.details.empty()) j["additional_details"] = details_to_json(request.details);
    return j.dump(2);
}

// Engine prompt: empty history and absent request both render as the literal
// "NONE". update_content is metadata and is never forwarded here.
inline PromptBundle render_reconfig_prompt(const std::string& task,
                                           const GlobalToolPool& pool,
                                           const GlobalHistoryPool& history,
                                           const std::optional<ReconfigRequest>& request,
                                           const PromptTemplates& templates) {
    PromptBundle bundle;
    std::vector<ToolSchema> task_tools;
    for (const auto& name : pool.names()) task_tools.push_back(pool.schema(name));

    std::string text = templates.reconfig_system;
    text = detail::fill(std::move(text), "MAIN_TASK_CONTENT", task);
    text = detail::fill(std::move(text), "ALL_AVAILABLE_TOOLS", render_tool_block(task_tools));
    text = detail::fill(std::move(text), "EXECUTION_HISTORY",
                        history.empty() ? "NONE" : serialize_history(history));
    text = detail::fill(std::move(text), "UPDATE_REQUIREMENT",
                        request ? render_update_requirement(*request) : "NONE");
    bundle.system_text = std::move(text);
    bundle.user_suffix = "Output the configuration JSON object now.";
    return bundle;
}

}  // namespace restage
