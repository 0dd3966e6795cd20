#pragma once
// The configuration engine: renders the engineer prompt, invokes the backend,
// and parses/validates the strict 4-key configuration output with a bounded
// corrective-reprompt budget.

#include <optional>
#include <string>
#include <vector>

#include "restage/config_model.hpp"
#include "restage/llm_backend.hpp"
#include "restage/prompt_assembly.hpp"

namespace restage {

struct EngineOutput {
    std::string next_sub_goal;
    std::string execution_strategy;
    std::vector<std::string> toolbox;
    std::string inter_agent_knowledge;  // "" | "ALL" | summary text
};

// Finds the first balanced top-level JSON object in free-form model output;
// markdown fences and surrounding prose are tolerated.
inline json extract_structured_block(const std::string& text) {
    for (std::size_t start = text.find('{'); start != std::string::npos;
         start = text.find('{', start + 1)) {
        int depth = 0;
        bool in_string = false;
        bool escaped = false;
        for (std::size_t i = start; i < text.size(); ++i) {
            const char c = text[i];
            if (in_string) {
                if (escaped) {
                    escaped = false;
                } else if (c == '\\') {
                    escaped = true;
                } else if (c == '"') {
                    in_string = false;
                }
                continue;
            }
            if (c == '"') {
                in_string = true;
            } else if (c == '{') {
                ++depth;
            } else if (c == '}') {
                if (--depth == 0) {
                    json parsed = json::parse(text.substr(start, i - start + 1), nullptr, false);
                    if (!parsed.is_discarded() && parsed.is_object()) return parsed;
                    break;  // not valid JSON; try the next '{'
                }
            }
        }
    }
    throw Error(Errc::no_structured_block, "no balanced JSON object in engine output");
}

inline EngineOutput engine_output_from_json(const json& j) {
    static const std::vector<std::string> keys{"next_sub_goal", "execution_strategy", "toolbox",
                                               "inter_agent_knowledge"};
    for (const auto& key : keys) {
        if (!j.contains(key)) throw Error(Errc::engine_output_invalid, "missing key: " + key);
    }
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (std::find(keys.begin(), keys.end(), it.key()) == keys.end()) {
            throw Error(Errc::engine_output_invalid, "unexpected key: " + it.key());
        }
    }
    EngineOutput out;
    if (!j["next_sub_goal"].is_string() || j["next_sub_goal"].get<std::string>().empty()) {
        throw Error(Errc::engine_output_invalid, "next_sub_goal must be a non-empty string");
    }
    if (!j["execution_strategy"].is_string() ||
        j["execution_strategy"].get<std::string>().empty()) {
        throw Error(Errc::engine_output_invalid, "execution_strategy must be a non-empty string");
    }
    if (!j["toolbox"].is_array()) {
        throw Error(Errc::engine_output_invalid, "toolbox must be an array of tool names");
    }
    if (!j["inter_agent_knowledge"].is_string()) {
        throw Error(Errc::engine_output_invalid, "inter_agent_knowledge must be a string");
    }
    out.next_sub_goal = j["next_sub_goal"].get<std::string>();
    out.execution_strategy = j["execution_strategy"].get<std::string>();
    for (const auto& name : j["toolbox"]) {
        if (!name.is_string()) {
            throw Error(Errc::engine_output_invalid, "toolbox entries must be strings");
        }
        out.toolbox.push_back(name.get<std::string>());
    }
    out.inter_agent_knowledge = j["inter_agent_knowledge"].get<std::string>();
    return out;
}

inline json engine_output_to_json(const EngineOutput& out) {
    return json{{"next_sub_goal", out.next_sub_goal},
                {"execution_strategy", out.execution_strategy},
                {"toolbox", out.toolbox},
                {"inter_agent_knowledge", out.inter_agent_knowledge}};
}

// Everything the ledger needs about one engine invocation.
struct EngineRecord {
    std::string prompt_text;           // system + user, as submitted
    std::string raw_output;            // final accepted completion text
    EngineOutput output;               // parsed and validated
    std::string knowledge_directive;   // before resolution
    std::optional<bool> adopted;       // next_sub_goal == proposed, when a request existed
    std::optional<double> logprob;
    std::vector<std::string> warnings;
    int reprompts = 0;
};

struct EngineResult {
    StageConfiguration config;
    EngineRecord record;
};

class ReconfigEngine {
public:
    ReconfigEngine(std::shared_ptr<LlmBackend> backend, SamplingParams params,
                   PromptTemplates templates, int max_reprompts = 2)
        : backend_(std::move(backend)),
          params_(std::move(params)),
          templates_(std::move(templates)),
          max_reprompts_(max_reprompts) {}

    // Generates and validates C_{i+1}; the new stage index equals the history
    // length (one summary is archived per reconfigure call).
    EngineResult reconfigure(const std::string& task, const GlobalToolPool& pool,
                             const GlobalHistoryPool& history,
                             const std::optional<ReconfigRequest>& request) const {
        PromptBundle bundle = render_reconfig_prompt(task, pool, history, request, templates_);
        std::vector<ChatMessage> messages{{Role::system, bundle.system_text},
                                          {Role::user, bundle.user_suffix}};
        EngineRecord record;
        record.prompt_text = bundle.system_text + "\n\n" + bundle.user_suffix;

        std::string last_error;
        for (int attempt = 0; attempt <= max_reprompts_; ++attempt) {
            Completion completion = backend_->complete(messages, params_);
            try {
                std::vector<std::string> warnings;
                EngineOutput out = engine_output_from_json(extract_structured_block(completion.text));
                StageConfiguration config;
                config.stage_index = static_cast<int>(history.size());
                config.sub_goal = out.next_sub_goal;
                config.strategy = out.execution_strategy;
                // The subset and reserved-name rules are hard; the >=3-tool
                // rule is prompt guidance the engine model may override (a
                // 2-tool box is a legitimate late-stage configuration).
                try {
                    config.toolbox = validate_toolbox(out.toolbox, pool, /*enforce_min=*/true);
                } catch (const Error& e) {
                    if (e.code() != Errc::too_few_tools) throw;
                    config.toolbox = validate_toolbox(out.toolbox, pool, /*enforce_min=*/false);
                    warnings.push_back(std::string("toolbox below the advisory minimum: ") +
                                       e.what());
                }
                if (history.empty() && !out.inter_agent_knowledge.empty()) {
                    warnings.push_back(
                        "initial-step knowledge directive coerced to empty string (was \"" +
                        out.inter_agent_knowledge + "\")");
                    out.inter_agent_knowledge.clear();
                }
                config.knowledge = resolve_knowledge(out.inter_agent_knowledge, history);
                validate_configuration(config, pool);

                record.raw_output = completion.text;
                record.output = out;
                record.knowledge_directive = out.inter_agent_knowledge;
                record.logprob = completion.logprob_sum();
                record.warnings = std::move(warnings);
                record.reprompts = attempt;
                if (request) record.adopted = (out.next_sub_goal == request->proposed_sub_goal);
                return {std::move(config), std::move(record)};
            } catch (const Error& e) {
                last_error = e.what();
                if (attempt == max_reprompts_) break;
                messages.push_back({Role::assistant, completion.text});
                messages.push_back(
                    {Role::user,
                     "The previous output was invalid: " + last_error +
                         ". Output a strict JSON object with exactly the keys next_sub_goal, "
                         "execution_strategy, toolbox and inter_agent_knowledge."});
            }
        }
        throw Error(Errc::engine_output_invalid, last_error);
    }

    const SamplingParams& params() const { return params_; }
    const PromptTemplates& templates() const { return templates_; }

private:
    std::shared_ptr<LlmBackend> backend_;
    SamplingParams params_;
    PromptTemplates templates_;
    int max_reprompts_;
};

}  // namespace restage
