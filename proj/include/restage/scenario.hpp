#pragma once
// Scenario assets: ordered scripted completions (per role), scripted tool
// responses, and expected-prompt assertions, plus a one-call replay helper.

#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "restage/orchestrator.hpp"

namespace restage {

struct Scenario {
    std::string name;
    std::string task;
    std::vector<ScriptEntry> completions;
    std::vector<MockToolEntry> tool_entries;
    std::string default_tool_body = "No scripted response available.";

    static Scenario from_json(const json& j) {
        Scenario sc;
        sc.name = j.value("name", std::string{});
        sc.task = j.at("task").get<std::string>();
        for (const auto& c : j.value("completions", json::array())) {
            ScriptEntry entry;
            entry.role = c.value("role", std::string("inference"));
            entry.text = c.at("text").get<std::string>();
            for (const auto& e : c.value("expect", json::array())) {
                entry.expect_substrings.push_back(e.get<std::string>());
            }
            if (c.contains("logprob") && !c["logprob"].is_null()) {
                entry.logprob = c["logprob"].get<double>();
            }
            sc.completions.push_back(std::move(entry));
        }
        for (const auto& t : j.value("tools", json::array())) {
            MockToolEntry entry;
            entry.tool = t.at("tool").get<std::string>();
            entry.match = t.value("match", std::string{});
            entry.body = t.at("body").get<std::string>();
            sc.tool_entries.push_back(std::move(entry));
        }
        if (j.contains("default_tool_body")) {
            sc.default_tool_body = j["default_tool_body"].get<std::string>();
        }
        return sc;
    }

    static Scenario load_file(const std::filesystem::path& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw Error(Errc::config_error, "cannot open scenario " + path.string());
        json j = json::parse(in, nullptr, false);
        if (j.is_discarded()) {
            throw Error(Errc::config_error, "scenario is not valid JSON: " + path.string());
        }
        Scenario sc = from_json(j);
        if (sc.name.empty()) sc.name = path.stem().string();
        return sc;
    }
};

inline std::shared_ptr<ScriptedBackend> make_scripted_backend(
    const Scenario& scenario, std::shared_ptr<TokenCounter> counter = nullptr) {
    return std::make_shared<ScriptedBackend>(scenario.completions, "inference", "engine",
                                             std::move(counter));
}

// Each run gets a fresh mock environment so replays are independent.
inline std::function<ToolSession()> make_mock_session_factory(const Scenario& scenario) {
    auto entries = scenario.tool_entries;
    auto default_body = scenario.default_tool_body;
    return [entries, default_body]() {
        ToolSession session;
        session.mock = std::make_shared<MockEnvironment>(entries, default_body);
        return session;
    };
}

struct ScenarioRunResult {
    Trajectory trajectory;
    std::shared_ptr<ScriptedBackend> backend;  // exposes recorded prompts
};

inline ScenarioRunResult run_scenario(const Scenario& scenario, const GlobalToolPool& pool,
                                      const PromptTemplates& templates,
                                      const RunLimits& limits = {},
                                      const ContextBudget& budget = {},
                                      const AblationMode& mode = {}) {
    OrchestratorOptions options;
    options.pool = pool;
    options.templates = templates;
    options.counter = std::make_shared<ApproxTokenCounter>();
    options.backend = make_scripted_backend(scenario, options.counter);
    options.registry = std::make_shared<ToolRegistry>(make_mock_registry(pool));
    options.limits = limits;
    options.budget = budget;
    options.mode = mode;
    options.session_factory = make_mock_session_factory(scenario);
    options.scenario_name = scenario.name;

    Orchestrator orchestrator(std::move(options));
    ScenarioRunResult result;
    result.backend =
        std::static_pointer_cast<ScriptedBackend>(orchestrator.options().backend);
    result.trajectory = orchestrator.run_task(scenario.task);
    return result;
}

}  // namespace restage
