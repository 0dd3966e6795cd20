#pragma once
// Declarative run configuration: task source, limits, budget, ablation mode,
// backend selection, scenario path, and output path, with --set overrides.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "restage/llm_backend.hpp"
#include "restage/orchestrator.hpp"
#include "restage/prompt_assembly.hpp"

#ifndef RESTAGE_DEFAULT_ASSET_DIR
#define RESTAGE_DEFAULT_ASSET_DIR "assets"
#endif

namespace restage {

inline std::filesystem::path default_assets_dir() {
    if (const char* env = std::getenv("RESTAGE_ASSETS"); env && *env) return env;
    return RESTAGE_DEFAULT_ASSET_DIR;
}

struct RunConfig {
    std::string task;
    std::string scenario_path;            // scripted mode when non-empty
    std::string backend_kind = "scripted";  // scripted | http
    HttpBackendOptions http;
    std::string inference_model = "inference";
    std::string engine_model = "engine";
    double temperature = 0.6;
    double top_p = 0.95;
    int max_output_tokens = 4096;
    RunLimits limits;
    ContextBudget budget;
    AblationMode mode;
    LiveToolOptions live_tools;
    std::filesystem::path assets_dir = default_assets_dir();
    std::filesystem::path out_path = "trajectories.jsonl";
    std::filesystem::path workspace = ".restage_workspace";

    SamplingParams inference_params() const {
        SamplingParams p;
        p.temperature = temperature;
        p.top_p = top_p;
        p.max_output_tokens = max_output_tokens;
        p.model_id = inference_model;
        return p;
    }

    SamplingParams engine_params() const {
        SamplingParams p = inference_params();
        p.model_id = engine_model;
        return p;
    }

    static RunConfig from_json(const json& j) {
        RunConfig c;
        c.task = j.value("task", std::string{});
        c.scenario_path = j.value("scenario", std::string{});
        if (j.contains("backend")) {
            const json& b = j["backend"];
            c.backend_kind = b.value("kind", std::string("scripted"));
            c.http.base_url = b.value("base_url", c.http.base_url);
            c.http.path = b.value("path", c.http.path);
            c.http.api_key_env = b.value("api_key_env", c.http.api_key_env);
            c.http.request_logprobs = b.value("request_logprobs", c.http.request_logprobs);
            c.inference_model = b.value("inference_model", c.inference_model);
            c.engine_model = b.value("engine_model", c.engine_model);
            c.temperature = b.value("temperature", c.temperature);
            c.top_p = b.value("top_p", c.top_p);
            c.max_output_tokens = b.value("max_output_tokens", c.max_output_tokens);
        }
        if (j.contains("limits")) {
            const json& l = j["limits"];
            c.limits.max_iterations = l.value("max_iterations", c.limits.max_iterations);
            c.limits.max_reconfigs = l.value("max_reconfigs", c.limits.max_reconfigs);
            c.limits.per_step_timeout = std::chrono::milliseconds(
                l.value("per_step_timeout_ms",
                        static_cast<long>(c.limits.per_step_timeout.count())));
        }
        if (j.contains("budget")) {
            const json& b = j["budget"];
            c.budget.max_context_tokens = b.value("max_context_tokens", c.budget.max_context_tokens);
            c.budget.cleanup_trigger_ratio =
                b.value("cleanup_trigger_ratio", c.budget.cleanup_trigger_ratio);
            c.budget.keep_last_iterations =
                b.value("keep_last_iterations", c.budget.keep_last_iterations);
            c.budget.swe_mode = b.value("swe_mode", c.budget.swe_mode);
            c.budget.swe_char_cap = b.value("swe_char_cap", c.budget.swe_char_cap);
            c.budget.swe_keep_observations =
                b.value("swe_keep_observations", c.budget.swe_keep_observations);
        }
        if (j.contains("mode")) c.mode = AblationMode::from_json(j["mode"]);
        if (j.contains("tools")) {
            const json& t = j["tools"];
            c.live_tools.search_base_url = t.value("search_base_url", c.live_tools.search_base_url);
            c.live_tools.search_path = t.value("search_path", c.live_tools.search_path);
            c.live_tools.reader_base_url = t.value("reader_base_url", c.live_tools.reader_base_url);
            c.live_tools.max_results_per_query =
                t.value("max_results_per_query", c.live_tools.max_results_per_query);
            c.live_tools.http_timeout_s = t.value("http_timeout_s", c.live_tools.http_timeout_s);
        }
        if (j.contains("assets_dir")) c.assets_dir = j["assets_dir"].get<std::string>();
        if (j.contains("out")) c.out_path = j["out"].get<std::string>();
        if (j.contains("workspace")) c.workspace = j["workspace"].get<std::string>();
        return c;
    }
};

// Sets a dotted key path in a JSON document. Values parse as JSON when they
// can (numbers, booleans, arrays) and fall back to plain strings.
inline void apply_override(json& doc, const std::string& assignment) {
    const std::size_t eq = assignment.find('=');
    if (eq == std::string::npos) {
        throw Error(Errc::config_error, "override must look like key.path=value: " + assignment);
    }
    const std::string path = assignment.substr(0, eq);
    const std::string raw_value = assignment.substr(eq + 1);
    json value = json::parse(raw_value, nullptr, false);
    if (value.is_discarded()) value = raw_value;

    json* node = &doc;
    std::size_t start = 0;
    while (true) {
        const std::size_t dot = path.find('.', start);
        const std::string key = path.substr(start, dot - start);
        if (key.empty()) throw Error(Errc::config_error, "bad override key: " + path);
        if (dot == std::string::npos) {
            (*node)[key] = value;
            return;
        }
        node = &(*node)[key];
        start = dot + 1;
    }
}

inline json load_config_json(const std::filesystem::path& path,
                             const std::vector<std::string>& overrides) {
    json doc = json::object();
    if (!path.empty()) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw Error(Errc::config_error, "cannot open config " + path.string());
        doc = json::parse(in, nullptr, false);
        if (doc.is_discarded()) {
            throw Error(Errc::config_error, "config is not valid JSON: " + path.string());
        }
    }
    for (const auto& assignment : overrides) apply_override(doc, assignment);
    return doc;
}

inline GlobalToolPool load_tool_pool(const std::filesystem::path& assets_dir) {
    const auto path = assets_dir / "tools.json";
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::config_error, "cannot open tool schemas " + path.string());
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded()) {
        throw Error(Errc::config_error, "tool schema asset is not valid JSON: " + path.string());
    }
    return tool_pool_from_json(j);
}

inline PromptTemplates load_templates(const std::filesystem::path& assets_dir) {
    return PromptTemplates::load(assets_dir / "templates");
}

}  // namespace restage
