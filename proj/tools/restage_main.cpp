// Operator entry points: run tasks against live or scripted backends, replay
// scenarios, sweep ablation modes, and inspect/export recorded trajectories.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

#include "restage/http_backend.hpp"
#include "restage/live_tools.hpp"
#include "restage/orchestrator.hpp"
#include "restage/run_config.hpp"
#include "restage/scenario.hpp"
#include "restage/trajectory_ledger.hpp"

namespace {

using namespace restage;

constexpr int kExitOk = 0;
constexpr int kExitConfigError = 1;
constexpr int kExitAborted = 2;
constexpr int kExitIterationLimit = 3;
constexpr int kExitReconfigLimit = 4;
constexpr int kExitBackendUnavailable = 5;
constexpr int kExitCorruptRecord = 6;

const std::vector<std::string> kKnownConfigKeys = {
    "task", "scenario", "backend", "limits", "budget", "mode",
    "assets_dir", "out", "workspace", "tools"};

void check_override_keys(const std::vector<std::string>& overrides) {
    for (const auto& assignment : overrides) {
        const std::string top = assignment.substr(
            0, std::min(assignment.find('.'), assignment.find('=')));
        if (std::find(kKnownConfigKeys.begin(), kKnownConfigKeys.end(), top) ==
            kKnownConfigKeys.end()) {
            throw Error(Errc::config_error, "override references unknown config key: " + top);
        }
    }
}

AblationMode mode_from_name(const std::string& name) {
    AblationMode m;
    if (name.empty() || name == "full") return m;
    if (name == "wo_when") { m.fixed_interval_when = 5; return m; }
    if (name == "wo_how") { m.drop_request_how = true; return m; }
    if (name == "wo_both") { m.fixed_interval_when = 5; m.drop_request_how = true; return m; }
    if (name == "wo_sub_goal") { m.disable_sub_goal = true; return m; }
    if (name == "wo_strategy") { m.disable_strategy = true; return m; }
    if (name == "wo_toolbox") { m.disable_toolbox = true; return m; }
    if (name == "wo_context") { m.disable_context = true; return m; }
    if (name == "static_baseline") {
        m.disable_sub_goal = m.disable_strategy = m.disable_toolbox = m.disable_context = true;
        m.disable_reconfigure = true;
        return m;
    }
    throw Error(Errc::config_error, "unknown mode: " + name);
}

int exit_code_for(EndState state) {
    switch (state) {
        case EndState::finished: return kExitOk;
        case EndState::aborted: return kExitAborted;
        case EndState::iteration_limit: return kExitIterationLimit;
        case EndState::reconfig_limit: return kExitReconfigLimit;
    }
    return kExitAborted;
}

int exit_code_for(const Error& e) {
    switch (e.code()) {
        case Errc::backend_unavailable:
        case Errc::rate_limited:
        case Errc::context_overflow:
            return kExitBackendUnavailable;
        case Errc::corrupt_record:
        case Errc::schema_version_mismatch:
            return kExitCorruptRecord;
        default:
            return kExitConfigError;
    }
}

void print_summary(const Trajectory& t) {
    if (t.end_state == EndState::finished && t.final.is_object()) {
        std::cout << "final_result: " << t.final.value("final_result", std::string{}) << "\n";
        std::cout << "status: " << t.final.value("task_completion_status", std::string{}) << "\n";
    } else {
        std::cout << "run did not finish: " << end_state_name(t.end_state);
        if (!t.stages.empty() && !t.stages.back().trace.terminal.detail.empty()) {
            std::cout << " (" << t.stages.back().trace.terminal.detail << ")";
        }
        std::cout << "\n";
    }
    const RunMetrics& m = t.metadata.metrics;
    std::printf("stages=%d steps=%d reconfigs=%d max_prompt_tokens=%d total_prompt_tokens=%ld\n",
                m.stages, m.steps, m.reconfig_count, m.max_prompt_tokens, m.total_prompt_tokens);
}

Trajectory run_from_config(const RunConfig& config) {
    const GlobalToolPool pool = load_tool_pool(config.assets_dir);
    const PromptTemplates templates = load_templates(config.assets_dir);

    OrchestratorOptions options;
    options.pool = pool;
    options.templates = templates;
    options.limits = config.limits;
    options.budget = config.budget;
    options.mode = config.mode;
    options.inference_params = config.inference_params();
    options.engine_params = config.engine_params();

    std::string task = config.task;
    if (!config.scenario_path.empty()) {
        Scenario scenario = Scenario::load_file(config.scenario_path);
        if (task.empty()) task = scenario.task;
        options.backend = make_scripted_backend(scenario, options.counter);
        options.registry = std::make_shared<ToolRegistry>(make_mock_registry(pool));
        options.session_factory = make_mock_session_factory(scenario);
        options.scenario_name = scenario.name;
    } else if (config.backend_kind == "http") {
        if (task.empty()) throw Error(Errc::config_error, "live runs need a task");
        options.backend = std::make_shared<HttpBackend>(config.http);
        auto workspace = config.workspace;
        options.registry = std::make_shared<ToolRegistry>(
            make_live_registry(pool, config.live_tools, options.backend,
                               config.inference_params()));
        options.session_factory = [workspace]() {
            ToolSession session;
            session.workspace = workspace;
            std::filesystem::create_directories(workspace);
            return session;
        };
    } else {
        throw Error(Errc::config_error,
                    "scripted backend needs a scenario; set scenario or backend.kind=http");
    }

    Orchestrator orchestrator(std::move(options));
    Trajectory trajectory = orchestrator.run_task(task);
    append_to_log(config.out_path, trajectory);
    return trajectory;
}

int cmd_run(const std::string& config_path, const std::vector<std::string>& overrides) {
    check_override_keys(overrides);
    const json doc = load_config_json(config_path, overrides);
    const RunConfig config = RunConfig::from_json(doc);
    Trajectory trajectory = run_from_config(config);
    print_summary(trajectory);
    std::cout << "trajectory " << trajectory.id << " appended to " << config.out_path.string()
              << "\n";
    return exit_code_for(trajectory.end_state);
}

int cmd_replay(const std::string& scenario_path, const std::string& out,
               const std::string& mode_name, const std::string& assets) {
    RunConfig config;
    config.scenario_path = scenario_path;
    config.mode = mode_from_name(mode_name);
    if (!out.empty()) config.out_path = out;
    if (!assets.empty()) config.assets_dir = assets;
    Trajectory trajectory = run_from_config(config);
    print_summary(trajectory);
    return exit_code_for(trajectory.end_state);
}

int cmd_ablate(const std::vector<std::string>& scenario_paths, const std::string& out,
               const std::string& assets) {
    if (scenario_paths.empty()) {
        std::cerr << "warning: empty scenario set, nothing to ablate\n";
        return kExitOk;
    }
    static const std::vector<std::string> modes = {
        "full", "wo_when", "wo_how", "wo_both",
        "wo_sub_goal", "wo_strategy", "wo_toolbox", "wo_context"};
    RunConfig base;
    if (!assets.empty()) base.assets_dir = assets;
    const GlobalToolPool pool = load_tool_pool(base.assets_dir);
    const PromptTemplates templates = load_templates(base.assets_dir);

    json table = json::array();
    std::printf("%-14s %-12s %-8s %6s %9s %11s\n", "scenario", "mode", "success", "steps",
                "reconfigs", "max_tokens");
    for (const auto& path : scenario_paths) {
        const Scenario scenario = Scenario::load_file(path);
        for (const auto& mode_name : modes) {
            json row{{"scenario", scenario.name}, {"mode", mode_name}};
            try {
                auto result = run_scenario(scenario, pool, templates, RunLimits{},
                                           ContextBudget{}, mode_from_name(mode_name));
                const RunMetrics& m = result.trajectory.metadata.metrics;
                row["success"] = result.trajectory.end_state == EndState::finished;
                row["steps"] = m.steps;
                row["reconfigs"] = m.reconfig_count;
                row["max_prompt_tokens"] = m.max_prompt_tokens;
                row["total_prompt_tokens"] = m.total_prompt_tokens;
            } catch (const Error& e) {
                row["success"] = false;
                row["error"] = e.what();
            }
            std::printf("%-14s %-12s %-8s %6d %9d %11d\n", scenario.name.c_str(),
                        mode_name.c_str(), row["success"].get<bool>() ? "true" : "false",
                        row.value("steps", 0), row.value("reconfigs", 0),
                        row.value("max_prompt_tokens", 0));
            table.push_back(std::move(row));
        }
    }
    if (!out.empty()) {
        std::ofstream file(out, std::ios::binary | std::ios::trunc);
        file << table.dump(2) << "\n";
        std::cout << "table written to " << out << "\n";
    }
    return kExitOk;
}

std::string knowledge_label(const StageRecord& stage) {
    const std::string& directive =
        stage.engine ? stage.engine->knowledge_directive : stage.config.knowledge;
    if (directive.empty()) return "empty";
    if (directive == kKnowledgeAllDirective) return "ALL";
    std::string summary = directive.substr(0, 57);
    if (directive.size() > 57) summary += "...";
    return "\"" + summary + "\"";
}

int cmd_inspect(const std::string& log_path, int index, bool normalize) {
    const std::vector<Trajectory> trajectories = read_log(log_path);
    if (trajectories.empty()) {
        std::cerr << "log is empty\n";
        return kExitOk;
    }
    if (index < 0 || index >= static_cast<int>(trajectories.size())) {
        throw Error(Errc::config_error, "trajectory index out of range");
    }
    const Trajectory& t = trajectories[static_cast<std::size_t>(index)];
    std::cout << "trajectory " << t.id;
    if (!normalize) std::cout << " (" << t.metadata.created_at << ")";
    std::cout << "\ntask: " << t.task << "\n";
    std::cout << "end_state: " << end_state_name(t.end_state)
              << "  outcome: " << outcome_name(t.outcome) << "\n\n";

    std::vector<std::string> previous_toolbox;
    for (const auto& stage : t.stages) {
        const auto& terminal = stage.trace.terminal;
        std::cout << "Stage " << stage.config.stage_index + 1 << ": " << stage.config.sub_goal
                  << "\n";
        std::cout << "  toolbox: " << render_toolbox_list(stage.config.toolbox);
        if (!previous_toolbox.empty()) {
            std::string delta;
            for (const auto& name : stage.config.toolbox) {
                if (std::find(previous_toolbox.begin(), previous_toolbox.end(), name) ==
                    previous_toolbox.end()) {
                    delta += " +" + name;
                }
            }
            for (const auto& name : previous_toolbox) {
                if (std::find(stage.config.toolbox.begin(), stage.config.toolbox.end(), name) ==
                    stage.config.toolbox.end()) {
                    delta += " -" + name;
                }
            }
            if (!delta.empty()) std::cout << "  (changes:" << delta << ")";
        }
        std::cout << "\n  knowledge: " << knowledge_label(stage) << "\n";
        std::cout << "  steps: " << stage.trace.steps.size()
                  << "  decision: " << stage_end_name(terminal.kind);
        if (terminal.forced) std::cout << " (forced)";
        if (stage.engine && stage.engine->adopted) {
            std::cout << "  sub-goal adopted: " << (*stage.engine->adopted ? "yes" : "no");
        }
        std::cout << "\n";
        previous_toolbox = stage.config.toolbox;
    }
    if (t.end_state == EndState::finished && t.final.is_object()) {
        std::cout << "\nfinal_result: " << t.final.value("final_result", std::string{}) << "\n";
    }
    return kExitOk;
}

int cmd_export(const std::string& log_path, const std::string& format_name,
               const std::string& out_dir, const std::string& labels_path) {
    std::vector<Trajectory> trajectories = read_log(log_path);
    if (!labels_path.empty()) {
        std::ifstream in(labels_path, std::ios::binary);
        if (!in) throw Error(Errc::config_error, "cannot open labels " + labels_path);
        json labels = json::parse(in, nullptr, false);
        if (labels.is_discarded() || !labels.is_object()) {
            throw Error(Errc::config_error, "labels file must be a JSON object of id -> 0|1");
        }
        for (auto& t : trajectories) {
            if (labels.contains(t.id)) {
                t.outcome = labels[t.id].get<int>() == 1 ? OutcomeLabel::success
                                                         : OutcomeLabel::failure;
            }
        }
    }
    DatasetFormat format;
    if (format_name == "sft") format = DatasetFormat::sft;
    else if (format_name == "kto") format = DatasetFormat::kto;
    else throw Error(Errc::config_error, "format must be sft or kto");

    ExportResult result = export_datasets(trajectories, format, out_dir);
    if (result.empty_warning) std::cerr << "warning: EmptyDataset (no records exported)\n";
    std::cout << "inference records: " << result.inference_count << " -> "
              << result.inference_path.string() << "\n";
    std::cout << "reconfiguration records: " << result.reconfiguration_count << " -> "
              << result.reconfiguration_path.string() << "\n";
    if (format == DatasetFormat::kto) {
        for (const auto& [label, count] : result.label_histogram) {
            std::cout << "label " << label << ": " << count << " records\n";
        }
    }
    return kExitOk;
}

int cmd_stats(const std::vector<std::string>& log_paths, const std::string& assets) {
    std::vector<Trajectory> trajectories;
    for (const auto& path : log_paths) {
        for (auto& t : read_log(path)) trajectories.push_back(std::move(t));
    }
    RunConfig base;
    if (!assets.empty()) base.assets_dir = assets;
    std::vector<std::string> tool_names;
    try {
        tool_names = load_tool_pool(base.assets_dir).names();
    } catch (const Error&) {
        // fall back to the tools observed in the logs
    }
    const auto stats = tool_usage_stats(trajectories, tool_names);
    std::printf("%-20s %12s %12s\n", "tool", "traj_freq", "step_freq");
    for (const auto& [name, usage] : stats) {
        std::printf("%-20s %12.3f %12.3f\n", name.c_str(), usage.trajectory_fraction,
                    usage.step_fraction);
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"self-reconfiguring ReAct agent runtime"};
    app.require_subcommand(1);

    std::string config_path, scenario_path, out, mode_name, assets, log_path, format_name,
        labels_path;
    std::vector<std::string> overrides, scenario_paths, log_paths;
    int index = 0;
    bool normalize = false;

    auto* run = app.add_subcommand("run", "run a task from a declarative config file");
    run->add_option("--config", config_path, "run configuration file")->required();
    run->add_option("--set", overrides, "override config keys, e.g. --set mode.drop_request_how=true");

    auto* replay = app.add_subcommand("replay", "replay a scripted scenario");
    replay->add_option("--scenario", scenario_path, "scenario asset file")->required();
    replay->add_option("--out", out, "trajectory log to append to");
    replay->add_option("--mode", mode_name, "ablation mode preset");
    replay->add_option("--assets", assets, "assets directory (templates + tools.json)");

    auto* ablate = app.add_subcommand("ablate", "run scenarios under every ablation mode");
    ablate->add_option("--scenario", scenario_paths, "scenario asset files");
    ablate->add_option("--out", out, "write the machine-readable table here");
    ablate->add_option("--assets", assets, "assets directory");

    auto* inspect = app.add_subcommand("inspect", "print a stage-by-stage configuration view");
    inspect->add_option("--log", log_path, "trajectory log")->required();
    inspect->add_option("--index", index, "trajectory index within the log");
    inspect->add_flag("--normalize", normalize, "hide timestamps and model ids");

    auto* exp = app.add_subcommand("export", "export SFT/KTO training datasets");
    exp->add_option("--log", log_path, "trajectory log")->required();
    exp->add_option("--format", format_name, "sft or kto")->required();
    exp->add_option("--out", out, "output directory")->required();
    exp->add_option("--labels", labels_path, "JSON object mapping trajectory id -> 0|1");

    auto* stats = app.add_subcommand("stats", "per-tool selection frequencies");
    stats->add_option("--log", log_paths, "trajectory logs")->required();
    stats->add_option("--assets", assets, "assets directory");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) return cmd_run(config_path, overrides);
        if (replay->parsed()) return cmd_replay(scenario_path, out, mode_name, assets);
        if (ablate->parsed()) return cmd_ablate(scenario_paths, out, assets);
        if (inspect->parsed()) return cmd_inspect(log_path, index, normalize);
        if (exp->parsed()) return cmd_export(log_path, format_name, out, labels_path);
        if (stats->parsed()) return cmd_stats(log_paths, assets);
    } catch (const restage::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code_for(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfigError;
    }
    return kExitConfigError;
}
