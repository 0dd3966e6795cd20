#pragma once
// The inference-reconfiguration loop: stage execution under a dynamic
// configuration, run limits, context policies, and the ablation modes that
// remove the agent's control over reconfiguration timing or content.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "restage/config_model.hpp"
#include "restage/llm_backend.hpp"
#include "restage/prompt_assembly.hpp"
#include "restage/reconfig_engine.hpp"
#include "restage/tool_registry.hpp"
#include "restage/trajectory_ledger.hpp"

namespace restage {

struct RunLimits {
    int max_iterations = 200;  // inference completions across the whole run
    int max_reconfigs = 30;    // exceeding this closes the run as failed
    std::chrono::milliseconds per_step_timeout{120000};
};

struct ContextBudget {
    int max_context_tokens = 32000;
    double cleanup_trigger_ratio = 0.8;
    int keep_last_iterations = 10;
    bool swe_mode = false;
    int swe_char_cap = 8000;
    int swe_keep_observations = 10;

    int trigger_threshold() const {
        return static_cast<int>(max_context_tokens * cleanup_trigger_ratio);
    }
};

struct AblationMode {
    std::optional<int> fixed_interval_when;  // w/o "When": force reconfig every n steps
    bool drop_request_how = false;           // w/o "How": discard the agent's request
    bool disable_sub_goal = false;
    bool disable_strategy = false;
    bool disable_toolbox = false;
    bool disable_context = false;
    bool disable_reconfigure = false;  // removes T_reconfig from the action space

    bool any_disable() const {
        return disable_sub_goal || disable_strategy || disable_toolbox || disable_context;
    }

    // All four components pinned and the reconfigure tool removed: the loop
    // degenerates to the static single-agent baseline.
    bool is_static_baseline() const {
        return disable_sub_goal && disable_strategy && disable_toolbox && disable_context &&
               disable_reconfigure;
    }

    json to_json() const {
        json disable = json::array();
        if (disable_sub_goal) disable.push_back("sub_goal");
        if (disable_strategy) disable.push_back("strategy");
        if (disable_toolbox) disable.push_back("toolbox");
        if (disable_context) disable.push_back("context");
        json j{{"drop_request_how", drop_request_how},
               {"disable", disable},
               {"disable_reconfigure", disable_reconfigure}};
        j["fixed_interval_when"] = fixed_interval_when ? json(*fixed_interval_when) : json(nullptr);
        return j;
    }

    static AblationMode from_json(const json& j) {
        AblationMode m;
        if (j.contains("fixed_interval_when") && !j["fixed_interval_when"].is_null()) {
            m.fixed_interval_when = j["fixed_interval_when"].get<int>();
        }
        m.drop_request_how = j.value("drop_request_how", false);
        m.disable_reconfigure = j.value("disable_reconfigure", false);
        for (const auto& field : j.value("disable", json::array())) {
            const std::string name = field.get<std::string>();
            if (name == "sub_goal") m.disable_sub_goal = true;
            else if (name == "strategy") m.disable_strategy = true;
            else if (name == "toolbox") m.disable_toolbox = true;
            else if (name == "context") m.disable_context = true;
            else throw Error(Errc::config_error, "unknown disable field: " + name);
        }
        return m;
    }
};

inline constexpr const char* kGenericStrategy =
    "As a Task Executor: (1) analyze the main task and the current situation; (2) pick the most "
    "suitable tool from the toolbox for each step; (3) verify intermediate results before moving "
    "on.";

// The fixed configuration the static baseline and the component-disable
// pins fall back to.
inline StageConfiguration static_configuration(const std::string& task,
                                               const GlobalToolPool& pool) {
    StageConfiguration c;
    c.stage_index = 0;
    c.sub_goal = task;
    c.strategy = kGenericStrategy;
    c.toolbox = pool.names();
    c.knowledge = "";
    return c;
}

// Component ablations re-impose the pinned value after engine validation so
// invalid engine output still fails loudly.
inline StageConfiguration pin_configuration(StageConfiguration config, const std::string& task,
                                            const GlobalToolPool& pool, const AblationMode& mode) {
    if (mode.disable_sub_goal) config.sub_goal = task;
    if (mode.disable_strategy) config.strategy = kGenericStrategy;
    if (mode.disable_toolbox) config.toolbox = pool.names();
    if (mode.disable_context) config.knowledge.clear();
    return config;
}

// Context policy for one stage's step list. In swe_mode every observation
// except the most recent is capped and old observations are compressed,
// regardless of the token total; crossing the trigger threshold retains only
// the most recent keep_last_iterations steps.
inline std::vector<TraceStep> apply_context_policy(const std::vector<TraceStep>& stage_steps,
                                                   int prompt_prefix_tokens,
                                                   const ContextBudget& budget,
                                                   const TokenCounter& counter) {
    std::vector<TraceStep> steps = stage_steps;
    if (budget.swe_mode && !steps.empty()) {
        for (std::size_t i = 0; i + 1 < steps.size(); ++i) {
            std::string& body = steps[i].observation.body;
            const std::size_t before = body.size();
            body = truncate_message(body, static_cast<std::size_t>(budget.swe_char_cap));
            if (body.size() != before) steps[i].observation.truncated = true;
        }
        steps = compress_old_observations(std::move(steps),
                                          static_cast<std::size_t>(budget.swe_keep_observations));
    }
    long total = prompt_prefix_tokens;
    for (const auto& step : steps) {
        total += counter.count(step.raw_assistant);
        total += counter.count(render_tool_response(step.observation.body));
    }
    if (total >= budget.trigger_threshold() &&
        steps.size() > static_cast<std::size_t>(budget.keep_last_iterations)) {
        steps.erase(steps.begin(),
                    steps.end() - static_cast<std::ptrdiff_t>(budget.keep_last_iterations));
    }
    return steps;
}

namespace detail {

inline std::string fnv1a_hex(const std::string& data) {
    std::uint64_t hash = 1469598103934665603ull;
    for (unsigned char c : data) {
        hash ^= c;
        hash *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(hash));
    return buf;
}

inline std::string iso_timestamp() {
    const std::time_t now = std::time(nullptr);
    char buf[32];
    std::tm tm_utc{};
    gmtime_r(&now, &tm_utc);
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
    return buf;
}

inline std::string first_line(const std::string& text) {
    const std::size_t nl = text.find('\n');
    return nl == std::string::npos ? text : text.substr(0, nl);
}

}  // namespace detail

struct OrchestratorOptions {
    GlobalToolPool pool;
    PromptTemplates templates;
    std::shared_ptr<LlmBackend> backend;
    std::shared_ptr<ToolRegistry> registry;
    std::shared_ptr<TokenCounter> counter = std::make_shared<ApproxTokenCounter>();
    RunLimits limits;
    ContextBudget budget;
    AblationMode mode;
    SamplingParams inference_params = SamplingParams::runtime("inference");
    SamplingParams engine_params = SamplingParams::runtime("engine");
    std::function<ToolSession()> session_factory;
    std::string scenario_name;
    int engine_max_reprompts = 2;
};

class Orchestrator {
public:
    explicit Orchestrator(OrchestratorOptions options)
        : options_(std::move(options)),
          engine_(options_.backend, options_.engine_params, options_.templates,
                  options_.engine_max_reprompts) {
        if (!options_.backend) throw Error(Errc::config_error, "orchestrator needs a backend");
        if (!options_.registry) throw Error(Errc::config_error, "orchestrator needs a registry");
        if (!options_.counter) options_.counter = std::make_shared<ApproxTokenCounter>();
    }

    // Initial configuration: the engine is invoked with an empty request and
    // an empty history (both render as "NONE").
    EngineResult initialize(const std::string& task) const {
        GlobalHistoryPool empty;
        return engine_.reconfigure(task, options_.pool, empty, std::nullopt);
    }

    Trajectory run_task(const std::string& task) {
        Trajectory traj;
        traj.task = task;
        traj.id = "t" + detail::fnv1a_hex(task + "|" + options_.scenario_name + "|" +
                                          options_.mode.to_json().dump());
        traj.metadata.inference_model = options_.inference_params.model_id;
        traj.metadata.engine_model = options_.engine_params.model_id;
        traj.metadata.sampling = sampling_json();
        traj.metadata.created_at = detail::iso_timestamp();
        traj.metadata.ablation = options_.mode.to_json();
        traj.metadata.scenario = options_.scenario_name;

        GlobalHistoryPool history;
        ToolSession session = options_.session_factory ? options_.session_factory() : ToolSession{};
        session.default_timeout = options_.limits.per_step_timeout;

        RunState state;
        LogprobBundle bundle;
        bool logprobs_complete = true;

        StageRecord current;
        if (options_.mode.is_static_baseline()) {
            current.config = static_configuration(task, options_.pool);
        } else {
            EngineResult res = initialize(task);
            current.config = pin_configuration(res.config, task, options_.pool, options_.mode);
            if (res.record.logprob) bundle.initial_config = *res.record.logprob;
            else logprobs_complete = false;
            note_engine_prompt(res.record, state);
            current.engine = std::move(res.record);
        }

        while (true) {
            run_stage(task, current, session, state);
            accumulate_stage_logprob(current, bundle, logprobs_complete);
            traj.stages.push_back(std::move(current));
            current = StageRecord{};
            state.metrics.stages = static_cast<int>(traj.stages.size());

            const StageOutcome& last = traj.stages.back().trace.terminal;
            if (last.kind == StageEndKind::finished) {
                traj.end_state = EndState::finished;
                traj.final = last.final;
                break;
            }
            if (last.kind == StageEndKind::limit_exceeded) {
                traj.end_state = EndState::iteration_limit;
                break;
            }
            if (last.kind == StageEndKind::aborted) {
                traj.end_state = EndState::aborted;
                break;
            }

            // reconfigured
            history.append(*last.summary);
            ++state.metrics.reconfig_count;
            if (state.metrics.reconfig_count > options_.limits.max_reconfigs) {
                traj.end_state = EndState::reconfig_limit;
                break;
            }
            std::optional<ReconfigRequest> request = last.request;
            if (options_.mode.drop_request_how) request.reset();
            try {
                EngineResult res = engine_.reconfigure(task, options_.pool, history, request);
                if (res.record.adopted) {
                    ++state.metrics.adoption_total;
                    if (*res.record.adopted) ++state.metrics.adoption_adopted;
                }
                if (res.record.logprob) bundle.reconfig_logprobs.push_back(*res.record.logprob);
                else logprobs_complete = false;
                note_engine_prompt(res.record, state);
                current.config =
                    pin_configuration(res.config, task, options_.pool, options_.mode);
                current.engine = std::move(res.record);
            } catch (const Error& e) {
                traj.end_state = EndState::aborted;
                traj.stages.back().trace.terminal.detail = e.what();
                break;
            }
        }

        if (logprobs_complete) traj.logprobs = std::move(bundle);
        traj.metadata.metrics = state.metrics;
        return traj;
    }

    const OrchestratorOptions& options() const { return options_; }

private:
    struct RunState {
        int iterations = 0;  // inference completions consumed so far
        RunMetrics metrics;
    };

    void note_engine_prompt(const EngineRecord& record, RunState& state) const {
        const int tokens = options_.counter->count(record.prompt_text);
        state.metrics.max_prompt_tokens = std::max(state.metrics.max_prompt_tokens, tokens);
        state.metrics.total_prompt_tokens += tokens;
    }

    json sampling_json() const {
        auto params_json = [](const SamplingParams& p) {
            return json{{"temperature", p.temperature},
                        {"top_p", p.top_p},
                        {"max_output_tokens", p.max_output_tokens},
                        {"model_id", p.model_id}};
        };
        return json{{"inference", params_json(options_.inference_params)},
                    {"engine", params_json(options_.engine_params)}};
    }

    // Fixed-interval mode replaces adaptive triggering outright, so the
    // reconfigure tool leaves the action space just like the static baseline.
    bool reconfigure_available() const {
        return !options_.mode.disable_reconfigure && !options_.mode.fixed_interval_when;
    }

    std::vector<ToolSchema> stage_schemas(const StageConfiguration& config) const {
        std::vector<ToolSchema> schemas;
        for (const auto& name : config.toolbox) schemas.push_back(options_.pool.schema(name));
        if (reconfigure_available()) schemas.push_back(options_.pool.reconfigure_schema());
        schemas.push_back(options_.pool.finish_schema());
        return schemas;
    }

    static std::string auto_stage_summary(const std::vector<TraceStep>& steps) {
        std::string out;
        for (const auto& step : steps) {
            const std::string line = detail::first_line(step.thought);
            if (line.empty()) continue;
            if (!out.empty()) out += "; ";
            out += line;
        }
        if (out.empty()) out = "Executed " + std::to_string(steps.size()) + " tool steps.";
        return out;
    }

    static void accumulate_stage_logprob(const StageRecord& stage, LogprobBundle& bundle,
                                         bool& complete) {
        double sum = 0.0;
        for (const auto& step : stage.trace.steps) {
            if (!step.logprob) { complete = false; return; }
            sum += *step.logprob;
        }
        const StageOutcome& terminal = stage.trace.terminal;
        if (!terminal.raw.empty()) {
            if (!terminal.logprob) { complete = false; return; }
            sum += *terminal.logprob;
        }
        bundle.stage_logprobs.push_back(sum);
    }

    void run_stage(const std::string& task, StageRecord& stage, ToolSession& session,
                   RunState& state) {
        const StageConfiguration& config = stage.config;
        PromptBundle bundle =
            render_inference_prompt(task, config, stage_schemas(config), options_.templates);
        stage.prompt_system = bundle.system_text;
        stage.prompt_user = bundle.user_text();
        const int prefix_tokens = options_.counter->count(stage.prompt_system) +
                                  options_.counter->count(stage.prompt_user);

        std::vector<TraceStep>& steps = stage.trace.steps;
        std::vector<ChatMessage> corrective;  // ephemeral exchanges, cleared on valid turns
        int consecutive_parse_failures = 0;
        int task_tool_steps = 0;

        while (true) {
            if (state.iterations >= options_.limits.max_iterations) {
                stage.trace.terminal.kind = StageEndKind::limit_exceeded;
                stage.trace.terminal.detail = "iteration budget exhausted";
                return;
            }
            std::vector<TraceStep> pruned =
                apply_context_policy(steps, prefix_tokens, options_.budget, *options_.counter);
            std::vector<ChatMessage> messages{{Role::system, stage.prompt_system},
                                              {Role::user, stage.prompt_user}};
            for (const auto& step : pruned) {
                messages.push_back({Role::assistant, step.raw_assistant});
                messages.push_back({Role::user, render_tool_response(step.observation.body)});
            }
            for (const auto& m : corrective) messages.push_back(m);

            int prompt_tokens = 0;
            for (const auto& m : messages) prompt_tokens += options_.counter->count(m.content);
            state.metrics.max_prompt_tokens = std::max(state.metrics.max_prompt_tokens,
                                                       prompt_tokens);
            state.metrics.total_prompt_tokens += prompt_tokens;

            Completion completion;
            try {
                completion = options_.backend->complete(messages, options_.inference_params);
            } catch (const Error& e) {
                stage.trace.terminal.kind = StageEndKind::aborted;
                stage.trace.terminal.detail = e.what();
                return;
            }
            ++state.iterations;
            ++state.metrics.steps;

            AssistantTurn turn;
            try {
                turn = parse_assistant_turn(completion.text);
            } catch (const Error& e) {
                if (++consecutive_parse_failures >= 3) {
                    stage.trace.terminal.kind = StageEndKind::aborted;
                    stage.trace.terminal.raw = completion.text;
                    stage.trace.terminal.detail =
                        "3 consecutive unparseable completions; last error: " +
                        std::string(e.what());
                    return;
                }
                corrective.push_back({Role::assistant, completion.text});
                corrective.push_back(
                    {Role::user,
                     "Your last output was not a valid tool call. Emit exactly one "
                     "<tool_call>...</tool_call> block containing a JSON object with \"name\" "
                     "and \"arguments\"."});
                continue;
            }
            consecutive_parse_failures = 0;
            corrective.clear();

            const std::string& name = turn.call.name;
            if (name == kFinishToolName) {
                try {
                    validate_call(turn.call, options_.pool.finish_schema());
                } catch (const Error& e) {
                    push_management_error(corrective, completion.text, e.what());
                    continue;
                }
                stage.trace.terminal.kind = StageEndKind::finished;
                stage.trace.terminal.final = turn.call.arguments;
                stage.trace.terminal.raw = completion.text;
                stage.trace.terminal.logprob = completion.logprob_sum();
                return;
            }
            if (name == kReconfigureToolName) {
                if (!reconfigure_available()) {
                    push_management_error(corrective, completion.text,
                                          options_.mode.fixed_interval_when
                                              ? "reconfiguration is scheduled externally in "
                                                "this mode"
                                              : "the reconfigure tool is not available");
                    continue;
                }
                try {
                    validate_call(turn.call, options_.pool.reconfigure_schema());
                    ExecutionSummary summary;
                    summary.stage_index = config.stage_index;
                    summary.sub_goal = config.sub_goal;
                    summary.summary = turn.call.arguments.at("execution_summary").get<std::string>();
                    if (summary.summary.empty()) {
                        throw Error(Errc::malformed_payload, "execution_summary must be non-empty");
                    }
                    ReconfigRequest request = request_from_json(turn.call.arguments);
                    if (request.proposed_sub_goal.empty() || request.update_reason.empty()) {
                        throw Error(Errc::malformed_payload,
                                    "new_sub_goal and update_reason must be non-empty");
                    }
                    stage.trace.terminal.kind = StageEndKind::reconfigured;
                    stage.trace.terminal.summary = std::move(summary);
                    stage.trace.terminal.request = std::move(request);
                    stage.trace.terminal.raw = completion.text;
                    stage.trace.terminal.logprob = completion.logprob_sum();
                    return;
                } catch (const Error& e) {
                    push_management_error(corrective, completion.text, e.what());
                    continue;
                }
            }

            // Task tool. Contract violations flow back as error observations
            // so the agent can self-correct via reconfiguration.
            TraceStep step;
            step.thought = turn.thought;
            step.call = turn.call;
            step.raw_assistant = completion.text;
            step.logprob = completion.logprob_sum();
            bool in_toolbox = std::find(config.toolbox.begin(), config.toolbox.end(), name) !=
                              config.toolbox.end();
            if (!in_toolbox) {
                step.observation.body =
                    "Error: tool '" + name + "' is not in the current toolbox.";
                step.observation.source_tool = name;
            } else {
                try {
                    validate_call(turn.call, options_.pool.schema(name));
                    step.observation = options_.registry->dispatch(turn.call, session);
                } catch (const Error& e) {
                    step.observation.body = std::string("Error: ") + e.what();
                    step.observation.source_tool = name;
                }
            }
            steps.push_back(std::move(step));
            ++task_tool_steps;

            if (options_.mode.fixed_interval_when &&
                task_tool_steps >= *options_.mode.fixed_interval_when) {
                ExecutionSummary summary;
                summary.stage_index = config.stage_index;
                summary.sub_goal = config.sub_goal;
                summary.summary = auto_stage_summary(steps);
                ReconfigRequest request;
                request.proposed_sub_goal = config.sub_goal;  // carried unchanged
                request.update_reason = "Fixed-interval reconfiguration trigger.";
                request.update_content = "sub_goal";
                stage.trace.terminal.kind = StageEndKind::reconfigured;
                stage.trace.terminal.summary = std::move(summary);
                stage.trace.terminal.request = std::move(request);
                stage.trace.terminal.forced = true;
                return;
            }
        }
    }

    static void push_management_error(std::vector<ChatMessage>& corrective,
                                      const std::string& raw, const std::string& error) {
        corrective.push_back({Role::assistant, raw});
        corrective.push_back({Role::user, render_tool_response("Error: " + error)});
    }

    OrchestratorOptions options_;
    ReconfigEngine engine_;
};

}  // namespace restage
