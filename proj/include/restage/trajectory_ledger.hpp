#pragma once
// Trajectory recording, trajectory-level credit assignment, RFT filtering,
// SFT/KTO dataset export, and the standalone KTO loss calculator.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "restage/config_model.hpp"
#include "restage/reconfig_engine.hpp"
#include "restage/tool_registry.hpp"

namespace restage {

inline constexpr const char* kTrajectorySchemaVersion = "1";

enum class StageEndKind { reconfigured, finished, limit_exceeded, aborted };

inline const char* stage_end_name(StageEndKind k) {
    switch (k) {
        case StageEndKind::reconfigured: return "reconfigured";
        case StageEndKind::finished: return "finished";
        case StageEndKind::limit_exceeded: return "limit_exceeded";
        case StageEndKind::aborted: return "aborted";
    }
    return "aborted";
}

inline StageEndKind stage_end_from_name(const std::string& name) {
    if (name == "reconfigured") return StageEndKind::reconfigured;
    if (name == "finished") return StageEndKind::finished;
    if (name == "limit_exceeded") return StageEndKind::limit_exceeded;
    if (name == "aborted") return StageEndKind::aborted;
    throw Error(Errc::corrupt_record, "unknown stage end kind: " + name);
}

struct StageOutcome {
    StageEndKind kind = StageEndKind::aborted;
    std::optional<ExecutionSummary> summary;   // present when reconfigured
    std::optional<ReconfigRequest> request;    // present when reconfigured
    json final;                                // finish arguments when finished
    std::string raw;                           // terminal assistant text
    std::optional<double> logprob;
    bool forced = false;                       // synthesized by fixed-interval ablation
    std::string detail;
};

struct StageTrace {
    std::vector<TraceStep> steps;  // task-tool steps only
    StageOutcome terminal;
};

struct StageRecord {
    StageConfiguration config;
    std::optional<EngineRecord> engine;  // absent only in the static-baseline mode
    std::string prompt_system;           // inference prompt at stage start
    std::string prompt_user;
    StageTrace trace;
};

enum class OutcomeLabel { success, failure, unlabeled };

inline const char* outcome_name(OutcomeLabel o) {
    switch (o) {
        case OutcomeLabel::success: return "success";
        case OutcomeLabel::failure: return "failure";
        case OutcomeLabel::unlabeled: return "unlabeled";
    }
    return "unlabeled";
}

inline OutcomeLabel outcome_from_name(const std::string& name) {
    if (name == "success") return OutcomeLabel::success;
    if (name == "failure") return OutcomeLabel::failure;
    if (name == "unlabeled") return OutcomeLabel::unlabeled;
    throw Error(Errc::corrupt_record, "unknown outcome: " + name);
}

enum class EndState { finished, reconfig_limit, iteration_limit, aborted };

inline const char* end_state_name(EndState e) {
    switch (e) {
        case EndState::finished: return "finished";
        case EndState::reconfig_limit: return "reconfig_limit";
        case EndState::iteration_limit: return "iteration_limit";
        case EndState::aborted: return "aborted";
    }
    return "aborted";
}

inline EndState end_state_from_name(const std::string& name) {
    if (name == "finished") return EndState::finished;
    if (name == "reconfig_limit") return EndState::reconfig_limit;
    if (name == "iteration_limit") return EndState::iteration_limit;
    if (name == "aborted") return EndState::aborted;
    throw Error(Errc::corrupt_record, "unknown end state: " + name);
}

// Summed token log-probabilities, one term per generation event. Observation
// factors are environment-owned and deliberately excluded.
struct LogprobBundle {
    double initial_config = 0.0;
    std::vector<double> stage_logprobs;
    std::vector<double> reconfig_logprobs;
};

struct RunMetrics {
    int steps = 0;  // inference completions across the whole run
    int stages = 0;
    int reconfig_count = 0;
    int max_prompt_tokens = 0;
    long total_prompt_tokens = 0;
    int adoption_adopted = 0;
    int adoption_total = 0;
};

struct TrajectoryMetadata {
    std::string inference_model;
    std::string engine_model;
    json sampling = json::object();
    std::string created_at;
    json ablation = json::object();
    std::string scenario;
    RunMetrics metrics;
};

struct Trajectory {
    std::string id;
    std::string task;
    std::vector<StageRecord> stages;
    OutcomeLabel outcome = OutcomeLabel::unlabeled;
    std::optional<LogprobBundle> logprobs;
    EndState end_state = EndState::aborted;
    json final;  // finish payload for finished runs
    TrajectoryMetadata metadata;
};

// ---------------------------------------------------------------------------
// Credit assignment & dataset export
// ---------------------------------------------------------------------------

enum class SampleModule { inference, reconfiguration };

struct TrainingSample {
    SampleModule module = SampleModule::inference;
    std::string prompt_payload;
    std::string target_payload;
    int label = 0;  // y in {0, 1}
    std::string trajectory_id;
    int stage_index = 0;
};

// The exact text the agent emitted across a stage, with tool responses as
// interleaved user turns. This is the SFT target for the inference module.
inline std::string serialize_stage_trace(const StageTrace& trace) {
    std::string out;
    for (const auto& step : trace.steps) {
        if (!out.empty()) out += "\n";
        out += step.raw_assistant + "\n" + render_tool_response(step.observation.body);
    }
    if (!trace.terminal.raw.empty()) {
        if (!out.empty()) out += "\n";
        out += trace.terminal.raw;
    }
    return out;
}

// Trajectory-level label inheritance: every stage trace and every
// configuration in the trajectory inherits the trajectory's y.
inline std::vector<TrainingSample> assign_labels(const Trajectory& trajectory, int y) {
    if (y != 0 && y != 1) throw Error(Errc::unlabeled_trajectory, "label must be 0 or 1");
    std::vector<TrainingSample> samples;
    for (const auto& stage : trajectory.stages) {
        TrainingSample inference;
        inference.module = SampleModule::inference;
        inference.prompt_payload = stage.prompt_system + "\n\n" + stage.prompt_user;
        inference.target_payload = serialize_stage_trace(stage.trace);
        inference.label = y;
        inference.trajectory_id = trajectory.id;
        inference.stage_index = stage.config.stage_index;
        samples.push_back(std::move(inference));
    }
    for (const auto& stage : trajectory.stages) {
        if (!stage.engine) continue;  // static baseline stages have no engine sample
        TrainingSample reconfig;
        reconfig.module = SampleModule::reconfiguration;
        reconfig.prompt_payload = stage.engine->prompt_text;
        reconfig.target_payload = engine_output_to_json(stage.engine->output).dump();
        reconfig.label = y;
        reconfig.trajectory_id = trajectory.id;
        reconfig.stage_index = stage.config.stage_index;
        samples.push_back(std::move(reconfig));
    }
    return samples;
}

inline int trajectory_label(const Trajectory& t) {
    switch (t.outcome) {
        case OutcomeLabel::success: return 1;
        case OutcomeLabel::failure: return 0;
        case OutcomeLabel::unlabeled:
            throw Error(Errc::unlabeled_trajectory, "trajectory " + t.id + " has no label");
    }
    return 0;
}

// Rejection-sampling filter: keeps exactly the successful trajectories,
// preserving input order.
inline std::vector<Trajectory> filter_rft(const std::vector<Trajectory>& trajectories) {
    std::vector<Trajectory> kept;
    for (const auto& t : trajectories) {
        if (trajectory_label(t) == 1) kept.push_back(t);
    }
    return kept;
}

// ---------------------------------------------------------------------------
// KTO loss calculator
// ---------------------------------------------------------------------------

struct KtoParams {
    double lambda_desirable = 1.0;    // lambda_D
    double lambda_undesirable = 1.0;  // lambda_U
    double beta = 0.1;
    double z0 = 0.0;  // KL target, supplied externally
};

using ValueFn = std::function<double(double)>;

inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// v(u) = 1 - logistic(beta * u): desirable samples with ratio above z0 incur
// low loss. The value function is pluggable; pass a custom one to get the
// increasing-v reading instead.
inline ValueFn default_value_fn(double beta) {
    return [beta](double u) { return 1.0 - logistic(beta * u); };
}

inline double kto_loss(double log_ratio, int y, const KtoParams& params,
                       const ValueFn& value_fn = nullptr) {
    const ValueFn& v = value_fn ? value_fn : default_value_fn(params.beta);
    if (y == 1) return params.lambda_desirable * v(log_ratio - params.z0);
    if (y == 0) return params.lambda_undesirable * v(params.z0 - log_ratio);
    throw Error(Errc::config_error, "KTO label must be 0 or 1");
}

// Log of the trajectory probability with observation factors excluded:
// initial configuration + every stage trace + every later reconfiguration.
inline double trajectory_logprob(const Trajectory& trajectory) {
    if (!trajectory.logprobs) {
        throw Error(Errc::missing_logprobs, "trajectory " + trajectory.id + " has no logprobs");
    }
    const LogprobBundle& bundle = *trajectory.logprobs;
    double sum = bundle.initial_config;
    for (double v : bundle.stage_logprobs) sum += v;
    for (double v : bundle.reconfig_logprobs) sum += v;
    return sum;
}

// ---------------------------------------------------------------------------
// JSON persistence (schema-versioned, lossless)
// ---------------------------------------------------------------------------

namespace detail {

inline json opt_double(const std::optional<double>& v) {
    return v ? json(*v) : json(nullptr);
}

inline std::optional<double> opt_double_from(const json& j) {
    if (j.is_null()) return std::nullopt;
    return j.get<double>();
}

}  // namespace detail

inline json observation_to_json(const Observation& o) {
    return json{{"body", o.body},
                {"truncated", o.truncated},
                {"source_tool", o.source_tool},
                {"latency_ms", o.latency_ms}};
}

inline Observation observation_from_json(const json& j) {
    Observation o;
    o.body = j.at("body").get<std::string>();
    o.truncated = j.at("truncated").get<bool>();
    o.source_tool = j.at("source_tool").get<std::string>();
    o.latency_ms = j.at("latency_ms").get<long>();
    return o;
}

inline json step_to_json(const TraceStep& s) {
    return json{{"thought", s.thought},
                {"call", {{"name", s.call.name}, {"arguments", s.call.arguments}}},
                {"observation", observation_to_json(s.observation)},
                {"raw", s.raw_assistant},
                {"logprob", detail::opt_double(s.logprob)}};
}

inline TraceStep step_from_json(const json& j) {
    TraceStep s;
    s.thought = j.at("thought").get<std::string>();
    s.call.name = j.at("call").at("name").get<std::string>();
    s.call.arguments = j.at("call").at("arguments");
    s.observation = observation_from_json(j.at("observation"));
    s.raw_assistant = j.at("raw").get<std::string>();
    s.logprob = detail::opt_double_from(j.at("logprob"));
    return s;
}

inline json outcome_to_json(const StageOutcome& o) {
    json j{{"kind", stage_end_name(o.kind)},
           {"raw", o.raw},
           {"forced", o.forced},
           {"detail", o.detail},
           {"logprob", detail::opt_double(o.logprob)},
           {"final", o.final.is_null() ? json(nullptr) : o.final}};
    j["summary"] = o.summary ? summary_to_json(*o.summary) : json(nullptr);
    j["request"] = o.request ? request_to_json(*o.request) : json(nullptr);
    return j;
}

inline StageOutcome outcome_from_json(const json& j) {
    StageOutcome o;
    o.kind = stage_end_from_name(j.at("kind").get<std::string>());
    o.raw = j.at("raw").get<std::string>();
    o.forced = j.at("forced").get<bool>();
    o.detail = j.at("detail").get<std::string>();
    o.logprob = detail::opt_double_from(j.at("logprob"));
    o.final = j.at("final");
    if (!j.at("summary").is_null()) o.summary = summary_from_json(j["summary"]);
    if (!j.at("request").is_null()) o.request = request_from_json(j["request"]);
    return o;
}

inline json engine_record_to_json(const EngineRecord& e) {
    return json{{"prompt", e.prompt_text},
                {"raw_output", e.raw_output},
                {"output", engine_output_to_json(e.output)},
                {"knowledge_directive", e.knowledge_directive},
                {"adopted", e.adopted ? json(*e.adopted) : json(nullptr)},
                {"logprob", detail::opt_double(e.logprob)},
                {"warnings", e.warnings},
                {"reprompts", e.reprompts}};
}

inline EngineRecord engine_record_from_json(const json& j) {
    EngineRecord e;
    e.prompt_text = j.at("prompt").get<std::string>();
    e.raw_output = j.at("raw_output").get<std::string>();
    e.output = engine_output_from_json(j.at("output"));
    e.knowledge_directive = j.at("knowledge_directive").get<std::string>();
    if (!j.at("adopted").is_null()) e.adopted = j["adopted"].get<bool>();
    e.logprob = detail::opt_double_from(j.at("logprob"));
    e.warnings = j.at("warnings").get<std::vector<std::string>>();
    e.reprompts = j.at("reprompts").get<int>();
    return e;
}

inline json stage_to_json(const StageRecord& s) {
    json steps = json::array();
    for (const auto& step : s.trace.steps) steps.push_back(step_to_json(step));
    return json{{"config", configuration_to_json(s.config)},
                {"engine", s.engine ? engine_record_to_json(*s.engine) : json(nullptr)},
                {"prompt_system", s.prompt_system},
                {"prompt_user", s.prompt_user},
                {"steps", steps},
                {"terminal", outcome_to_json(s.trace.terminal)}};
}

inline StageRecord stage_from_json(const json& j) {
    StageRecord s;
    s.config = configuration_from_json(j.at("config"));
    if (!j.at("engine").is_null()) s.engine = engine_record_from_json(j["engine"]);
    s.prompt_system = j.at("prompt_system").get<std::string>();
    s.prompt_user = j.at("prompt_user").get<std::string>();
    for (const auto& step : j.at("steps")) s.trace.steps.push_back(step_from_json(step));
    s.trace.terminal = outcome_from_json(j.at("terminal"));
    return s;
}

inline json metrics_to_json(const RunMetrics& m) {
    return json{{"steps", m.steps},
                {"stages", m.stages},
                {"reconfig_count", m.reconfig_count},
                {"max_prompt_tokens", m.max_prompt_tokens},
                {"total_prompt_tokens", m.total_prompt_tokens},
                {"adoption_adopted", m.adoption_adopted},
                {"adoption_total", m.adoption_total}};
}

inline RunMetrics metrics_from_json(const json& j) {
    RunMetrics m;
    m.steps = j.at("steps").get<int>();
    m.stages = j.at("stages").get<int>();
    m.reconfig_count = j.at("reconfig_count").get<int>();
    m.max_prompt_tokens = j.at("max_prompt_tokens").get<int>();
    m.total_prompt_tokens = j.at("total_prompt_tokens").get<long>();
    m.adoption_adopted = j.at("adoption_adopted").get<int>();
    m.adoption_total = j.at("adoption_total").get<int>();
    return m;
}

// normalize drops timestamps, model ids, and latencies for golden-output
// comparison.
inline json persist(const Trajectory& t, bool normalize = false) {
    json stages = json::array();
    for (const auto& s : t.stages) stages.push_back(stage_to_json(s));
    json j{{"version", kTrajectorySchemaVersion},
           {"id", t.id},
           {"task", t.task},
           {"stages", std::move(stages)},
           {"outcome", outcome_name(t.outcome)},
           {"end_state", end_state_name(t.end_state)},
           {"final", t.final.is_null() ? json(nullptr) : t.final}};
    if (t.logprobs) {
        j["logprobs"] = json{{"initial_config", t.logprobs->initial_config},
                             {"stages", t.logprobs->stage_logprobs},
                             {"reconfigs", t.logprobs->reconfig_logprobs}};
    } else {
        j["logprobs"] = nullptr;
    }
    j["metadata"] = json{{"inference_model", t.metadata.inference_model},
                         {"engine_model", t.metadata.engine_model},
                         {"sampling", t.metadata.sampling},
                         {"created_at", t.metadata.created_at},
                         {"ablation", t.metadata.ablation},
                         {"scenario", t.metadata.scenario},
                         {"metrics", metrics_to_json(t.metadata.metrics)}};
    if (normalize) {
        j["metadata"]["created_at"] = "";
        j["metadata"]["inference_model"] = "";
        j["metadata"]["engine_model"] = "";
        for (auto& stage : j["stages"]) {
            for (auto& step : stage["steps"]) step["observation"]["latency_ms"] = 0;
        }
    }
    return j;
}

inline Trajectory load(const json& j) {
    if (!j.is_object() || !j.contains("version")) {
        throw Error(Errc::corrupt_record, "record is not a trajectory object");
    }
    if (j["version"] != kTrajectorySchemaVersion) {
        throw Error(Errc::schema_version_mismatch, "unsupported version " + j["version"].dump());
    }
    try {
        Trajectory t;
        t.id = j.at("id").get<std::string>();
        t.task = j.at("task").get<std::string>();
        for (const auto& s : j.at("stages")) t.stages.push_back(stage_from_json(s));
        t.outcome = outcome_from_name(j.at("outcome").get<std::string>());
        t.end_state = end_state_from_name(j.at("end_state").get<std::string>());
        t.final = j.at("final");
        if (!j.at("logprobs").is_null()) {
            LogprobBundle b;
            b.initial_config = j["logprobs"].at("initial_config").get<double>();
            b.stage_logprobs = j["logprobs"].at("stages").get<std::vector<double>>();
            b.reconfig_logprobs = j["logprobs"].at("reconfigs").get<std::vector<double>>();
            t.logprobs = std::move(b);
        }
        const json& m = j.at("metadata");
        t.metadata.inference_model = m.at("inference_model").get<std::string>();
        t.metadata.engine_model = m.at("engine_model").get<std::string>();
        t.metadata.sampling = m.at("sampling");
        t.metadata.created_at = m.at("created_at").get<std::string>();
        t.metadata.ablation = m.at("ablation");
        t.metadata.scenario = m.at("scenario").get<std::string>();
        t.metadata.metrics = metrics_from_json(m.at("metrics"));
        return t;
    } catch (const Error&) {
        throw;
    } catch (const std::exception& e) {
        throw Error(Errc::corrupt_record, e.what());
    }
}

// ---------------------------------------------------------------------------
// Trajectory log (JSONL, one record per line, append-only)
// ---------------------------------------------------------------------------

inline void append_to_log(const std::filesystem::path& path, const Trajectory& t) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::app);
    if (!out) throw Error(Errc::corrupt_record, "cannot open log " + path.string());
    out << persist(t).dump() << "\n";
}

inline std::vector<Trajectory> read_log(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::corrupt_record, "cannot open log " + path.string());
    std::vector<Trajectory> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded()) {
            throw Error(Errc::corrupt_record, "line " + std::to_string(line_no) + " is not JSON");
        }
        try {
            out.push_back(load(j));
        } catch (const Error& e) {
            if (e.code() == Errc::schema_version_mismatch) throw;
            throw Error(Errc::corrupt_record,
                        "line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Dataset export
// ---------------------------------------------------------------------------

enum class DatasetFormat { sft, kto };

struct ExportResult {
    std::filesystem::path inference_path;
    std::filesystem::path reconfiguration_path;
    std::size_t inference_count = 0;
    std::size_t reconfiguration_count = 0;
    std::map<int, std::size_t> label_histogram;
    bool empty_warning = false;
};

inline json sample_to_json(const TrainingSample& s, bool include_label) {
    json j{{"module", s.module == SampleModule::inference ? "inference" : "reconfiguration"},
           {"prompt", s.prompt_payload},
           {"target", s.target_payload},
           {"trajectory_id", s.trajectory_id},
           {"stage_index", s.stage_index}};
    if (include_label) j["label"] = s.label;
    return j;
}

// Writes one JSONL file per module. sft keeps only successful trajectories;
// kto keeps everything and records the inherited label on every sample.
inline ExportResult export_datasets(const std::vector<Trajectory>& trajectories,
                                    DatasetFormat format,
                                    const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    const char* tag = format == DatasetFormat::sft ? "sft" : "kto";
    ExportResult result;
    result.inference_path = out_dir / (std::string(tag) + "_inference.jsonl");
    result.reconfiguration_path = out_dir / (std::string(tag) + "_reconfiguration.jsonl");
    std::ofstream inference_out(result.inference_path, std::ios::binary | std::ios::trunc);
    std::ofstream reconfig_out(result.reconfiguration_path, std::ios::binary | std::ios::trunc);

    const std::vector<Trajectory> selected =
        format == DatasetFormat::sft ? filter_rft(trajectories) : trajectories;
    const bool include_label = format == DatasetFormat::kto;
    for (const auto& t : selected) {
        for (const auto& sample : assign_labels(t, trajectory_label(t))) {
            const json line = sample_to_json(sample, include_label);
            if (sample.module == SampleModule::inference) {
                inference_out << line.dump() << "\n";
                ++result.inference_count;
            } else {
                reconfig_out << line.dump() << "\n";
                ++result.reconfiguration_count;
            }
            if (include_label) ++result.label_histogram[sample.label];
        }
    }
    result.empty_warning = result.inference_count == 0 && result.reconfiguration_count == 0;
    return result;
}

// ---------------------------------------------------------------------------
// Tool usage statistics
// ---------------------------------------------------------------------------

struct ToolUsage {
    double trajectory_fraction = 0.0;  // trajectories whose toolbox union has the tool
    double step_fraction = 0.0;        // steps invoking the tool
    std::size_t trajectories = 0;
    std::size_t steps = 0;
};

inline std::map<std::string, ToolUsage> tool_usage_stats(
    const std::vector<Trajectory>& trajectories,
    const std::vector<std::string>& tool_names = {}) {
    std::map<std::string, ToolUsage> stats;
    for (const auto& name : tool_names) stats[name];
    std::size_t total_steps = 0;
    for (const auto& t : trajectories) {
        std::map<std::string, bool> in_union;
        for (const auto& stage : t.stages) {
            for (const auto& name : stage.config.toolbox) in_union[name] = true;
            for (const auto& step : stage.trace.steps) {
                ++stats[step.call.name].steps;
                ++total_steps;
            }
        }
        for (const auto& [name, present] : in_union) {
            if (present) ++stats[name].trajectories;
        }
    }
    for (auto& [name, usage] : stats) {
        if (!trajectories.empty()) {
            usage.trajectory_fraction =
                static_cast<double>(usage.trajectories) / trajectories.size();
        }
        if (total_steps > 0) {
            usage.step_fraction = static_cast<double>(usage.steps) / total_steps;
        }
    }
    return stats;
}

}  // namespace restage
