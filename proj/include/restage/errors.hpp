#pragma once
// Typed error codes shared across the runtime. Tool failures are surfaced to
// the agent as observation text, never as exceptions; everything else throws.

#include <stdexcept>
#include <string>

namespace restage {

enum class Errc {
    // config_model
    unknown_tool,
    reserved_tool,
    too_few_tools,
    // prompt_assembly
    missing_schema,
    template_error,
    // react_codec
    no_tool_call,
    malformed_payload,
    multiple_tool_calls,
    missing_required,
    type_mismatch,
    enum_violation,
    unknown_property,
    // tool_registry (usually reported as observations)
    tool_not_registered,
    tool_timeout,
    tool_failure,
    // llm_backend
    backend_unavailable,
    context_overflow,
    rate_limited,
    // reconfig_engine
    engine_output_invalid,
    no_structured_block,
    // trajectory_ledger
    unlabeled_trajectory,
    missing_logprobs,
    schema_version_mismatch,
    corrupt_record,
    empty_dataset,
    // cli / config files
    config_error,
};

inline const char* errc_name(Errc c) {
    switch (c) {
        case Errc::unknown_tool: return "UnknownTool";
        case Errc::reserved_tool: return "ReservedTool";
        case Errc::too_few_tools: return "TooFewTools";
        case Errc::missing_schema: return "MissingSchema";
        case Errc::template_error: return "TemplateError";
        case Errc::no_tool_call: return "NoToolCall";
        case Errc::malformed_payload: return "MalformedPayload";
        case Errc::multiple_tool_calls: return "MultipleToolCalls";
        case Errc::missing_required: return "MissingRequired";
        case Errc::type_mismatch: return "TypeMismatch";
        case Errc::enum_violation: return "EnumViolation";
        case Errc::unknown_property: return "UnknownProperty";
        case Errc::tool_not_registered: return "ToolNotRegistered";
        case Errc::tool_timeout: return "ToolTimeout";
        case Errc::tool_failure: return "ToolFailure";
        case Errc::backend_unavailable: return "BackendUnavailable";
        case Errc::context_overflow: return "ContextOverflow";
        case Errc::rate_limited: return "RateLimited";
        case Errc::engine_output_invalid: return "EngineOutputInvalid";
        case Errc::no_structured_block: return "NoStructuredBlock";
        case Errc::unlabeled_trajectory: return "UnlabeledTrajectory";
        case Errc::missing_logprobs: return "MissingLogprobs";
        case Errc::schema_version_mismatch: return "SchemaVersionMismatch";
        case Errc::corrupt_record: return "CorruptRecord";
        case Errc::empty_dataset: return "EmptyDataset";
        case Errc::config_error: return "ConfigError";
    }
    return "UnknownError";
}

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& detail)
        : std::runtime_error(std::string(errc_name(code)) + ": " + detail), code_(code) {}

    Errc code() const { return code_; }

private:
    Errc code_;
};

}  // namespace restage
