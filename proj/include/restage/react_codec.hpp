#pragma once
// ReAct turn protocol: <think> blocks, single <tool_call> payloads, and
// <tool_response> wrapping with tag-collision escaping, plus JSON-schema
// validation of tool calls.

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "restage/errors.hpp"

namespace restage {

using json = nlohmann::json;

struct ToolSchema {
    std::string name;
    std::string description;
    json arguments = json::object();  // {"type":"object","properties":{...},"required":[...]}

    const json& properties() const {
        static const json empty = json::object();
        auto it = arguments.find("properties");
        return it != arguments.end() ? *it : empty;
    }

    std::vector<std::string> required() const {
        std::vector<std::string> out;
        if (auto it = arguments.find("required"); it != arguments.end() && it->is_array()) {
            for (const auto& r : *it) out.push_back(r.get<std::string>());
        }
        return out;
    }
};

struct ToolCall {
    std::string name;
    json arguments = json::object();

    bool operator==(const ToolCall& other) const {
        return name == other.name && arguments == other.arguments;
    }
};

struct AssistantTurn {
    std::string thought;
    ToolCall call;
    std::vector<std::string> warnings;  // unknown top-level payload keys etc.
};

namespace detail {

inline std::string replace_all(std::string text, const std::string& from, const std::string& to) {
    if (from.empty()) return text;
    std::string out;
    out.reserve(text.size());
    std::size_t pos = 0;
    while (true) {
        std::size_t hit = text.find(from, pos);
        if (hit == std::string::npos) {
            out.append(text, pos, std::string::npos);
            return out;
        }
        out.append(text, pos, hit - pos);
        out.append(to);
        pos = hit + from.size();
    }
}

// Finds all inner spans of <tag>...</tag>.
inline std::vector<std::string> extract_blocks(const std::string& text, const std::string& tag) {
    std::vector<std::string> out;
    const std::string open = "<" + tag + ">";
    const std::string close = "</" + tag + ">";
    std::size_t pos = 0;
    while (true) {
        std::size_t start = text.find(open, pos);
        if (start == std::string::npos) break;
        std::size_t body = start + open.size();
        std::size_t end = text.find(close, body);
        if (end == std::string::npos) break;
        out.push_back(text.substr(body, end - body));
        pos = end + close.size();
    }
    return out;
}

inline std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

}  // namespace detail

// The closing tag is ambiguous inside a flat tag protocol, so observations are
// escaped before wrapping: first any "<\" becomes "<\\" (making the escape
// itself reversible), then "</tool_response>" becomes "<\/tool_response>".
inline std::string escape_tool_response_body(const std::string& body) {
    std::string out = detail::replace_all(body, "<\\", "<\\\\");
    return detail::replace_all(out, "</tool_response>", "<\\/tool_response>");
}

inline std::string unescape_tool_response_body(const std::string& body) {
    std::string out = detail::replace_all(body, "<\\/tool_response>", "</tool_response>");
    return detail::replace_all(out, "<\\\\", "<\\");
}

inline std::string render_tool_response(const std::string& observation) {
    return "<tool_response>\n" + escape_tool_response_body(observation) + "\n</tool_response>";
}

// Inverse of render_tool_response; recovers the original observation bytes.
inline std::string parse_tool_response(const std::string& wrapped) {
    static const std::string prefix = "<tool_response>\n";
    static const std::string suffix = "\n</tool_response>";
    if (wrapped.size() < prefix.size() + suffix.size() ||
        wrapped.compare(0, prefix.size(), prefix) != 0 ||
        wrapped.compare(wrapped.size() - suffix.size(), suffix.size(), suffix) != 0) {
        throw Error(Errc::malformed_payload, "not a <tool_response> block");
    }
    std::string body = wrapped.substr(prefix.size(), wrapped.size() - prefix.size() - suffix.size());
    return unescape_tool_response_body(body);
}

inline AssistantTurn parse_assistant_turn(const std::string& raw) {
    auto calls = detail::extract_blocks(raw, "tool_call");
    if (calls.empty()) throw Error(Errc::no_tool_call, "no <tool_call> block in completion");
    if (calls.size() > 1) {
        throw Error(Errc::multiple_tool_calls,
                    std::to_string(calls.size()) + " <tool_call> blocks in one turn");
    }

    AssistantTurn turn;
    auto thoughts = detail::extract_blocks(raw, "think");
    if (!thoughts.empty()) turn.thought = detail::trim(thoughts.back());

    json payload = json::parse(detail::trim(calls.front()), nullptr, false);
    if (payload.is_discarded() || !payload.is_object()) {
        throw Error(Errc::malformed_payload, "tool_call payload is not a JSON object");
    }
    if (!payload.contains("name") || !payload["name"].is_string()) {
        throw Error(Errc::malformed_payload, "tool_call payload lacks a string \"name\"");
    }
    if (!payload.contains("arguments") || !payload["arguments"].is_object()) {
        throw Error(Errc::malformed_payload, "tool_call payload lacks an object \"arguments\"");
    }
    turn.call.name = payload["name"].get<std::string>();
    turn.call.arguments = payload["arguments"];
    for (auto it = payload.begin(); it != payload.end(); ++it) {
        if (it.key() != "name" && it.key() != "arguments") {
            turn.warnings.push_back("ignored unknown payload key: " + it.key());
        }
    }
    return turn;
}

// Renders a turn back into the tagged format; parse_assistant_turn of the
// result recovers (thought, call) exactly for tag-free thoughts.
inline std::string emit_assistant_turn(const AssistantTurn& turn) {
    json payload{{"name", turn.call.name}, {"arguments", turn.call.arguments}};
    return "<think>" + turn.thought + "</think>\n<tool_call>\n" + payload.dump() + "\n</tool_call>";
}

namespace detail {

inline bool matches_type_tag(const json& value, const std::string& tag) {
    if (tag == "string") return value.is_string();
    if (tag == "integer") return value.is_number_integer() || value.is_number_unsigned();
    if (tag == "number") return value.is_number();
    if (tag == "boolean") return value.is_boolean();
    if (tag == "array") return value.is_array();
    if (tag == "object") return value.is_object();
    if (tag == "null") return value.is_null();
    return false;
}

inline std::string type_tags_to_string(const json& type_field) {
    if (type_field.is_string()) return type_field.get<std::string>();
    std::string out;
    for (const auto& t : type_field) {
        if (!out.empty()) out += "|";
        out += t.get<std::string>();
    }
    return out;
}

inline void validate_value(const json& value, const json& prop_schema, const std::string& path);

inline void validate_object(const json& value, const json& schema, const std::string& path) {
    const json empty = json::object();
    const json& props = schema.contains("properties") ? schema["properties"] : empty;
    if (schema.contains("required")) {
        for (const auto& req : schema["required"]) {
            const std::string name = req.get<std::string>();
            if (!value.contains(name)) {
                throw Error(Errc::missing_required, path.empty() ? name : path + "." + name);
            }
        }
    }
    for (auto it = value.begin(); it != value.end(); ++it) {
        const std::string sub_path = path.empty() ? it.key() : path + "." + it.key();
        if (!props.contains(it.key())) throw Error(Errc::unknown_property, sub_path);
        validate_value(it.value(), props[it.key()], sub_path);
    }
}

inline void validate_value(const json& value, const json& prop_schema, const std::string& path) {
    if (prop_schema.contains("type")) {
        const json& type_field = prop_schema["type"];
        bool ok = false;
        if (type_field.is_string()) {
            ok = matches_type_tag(value, type_field.get<std::string>());
        } else if (type_field.is_array()) {
            for (const auto& t : type_field) {
                if (matches_type_tag(value, t.get<std::string>())) { ok = true; break; }
            }
        }
        if (!ok) {
            throw Error(Errc::type_mismatch,
                        path + " expected " + type_tags_to_string(type_field));
        }
    }
    if (prop_schema.contains("enum")) {
        bool found = false;
        for (const auto& allowed : prop_schema["enum"]) {
            if (allowed == value) { found = true; break; }
        }
        if (!found) throw Error(Errc::enum_violation, path + " = " + value.dump());
    }
    if (value.is_array()) {
        if (prop_schema.contains("minItems") &&
            value.size() < prop_schema["minItems"].get<std::size_t>()) {
            throw Error(Errc::type_mismatch, path + " has fewer than minItems elements");
        }
        if (prop_schema.contains("items")) {
            std::size_t idx = 0;
            for (const auto& element : value) {
                validate_value(element, prop_schema["items"], path + "[" + std::to_string(idx++) + "]");
            }
        }
    }
    if (value.is_object() && (prop_schema.contains("properties") || prop_schema.contains("required"))) {
        validate_object(value, prop_schema, path);
    }
}

}  // namespace detail

// Validates a call's arguments against the tool's parameter schema: required
// properties present, type tags (including unions) respected, enum values
// allowed, unknown properties rejected. Returns the call unchanged.
inline const ToolCall& validate_call(const ToolCall& call, const ToolSchema& schema) {
    if (call.name != schema.name) {
        throw Error(Errc::unknown_tool,
                    "call '" + call.name + "' validated against schema '" + schema.name + "'");
    }
    detail::validate_object(call.arguments, schema.arguments, "");
    return call;
}

// Sanity-checks a schema definition itself: required names must be declared
// properties and enum lists must be non-empty.
inline void validate_schema(const ToolSchema& schema) {
    const json& props = schema.properties();
    for (const auto& req : schema.required()) {
        if (!props.contains(req)) {
            throw Error(Errc::config_error,
                        "schema '" + schema.name + "' requires undeclared property '" + req + "'");
        }
    }
    for (auto it = props.begin(); it != props.end(); ++it) {
        if (it.value().contains("enum") && it.value()["enum"].empty()) {
            throw Error(Errc::config_error,
                        "schema '" + schema.name + "' property '" + it.key() + "' has empty enum");
        }
    }
}

inline ToolSchema tool_schema_from_json(const json& j) {
    if (!j.is_object() || !j.contains("name") || !j.contains("arguments")) {
        throw Error(Errc::config_error, "tool schema entry needs name and arguments");
    }
    ToolSchema schema;
    schema.name = j["name"].get<std::string>();
    schema.description = j.value("description", std::string{});
    schema.arguments = j["arguments"];
    validate_schema(schema);
    return schema;
}

inline json tool_schema_to_json(const ToolSchema& schema) {
    return json{{"name", schema.name},
                {"description", schema.description},
                {"arguments", schema.arguments}};
}

}  // namespace restage
