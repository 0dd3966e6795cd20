#pragma once
// Chat-completion backends: a scripted deterministic backend for replay and
// tests, and a live OpenAI-compatible HTTP backend, plus pluggable token
// counting for context budgets.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "restage/errors.hpp"

namespace restage {

using json = nlohmann::json;

enum class Role { system, user, assistant };

inline const char* role_name(Role r) {
    switch (r) {
        case Role::system: return "system";
        case Role::user: return "user";
        case Role::assistant: return "assistant";
    }
    return "user";
}

struct ChatMessage {
    Role role = Role::user;
    std::string content;
};

struct SamplingParams {
    double temperature = 0.6;
    double top_p = 0.95;
    int max_output_tokens = 4096;
    std::string model_id;

    // The runtime profile from the benchmark setup.
    static SamplingParams runtime(std::string model_id = {}) {
        SamplingParams p;
        p.model_id = std::move(model_id);
        return p;
    }

    // Higher-diversity profile used when sampling trajectories for training.
    static SamplingParams exploration(std::string model_id = {}) {
        SamplingParams p;
        p.temperature = 0.7;
        p.top_p = 0.9;
        p.model_id = std::move(model_id);
        return p;
    }
};

struct TokenLogprob {
    std::string token;
    double logprob = 0.0;  // always <= 0
};

struct Usage {
    int prompt_tokens = 0;
    int output_tokens = 0;
};

struct Completion {
    std::string text;
    std::optional<std::vector<TokenLogprob>> token_logprobs;
    Usage usage;

    std::optional<double> logprob_sum() const {
        if (!token_logprobs) return std::nullopt;
        double sum = 0.0;
        for (const auto& t : *token_logprobs) sum += t.logprob;
        return sum;
    }
};

class TokenCounter {
public:
    virtual ~TokenCounter() = default;
    virtual int count(const std::string& text) const = 0;
};

// ceil(chars / 4); deterministic and monotone under concatenation. The
// benchmark thresholds are interpreted against whichever counter is
// configured.
class ApproxTokenCounter : public TokenCounter {
public:
    int count(const std::string& text) const override {
        return static_cast<int>((text.size() + 3) / 4);
    }
};

class LlmBackend {
public:
    virtual ~LlmBackend() = default;
    virtual Completion complete(const std::vector<ChatMessage>& messages,
                                const SamplingParams& params) = 0;
};

inline void check_messages(const std::vector<ChatMessage>& messages) {
    if (messages.empty()) throw Error(Errc::config_error, "empty message list");
    if (messages.front().role != Role::system) {
        throw Error(Errc::config_error, "first message must have role system");
    }
}

struct ScriptEntry {
    std::string role = "inference";               // which queue: inference | engine
    std::string text;                             // the completion, byte-exact
    std::vector<std::string> expect_substrings;   // prompt-drift assertions
    std::optional<double> logprob;                // summed token logprob, <= 0
};

struct RecordedCall {
    std::string role;
    std::string prompt_text;  // all messages concatenated with role headers
    int prompt_tokens = 0;
};

// Replays scripted completions, keyed by call ordinal within each role queue.
// Expected-prompt substrings fail loudly so golden scenarios detect prompt
// drift instead of silently emitting canned text.
class ScriptedBackend : public LlmBackend {
public:
    explicit ScriptedBackend(std::vector<ScriptEntry> script,
                             std::string inference_model_id = "inference",
                             std::string engine_model_id = "engine",
                             std::shared_ptr<TokenCounter> counter = nullptr)
        : counter_(counter ? std::move(counter) : std::make_shared<ApproxTokenCounter>()),
          inference_model_id_(std::move(inference_model_id)),
          engine_model_id_(std::move(engine_model_id)) {
        for (auto& entry : script) {
            if (entry.logprob && *entry.logprob > 0.0) {
                throw Error(Errc::config_error, "scripted logprob must be <= 0");
            }
            if (entry.role == "engine") {
                engine_queue_.push_back(std::move(entry));
            } else if (entry.role == "inference") {
                inference_queue_.push_back(std::move(entry));
            } else {
                throw Error(Errc::config_error, "script role must be inference or engine");
            }
        }
    }

    Completion complete(const std::vector<ChatMessage>& messages,
                        const SamplingParams& params) override {
        check_messages(messages);
        std::lock_guard<std::mutex> lock(mutex_);
        const bool is_engine = params.model_id == engine_model_id_;
        if (!is_engine && params.model_id != inference_model_id_) {
            throw Error(Errc::backend_unavailable, "unknown model id: " + params.model_id);
        }
        auto& queue = is_engine ? engine_queue_ : inference_queue_;
        auto& cursor = is_engine ? engine_cursor_ : inference_cursor_;
        if (cursor >= queue.size()) {
            throw Error(Errc::backend_unavailable,
                        std::string(is_engine ? "engine" : "inference") + " script exhausted");
        }
        const ScriptEntry& entry = queue[cursor++];

        std::string prompt;
        for (const auto& m : messages) {
            prompt += std::string("[") + role_name(m.role) + "]\n" + m.content + "\n";
        }
        for (const auto& expect : entry.expect_substrings) {
            if (prompt.find(expect) == std::string::npos) {
                throw Error(Errc::backend_unavailable,
                            "scripted prompt assertion failed, expected substring: " + expect);
            }
        }
        RecordedCall rec;
        rec.role = is_engine ? "engine" : "inference";
        rec.prompt_text = prompt;
        rec.prompt_tokens = 0;
        for (const auto& m : messages) rec.prompt_tokens += counter_->count(m.content);
        recorded_.push_back(std::move(rec));

        Completion c;
        c.text = entry.text;
        c.usage.prompt_tokens = recorded_.back().prompt_tokens;
        c.usage.output_tokens = counter_->count(entry.text);
        if (entry.logprob) c.token_logprobs = {{entry.text.substr(0, 8), *entry.logprob}};
        return c;
    }

    const std::vector<RecordedCall>& recorded() const { return recorded_; }
    std::size_t remaining_inference() const { return inference_queue_.size() - inference_cursor_; }
    std::size_t remaining_engine() const { return engine_queue_.size() - engine_cursor_; }

private:
    std::shared_ptr<TokenCounter> counter_;
    std::string inference_model_id_;
    std::string engine_model_id_;
    std::vector<ScriptEntry> inference_queue_;
    std::vector<ScriptEntry> engine_queue_;
    std::size_t inference_cursor_ = 0;
    std::size_t engine_cursor_ = 0;
    std::vector<RecordedCall> recorded_;
    std::mutex mutex_;
};

struct HttpBackendOptions {
    std::string base_url = "http://127.0.0.1:8000";
    std::string path = "/v1/chat/completions";
    std::string api_key_env = "RESTAGE_API_KEY";
    bool request_logprobs = false;
    int connect_timeout_s = 10;
    int read_timeout_s = 600;
    int max_attempts = 3;              // on RateLimited; the next failure propagates
    int backoff_initial_ms = 500;      // doubles per retry
};

// Declared here, defined in http_backend.hpp to keep httplib out of the
// common include path.
class HttpBackend;

}  // namespace restage
