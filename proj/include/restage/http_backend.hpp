#pragma once
// Live OpenAI-compatible chat-completions client. Retries rate limits with
// exponential backoff; requests token logprobs when trajectory recording is
// enabled.

#include <httplib.h>

#include "restage/llm_backend.hpp"

namespace restage {

class HttpBackend : public LlmBackend {
public:
    explicit HttpBackend(HttpBackendOptions options) : options_(std::move(options)) {}

    Completion complete(const std::vector<ChatMessage>& messages,
                        const SamplingParams& params) override {
        check_messages(messages);
        json body{{"model", params.model_id},
                  {"temperature", params.temperature},
                  {"top_p", params.top_p},
                  {"max_tokens", params.max_output_tokens}};
        body["messages"] = json::array();
        for (const auto& m : messages) {
            body["messages"].push_back({{"role", role_name(m.role)}, {"content", m.content}});
        }
        if (options_.request_logprobs) body["logprobs"] = true;

        int backoff_ms = options_.backoff_initial_ms;
        for (int attempt = 1;; ++attempt) {
            try {
                return post_once(body);
            } catch (const Error& e) {
                if (e.code() != Errc::rate_limited || attempt >= options_.max_attempts) throw;
                std::this_thread::sleep_for(std::chrono::milliseconds(backoff_ms));
                backoff_ms *= 2;
            }
        }
    }

private:
    Completion post_once(const json& body) {
        httplib::Client client(options_.base_url);
        client.set_connection_timeout(options_.connect_timeout_s, 0);
        client.set_read_timeout(options_.read_timeout_s, 0);
        httplib::Headers headers;
        if (const char* key = std::getenv(options_.api_key_env.c_str()); key && *key) {
            headers.emplace("Authorization", std::string("Bearer ") + key);
        }
        auto res = client.Post(options_.path, headers, body.dump(), "application/json");
        if (!res) {
            throw Error(Errc::backend_unavailable,
                        options_.base_url + options_.path + ": " + httplib::to_string(res.error()));
        }
        if (res->status == 429) {
            int retry_after = 1;
            if (res->has_header("Retry-After")) {
                retry_after = std::atoi(res->get_header_value("Retry-After").c_str());
            }
            throw Error(Errc::rate_limited, "retry after " + std::to_string(retry_after) + "s");
        }
        if (res->status < 200 || res->status >= 300) {
            if (res->body.find("context_length") != std::string::npos ||
                res->body.find("maximum context") != std::string::npos) {
                throw Error(Errc::context_overflow, res->body);
            }
            throw Error(Errc::backend_unavailable,
                        "HTTP " + std::to_string(res->status) + ": " + res->body);
        }
        json reply = json::parse(res->body, nullptr, false);
        if (reply.is_discarded() || !reply.contains("choices") || reply["choices"].empty()) {
            throw Error(Errc::backend_unavailable, "malformed completion response");
        }
        const json& choice = reply["choices"][0];
        Completion out;
        out.text = choice.at("message").at("content").get<std::string>();
        if (choice.contains("logprobs") && choice["logprobs"].is_object() &&
            choice["logprobs"].contains("content")) {
            std::vector<TokenLogprob> lps;
            for (const auto& t : choice["logprobs"]["content"]) {
                lps.push_back({t.value("token", std::string{}), t.value("logprob", 0.0)});
            }
            out.token_logprobs = std::move(lps);
        }
        if (reply.contains("usage")) {
            out.usage.prompt_tokens = reply["usage"].value("prompt_tokens", 0);
            out.usage.output_tokens = reply["usage"].value("completion_tokens", 0);
        }
        return out;
    }

    HttpBackendOptions options_;
};

}  // namespace restage
