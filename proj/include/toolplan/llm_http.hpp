#pragma once

// Chat-completion HTTP backend. Credentials come from the environment only.

#include <cstdlib>
#include <string>

#include "httplib.h"
#include "toolplan/llm.hpp"

namespace toolplan {

struct HttpBackendConfig {
    std::string base_url = "https://api.openai.com";
    std::string path = "/v1/chat/completions";
    std::string model = "gpt-4";
    std::string api_key_env = "OPENAI_API_KEY";
    int timeout_seconds = 120;
};

class HttpBackend final : public Backend {
public:
    explicit HttpBackend(HttpBackendConfig config) : config_(std::move(config))
    {
        char const * key = std::getenv(config_.api_key_env.c_str());
        if (!key || !*key)
            throw BackendError("API key environment variable not set: "
                               + config_.api_key_env);
        api_key_ = key;
    }

    CompletionResponse complete(CompletionRequest const & request) override
    {
        if (request.prompt.empty()) throw BackendError("empty prompt");
        json body = {
            {"model", config_.model},
            {"messages",
             json::array({{{"role", "user"}, {"content", request.prompt}}})},
            {"temperature", request.temperature},
        };
        if (request.max_tokens > 0) body["max_tokens"] = request.max_tokens;
        if (!request.stop_markers.empty()) body["stop"] = request.stop_markers;

        httplib::Client client(config_.base_url);
        client.set_connection_timeout(config_.timeout_seconds);
        client.set_read_timeout(config_.timeout_seconds);
        httplib::Headers headers = {
            {"Authorization", "Bearer " + api_key_},
        };
        auto res = client.Post(config_.path, headers, body.dump(),
                               "application/json");
        if (!res)
            throw BackendError("backend unreachable: " + config_.base_url);
        if (res->status != 200)
            throw BackendError("backend returned status "
                               + std::to_string(res->status) + ": " + res->body);
        json doc = json::parse(res->body, nullptr, /*allow_exceptions=*/false);
        if (doc.is_discarded())
            throw BackendError("backend returned malformed JSON");
        CompletionResponse out;
        try {
            out.text = doc.at("choices").at(0).at("message").at("content")
                           .get<std::string>();
        } catch (json::exception const &) {
            throw BackendError("unexpected completion payload shape");
        }
        out.usage.prompt_tokens =
            doc.value("usage", json::object()).value("prompt_tokens", 0L);
        out.usage.completion_tokens =
            doc.value("usage", json::object()).value("completion_tokens", 0L);
        if (out.usage.prompt_tokens == 0)
            out.usage.prompt_tokens = approx_tokens(request.prompt);
        if (out.usage.completion_tokens == 0)
            out.usage.completion_tokens = approx_tokens(out.text);
        out.usage.calls = 1;
        return out;
    }

private:
    HttpBackendConfig config_;
    std::string api_key_;
};

}  // namespace toolplan
