#include "rulealign/http_backend.hpp"

#include <httplib.h>

#include <cstdlib>

#include "rulealign/common.hpp"

namespace rulealign::gen {

json http_backend_config_to_json(const HttpBackendConfig& c) {
    return json{{"url", c.url},
                {"model", c.model},
                {"api_key_env", c.api_key_env},
                {"timeout_seconds", c.timeout_seconds},
                {"max_context_tokens", c.max_context_tokens},
                {"transport_attempts", c.transport_attempts}};
}

HttpBackendConfig http_backend_config_from_json(const json& j) {
    HttpBackendConfig c;
    c.url = j.value("url", c.url);
    c.model = j.value("model", c.model);
    c.api_key_env = j.value("api_key_env", c.api_key_env);
    c.timeout_seconds = j.value("timeout_seconds", c.timeout_seconds);
    c.max_context_tokens = j.value("max_context_tokens", c.max_context_tokens);
    c.transport_attempts = j.value("transport_attempts", c.transport_attempts);
    return c;
}

HttpChatBackend::HttpChatBackend(HttpBackendConfig cfg) : cfg_(std::move(cfg)) {
    const auto scheme_end = cfg_.url.find("://");
    if (scheme_end == std::string::npos) {
        throw ConfigError("backend url must include a scheme: " + cfg_.url);
    }
    const auto path_start = cfg_.url.find('/', scheme_end + 3);
    origin_ = cfg_.url.substr(0, path_start);
    path_ = path_start == std::string::npos ? "/" : cfg_.url.substr(path_start);
    if (const char* key = std::getenv(cfg_.api_key_env.c_str())) {
        api_key_ = key;
    }
    if (cfg_.transport_attempts == 0) {
        throw ConfigError("transport_attempts must be at least 1");
    }
}

BackendCapabilities HttpChatBackend::capabilities() const {
    return {cfg_.model, cfg_.max_context_tokens, true};
}

json HttpChatBackend::request_body(const ChatRequest& request) const {
    json messages = json::array();
    for (const auto& m : request.messages) {
        messages.push_back({{"role", m.role}, {"content", m.content}});
    }
    return json{{"model", cfg_.model},
                {"messages", messages},
                {"temperature", request.temperature},
                {"seed", request.seed},
                {"max_tokens", request.max_tokens}};
}

std::string HttpChatBackend::complete(const ChatRequest& request) const {
    // One client per call.
    httplib::Client client(origin_);
    const auto timeout = std::chrono::duration<double>(cfg_.timeout_seconds);
    client.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
    client.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
    httplib::Headers headers;
    if (!api_key_.empty()) {
        headers.emplace("Authorization", "Bearer " + api_key_);
    }
    const auto body = request_body(request).dump();

    std::string last_error;
    for (std::size_t attempt = 0; attempt < cfg_.transport_attempts; ++attempt) {
        auto res = client.Post(path_, headers, body, "application/json");
        if (!res) {
            last_error = "transport error: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status == 429 || res->status >= 500) {
            last_error = "HTTP " + std::to_string(res->status);
            continue;
        }
        if (res->status != 200) {
            throw BackendFailure("HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200));
        }
        try {
            const auto reply = json::parse(res->body);
            return reply.at("choices").at(0).at("message").at("content").get<std::string>();
        } catch (const json::exception& e) {
            throw BackendFailure(std::string("unreadable completion response: ") + e.what());
        }
    }
    throw BackendFailure(last_error);
}

}  // namespace rulealign::gen
