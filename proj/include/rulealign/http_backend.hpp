#pragma once
// Chat backend speaking the common "chat completions" HTTP wire format.

#include <string>

#include "rulealign/genpipeline.hpp"
#include "rulealign/jsonl.hpp"

namespace rulealign::gen {

struct HttpBackendConfig {
    std::string url = "https://api.openai.com/v1/chat/completions";
    std::string model = "gpt-4-turbo";
    std::string api_key_env = "RULEALIGN_API_KEY";
    double timeout_seconds = 120.0;
    std::size_t max_context_tokens = 128000;
    std::size_t transport_attempts = 3;  // per request, before BackendFailure
};

json http_backend_config_to_json(const HttpBackendConfig& c);
HttpBackendConfig http_backend_config_from_json(const json& j);

class HttpChatBackend final : public ChatBackend {
public:
    // Reads the credential from the configured environment variable; an unset
    // variable means no Authorization header (local servers).
    explicit HttpChatBackend(HttpBackendConfig cfg);

    BackendCapabilities capabilities() const override;
    std::string complete(const ChatRequest& request) const override;

    // Request body sent for `request`; exposed for tests.
    json request_body(const ChatRequest& request) const;

private:
    HttpBackendConfig cfg_;
    std::string api_key_;
    std::string origin_;  // scheme://host[:port]
    std::string path_;
};

}  // namespace rulealign::gen
