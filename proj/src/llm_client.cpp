#include "evoalloc/mutation.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

namespace evoalloc {

struct LlmClient::Impl {
    explicit Impl(const EndpointConfig& cfg) : http(cfg.base_url) {
        http.set_connection_timeout(static_cast<time_t>(cfg.timeout_seconds));
        http.set_read_timeout(static_cast<time_t>(cfg.timeout_seconds));
        if (!cfg.api_key.empty())
            http.set_default_headers({{"Authorization", "Bearer " + cfg.api_key}});
    }
    httplib::Client http;
};

LlmClient::LlmClient(EndpointConfig config)
    : config_(std::move(config)), impl_(std::make_unique<Impl>(config_)) {}

LlmClient::~LlmClient() = default;

MutationResponse LlmClient::generate(const Prompt& prompt) {
    nlohmann::json body{
        {"model", config_.model_id},
        {"temperature", config_.sampling.temperature},
        {"top_p", config_.sampling.top_p},
        {"max_tokens", config_.sampling.max_tokens},
        {"messages",
         {{{"role", "system"}, {"content", prompt.system}},
          {{"role", "user"}, {"content", prompt.user}}}},
    };
    std::string payload = body.dump();

    MutationResponse resp;
    resp.attempt_count = 0;
    std::string last_error = "no attempt made";
    for (int attempt = 0; attempt <= config_.retry_cap; ++attempt) {
        ++resp.attempt_count;
        auto res = impl_->http.Post("/v1/chat/completions", payload, "application/json");
        if (!res) {
            last_error = "transport error: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status != 200) {
            last_error = "http status " + std::to_string(res->status);
            continue;
        }
        nlohmann::json j = nlohmann::json::parse(res->body, nullptr, false);
        if (j.is_discarded() || !j.contains("choices") || j["choices"].empty()) {
            last_error = "malformed response body";
            continue;
        }
        resp.text = j["choices"][0].value("message", nlohmann::json::object()).value("content", "");
        if (j.contains("usage")) {
            const auto& u = j["usage"];
            resp.usage.prompt_tokens = u.value("prompt_tokens", std::int64_t{0});
            resp.usage.completion_tokens = u.value("completion_tokens", std::int64_t{0});
            if (u.contains("prompt_tokens_details"))
                resp.usage.cached_tokens = u["prompt_tokens_details"].value("cached_tokens", std::int64_t{0});
        }
        resp.usage.model_id = config_.model_id;
        resp.ok = true;
        return resp;
    }
    resp.ok = false;
    resp.error = last_error;
    resp.usage.model_id = config_.model_id;
    return resp;
}

} // namespace evoalloc
