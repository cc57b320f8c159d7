#pragma once

#include <memory>
#include <string>

#include "evomcts/backend.hpp"

namespace evomcts {

struct HttpBackendConfig {
    std::string base_url;            // e.g. "http://127.0.0.1:8080/v1"
    std::string model;
    std::string api_key;             // resolved by the caller (env var)
    RetryPolicy retry;
    PriceTable prices;
    long connect_timeout_s = 10;
    long read_timeout_s = 600;
};

// OpenAI-compatible client: POST {base_url}/chat/completions with model,
// messages, temperature, max_tokens; maps choices[0].message.content and the
// usage token counts. Retries transport errors and HTTP 429/5xx with
// exponential backoff; other non-2xx statuses fail immediately.
class HttpBackend : public Backend {
public:
    explicit HttpBackend(HttpBackendConfig config, SleepFn sleep = real_sleep());
    ~HttpBackend() override;

    BackendResponse generate(const BackendRequest& req) override;
    CostReport cost_report() const override;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

} // namespace evomcts
