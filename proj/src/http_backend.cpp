#include "evomcts/http_backend.hpp"

#include <chrono>

#include <httplib.h>
#include <json.hpp>

namespace evomcts {

namespace {

using nlohmann::json;

struct SplitUrl {
    std::string origin;    // scheme://host[:port]
    std::string base_path; // leading path, no trailing slash
};

SplitUrl split_base_url(const std::string& url) {
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos)
        throw ConfigError("backend.base_url must include a scheme: " + url);
    auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, ""};
    std::string path = url.substr(path_start);
    while (!path.empty() && path.back() == '/') path.pop_back();
    return {url.substr(0, path_start), path};
}

bool retryable_status(int status) { return status == 429 || status >= 500; }

json to_wire(const BackendRequest& req, const std::string& model) {
    json messages = json::array();
    for (const auto& m : req.messages)
        messages.push_back({{"role", m.role}, {"content", m.content}});
    return json{{"model", model},
                {"messages", std::move(messages)},
                {"temperature", req.temperature},
                {"max_tokens", req.max_tokens}};
}

BackendResponse from_wire(const std::string& body, long latency_ms) {
    json j = json::parse(body, nullptr, false);
    if (j.is_discarded())
        throw ProtocolError("response body is not JSON");
    if (!j.contains("choices") || !j["choices"].is_array() || j["choices"].empty())
        throw ProtocolError("response missing choices[0]");
    const json& choice = j["choices"][0];
    if (!choice.contains("message") || !choice["message"].contains("content") ||
        !choice["message"]["content"].is_string())
        throw ProtocolError("response missing choices[0].message.content");

    BackendResponse resp;
    resp.content = choice["message"]["content"].get<std::string>();
    if (j.contains("usage") && j["usage"].is_object()) {
        const json& usage = j["usage"];
        if (usage.contains("prompt_tokens") && usage["prompt_tokens"].is_number())
            resp.prompt_tokens = usage["prompt_tokens"].get<long>();
        if (usage.contains("completion_tokens") && usage["completion_tokens"].is_number())
            resp.completion_tokens = usage["completion_tokens"].get<long>();
    }
    resp.latency_ms = latency_ms;
    return resp;
}

} // namespace

struct HttpBackend::Impl {
    HttpBackendConfig config;
    SleepFn sleep;
    SplitUrl url;
    CostTracker tracker;

    Impl(HttpBackendConfig cfg, SleepFn sleep_fn)
        : config(std::move(cfg)), sleep(std::move(sleep_fn)),
          url(split_base_url(config.base_url)), tracker(config.prices) {}

    BackendResponse attempt_once(const std::string& body) {
        httplib::Client client(url.origin);
        client.set_connection_timeout(config.connect_timeout_s, 0);
        client.set_read_timeout(config.read_timeout_s, 0);
        httplib::Headers headers;
        if (!config.api_key.empty())
            headers.emplace("Authorization", "Bearer " + config.api_key);

        const auto start = std::chrono::steady_clock::now();
        auto result = client.Post(url.base_path + "/chat/completions", headers, body,
                                  "application/json");
        const auto latency = std::chrono::duration_cast<std::chrono::milliseconds>(
                                 std::chrono::steady_clock::now() - start)
                                 .count();

        if (!result)
            throw TransportError("connection failed: " + httplib::to_string(result.error()));
        if (result->status < 200 || result->status >= 300)
            throw TransportError("http " + std::to_string(result->status), result->status,
                                 retryable_status(result->status));
        return from_wire(result->body, latency);
    }
};

HttpBackend::HttpBackend(HttpBackendConfig config, SleepFn sleep)
    : impl_(std::make_unique<Impl>(std::move(config), std::move(sleep))) {}

HttpBackend::~HttpBackend() = default;

BackendResponse HttpBackend::generate(const BackendRequest& req) {
    validate_request(req);
    const std::string body = to_wire(req, impl_->config.model).dump();
    BackendResponse resp = run_with_retries(impl_->config.retry, impl_->sleep,
                                            [&] { return impl_->attempt_once(body); });
    impl_->tracker.record(req.tag, resp);
    return resp;
}

CostReport HttpBackend::cost_report() const { return impl_->tracker.report(); }

} // namespace evomcts
