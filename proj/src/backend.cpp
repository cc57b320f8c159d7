#include "evomcts/backend.hpp"

#include <chrono>
#include <cmath>
#include <thread>

namespace evomcts {

long CostReport::total_calls() const {
    long total = 0;
    for (const auto& [_, n] : calls_by_tag) total += n;
    return total;
}

CostReport& CostReport::operator+=(const CostReport& other) {
    for (const auto& [t, n] : other.calls_by_tag) calls_by_tag[t] += n;
    for (const auto& [t, n] : other.prompt_tokens_by_tag) prompt_tokens_by_tag[t] += n;
    for (const auto& [t, n] : other.completion_tokens_by_tag) completion_tokens_by_tag[t] += n;
    dollars += other.dollars;
    return *this;
}

CostReport cost_delta(const CostReport& after, const CostReport& before) {
    CostReport delta = after;
    for (const auto& [t, n] : before.calls_by_tag) delta.calls_by_tag[t] -= n;
    for (const auto& [t, n] : before.prompt_tokens_by_tag) delta.prompt_tokens_by_tag[t] -= n;
    for (const auto& [t, n] : before.completion_tokens_by_tag) delta.completion_tokens_by_tag[t] -= n;
    delta.dollars -= before.dollars;
    std::erase_if(delta.calls_by_tag, [](const auto& kv) { return kv.second == 0; });
    std::erase_if(delta.prompt_tokens_by_tag, [](const auto& kv) { return kv.second == 0; });
    std::erase_if(delta.completion_tokens_by_tag, [](const auto& kv) { return kv.second == 0; });
    return delta;
}

void CostTracker::record(const std::string& tag, const BackendResponse& resp) {
    std::lock_guard<std::mutex> lock(mutex_);
    report_.calls_by_tag[tag] += 1;
    report_.prompt_tokens_by_tag[tag] += resp.prompt_tokens;
    report_.completion_tokens_by_tag[tag] += resp.completion_tokens;
    report_.dollars += resp.prompt_tokens * prices_.prompt_token +
                       resp.completion_tokens * prices_.completion_token;
}

CostReport CostTracker::report() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return report_;
}

long RetryPolicy::delay_before_attempt(int attempt) const {
    double delay = static_cast<double>(base_delay_ms);
    for (int i = 2; i < attempt; ++i) delay *= factor;
    return static_cast<long>(std::lround(delay));
}

SleepFn real_sleep() {
    return [](long ms) { std::this_thread::sleep_for(std::chrono::milliseconds(ms)); };
}

void validate_request(const BackendRequest& req) {
    bool has_user = false;
    for (const auto& m : req.messages) {
        if (m.role != "system" && m.role != "user" && m.role != "assistant")
            throw InvalidInputError("unknown message role: " + m.role);
        if (m.role == "user") has_user = true;
    }
    if (!has_user)
        throw InvalidInputError("request must contain at least one user message");
    if (req.temperature < 0.0)
        throw InvalidInputError("temperature must be >= 0");
    if (req.max_tokens <= 0)
        throw InvalidInputError("max_tokens must be positive");
}

BackendResponse run_with_retries(const RetryPolicy& policy, const SleepFn& sleep,
                                 const std::function<BackendResponse()>& attempt) {
    for (int n = 1;; ++n) {
        try {
            return attempt();
        } catch (const TransportError& e) {
            if (!e.retryable || n >= policy.max_attempts) throw;
            sleep(policy.delay_before_attempt(n + 1));
        }
    }
}

} // namespace evomcts
