#pragma once

#include <functional>
#include <map>
#include <mutex>
#include <string>
#include <vector>

#include "evomcts/errors.hpp"

namespace evomcts {

struct Message {
    std::string role; // system | user | assistant
    std::string content;
};

// Purpose labels; every request carries one so cost and budget accounting
// can be broken down per call site.
namespace tag {
inline constexpr const char* expand = "expand";
inline constexpr const char* judge = "judge";
inline constexpr const char* classify = "classify";
inline constexpr const char* optimize = "optimize";
} // namespace tag

struct BackendRequest {
    std::vector<Message> messages;
    double temperature = 0.0;
    int max_tokens = 4096;
    std::string tag;
};

struct BackendResponse {
    std::string content;
    long prompt_tokens = 0;
    long completion_tokens = 0;
    long latency_ms = 0;
};

// Per-token prices in dollars.
struct PriceTable {
    double prompt_token = 0.0;
    double completion_token = 0.0;
};

// Aggregated usage, additive across runs.
struct CostReport {
    std::map<std::string, long> calls_by_tag;
    std::map<std::string, long> prompt_tokens_by_tag;
    std::map<std::string, long> completion_tokens_by_tag;
    double dollars = 0.0;

    long total_calls() const;
    CostReport& operator+=(const CostReport& other);
};

// Subtraction of a snapshot taken earlier from the same tracker.
CostReport cost_delta(const CostReport& after, const CostReport& before);

// Thread-safe usage accumulator owned by a backend.
class CostTracker {
public:
    explicit CostTracker(PriceTable prices = {}) : prices_(prices) {}

    void record(const std::string& tag, const BackendResponse& resp);
    CostReport report() const;

private:
    PriceTable prices_;
    mutable std::mutex mutex_;
    CostReport report_;
};

// Transport retry schedule: exponential backoff starting at base_delay,
// doubling per attempt, up to max_attempts total attempts.
struct RetryPolicy {
    int max_attempts = 4;
    long base_delay_ms = 1000;
    double factor = 2.0;

    long delay_before_attempt(int attempt) const; // attempt is 1-based; used for attempt >= 2
};

using SleepFn = std::function<void(long /*ms*/)>;
SleepFn real_sleep();

// Model-generation boundary. generate() performs transport retries per the
// backend's policy and records usage on success.
class Backend {
public:
    virtual ~Backend() = default;
    virtual BackendResponse generate(const BackendRequest& req) = 0;
    virtual CostReport cost_report() const = 0;
};

// Shared guard: every request needs at least one user message.
void validate_request(const BackendRequest& req);

// Runs `attempt` under `policy`, sleeping between tries via `sleep`.
// `retryable` decides whether a thrown TransportError may be retried.
BackendResponse run_with_retries(const RetryPolicy& policy, const SleepFn& sleep,
                                 const std::function<BackendResponse()>& attempt);

} // namespace evomcts
