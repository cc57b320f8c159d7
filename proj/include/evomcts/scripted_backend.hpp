#pragma once

#include <deque>
#include <map>
#include <vector>

#include "evomcts/backend.hpp"

namespace evomcts {

// Deterministic stand-in for a model host. Responses come from per-tag
// queues first, then a per-tag sticky response, then the global queue.
// Failure injections spend one transport failure per attempt, so the retry
// loop is exercised exactly as with a real host. Every attempt is logged.
class ScriptedBackend : public Backend {
public:
    struct LoggedRequest {
        BackendRequest request;
        int attempt = 1;       // 1-based attempt index within one generate()
        bool failed = false;   // true when this attempt hit an injected failure
    };

    explicit ScriptedBackend(RetryPolicy policy = {.max_attempts = 4, .base_delay_ms = 1, .factor = 2.0},
                             PriceTable prices = {});

    // Script construction.
    void push(const std::string& response);                   // global queue
    void push_tag(const std::string& tag, const std::string& response);
    void set_sticky(const std::string& tag, const std::string& response);
    void inject_failures(int count);                          // next `count` attempts fail

    BackendResponse generate(const BackendRequest& req) override;
    CostReport cost_report() const override { return tracker_.report(); }

    const std::vector<LoggedRequest>& request_log() const { return log_; }
    long attempts_made() const { return static_cast<long>(log_.size()); }

private:
    std::string next_response(const std::string& tag);

    RetryPolicy policy_;
    CostTracker tracker_;
    std::deque<std::string> queue_;
    std::map<std::string, std::deque<std::string>> tag_queues_;
    std::map<std::string, std::string> sticky_;
    int pending_failures_ = 0;
    std::vector<LoggedRequest> log_;
    mutable std::mutex mutex_;
};

// Whitespace-token count used for synthesized usage numbers.
long whitespace_tokens(const std::string& text);

} // namespace evomcts
