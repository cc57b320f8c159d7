#include "evomcts/scripted_backend.hpp"

#include <cctype>

namespace evomcts {

long whitespace_tokens(const std::string& text) {
    long count = 0;
    bool in_token = false;
    for (unsigned char c : text) {
        if (std::isspace(c)) {
            in_token = false;
        } else if (!in_token) {
            in_token = true;
            ++count;
        }
    }
    return count;
}

ScriptedBackend::ScriptedBackend(RetryPolicy policy, PriceTable prices)
    : policy_(policy), tracker_(prices) {}

void ScriptedBackend::push(const std::string& response) { queue_.push_back(response); }

void ScriptedBackend::push_tag(const std::string& tag, const std::string& response) {
    tag_queues_[tag].push_back(response);
}

void ScriptedBackend::set_sticky(const std::string& tag, const std::string& response) {
    sticky_[tag] = response;
}

void ScriptedBackend::inject_failures(int count) { pending_failures_ += count; }

std::string ScriptedBackend::next_response(const std::string& tag) {
    auto it = tag_queues_.find(tag);
    if (it != tag_queues_.end() && !it->second.empty()) {
        std::string r = it->second.front();
        it->second.pop_front();
        return r;
    }
    auto st = sticky_.find(tag);
    if (st != sticky_.end()) return st->second;
    if (!queue_.empty()) {
        std::string r = queue_.front();
        queue_.pop_front();
        return r;
    }
    throw ScriptError("scripted backend exhausted (tag '" + tag + "')");
}

BackendResponse ScriptedBackend::generate(const BackendRequest& req) {
    validate_request(req);
    std::lock_guard<std::mutex> lock(mutex_);
    int attempt = 0;
    // Injected failures mimic transport faults; the retry loop is the same
    // schedule the HTTP backend uses, with a no-op sleep.
    auto one_attempt = [&]() -> BackendResponse {
        ++attempt;
        if (pending_failures_ > 0) {
            --pending_failures_;
            log_.push_back({req, attempt, true});
            throw TransportError("scripted transport failure");
        }
        std::string content = next_response(req.tag);
        log_.push_back({req, attempt, false});
        BackendResponse resp;
        resp.content = std::move(content);
        for (const auto& m : req.messages) resp.prompt_tokens += whitespace_tokens(m.content);
        resp.completion_tokens = whitespace_tokens(resp.content);
        resp.latency_ms = 0;
        return resp;
    };
    BackendResponse resp = run_with_retries(policy_, [](long) {}, one_attempt);
    tracker_.record(req.tag, resp);
    return resp;
}

} // namespace evomcts
