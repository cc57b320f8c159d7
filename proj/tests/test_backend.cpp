#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <atomic>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "evomcts/backend.hpp"
#include "evomcts/http_backend.hpp"
#include "evomcts/scripted_backend.hpp"

using namespace evomcts;
using nlohmann::json;

namespace {

BackendRequest user_request(const std::string& text, const std::string& tag = "expand") {
    BackendRequest req;
    req.messages = {{"system", "be brief"}, {"user", text}};
    req.temperature = 0.2;
    req.max_tokens = 128;
    req.tag = tag;
    return req;
}

BackendResponse fixed_response(const std::string& text, long p, long c) {
    BackendResponse r;
    r.content = text;
    r.prompt_tokens = p;
    r.completion_tokens = c;
    return r;
}

// Sleep stub that records requested delays instead of waiting.
struct SleepRecorder {
    std::vector<long> delays;
    SleepFn fn() {
        return [this](long ms) { delays.push_back(ms); };
    }
};

} // namespace

TEST_CASE("cost reports add up and subtract cleanly") {
    CostReport a;
    a.calls_by_tag["expand"] = 2;
    a.prompt_tokens_by_tag["expand"] = 100;
    a.completion_tokens_by_tag["expand"] = 40;
    a.dollars = 0.5;

    CostReport b;
    b.calls_by_tag["expand"] = 1;
    b.calls_by_tag["judge"] = 3;
    b.prompt_tokens_by_tag["judge"] = 30;
    b.dollars = 0.25;

    CostReport sum = a;
    sum += b;
    CHECK(sum.calls_by_tag.at("expand") == 3);
    CHECK(sum.calls_by_tag.at("judge") == 3);
    CHECK(sum.prompt_tokens_by_tag.at("expand") == 100);
    CHECK(sum.prompt_tokens_by_tag.at("judge") == 30);
    CHECK(sum.total_calls() == 6);
    CHECK(sum.dollars == doctest::Approx(0.75));

    // Delta removes tags that did not move.
    CostReport delta = cost_delta(sum, a);
    CHECK(delta.calls_by_tag.count("expand") == 1);
    CHECK(delta.calls_by_tag.at("expand") == 1);
    CHECK(delta.calls_by_tag.at("judge") == 3);
    CHECK(delta.prompt_tokens_by_tag.count("expand") == 0); // unchanged -> dropped
    CHECK(delta.prompt_tokens_by_tag.at("judge") == 30);
    CHECK(delta.dollars == doctest::Approx(0.25));

    CostReport zero = cost_delta(sum, sum);
    CHECK(zero.calls_by_tag.empty());
    CHECK(zero.prompt_tokens_by_tag.empty());
    CHECK(zero.completion_tokens_by_tag.empty());
    CHECK(zero.total_calls() == 0);
}

TEST_CASE("cost tracker prices tokens") {
    CostTracker tracker(PriceTable{0.001, 0.002});
    tracker.record("judge", fixed_response("x", 100, 50));
    tracker.record("judge", fixed_response("y", 10, 5));
    CostReport r = tracker.report();
    CHECK(r.calls_by_tag.at("judge") == 2);
    CHECK(r.prompt_tokens_by_tag.at("judge") == 110);
    CHECK(r.completion_tokens_by_tag.at("judge") == 55);
    CHECK(r.dollars == doctest::Approx(110 * 0.001 + 55 * 0.002));
}

TEST_CASE("backoff schedule doubles from the base delay") {
    RetryPolicy policy{4, 1000, 2.0};
    CHECK(policy.delay_before_attempt(2) == 1000);
    CHECK(policy.delay_before_attempt(3) == 2000);
    CHECK(policy.delay_before_attempt(4) == 4000);
}

TEST_CASE("request validation guards roles, user presence and knobs") {
    CHECK_THROWS_AS(validate_request(BackendRequest{}), InvalidInputError);

    BackendRequest bad_role = user_request("hi");
    bad_role.messages[0].role = "tool";
    CHECK_THROWS_AS(validate_request(bad_role), InvalidInputError);

    BackendRequest no_user;
    no_user.messages = {{"system", "only system"}};
    CHECK_THROWS_AS(validate_request(no_user), InvalidInputError);

    BackendRequest cold = user_request("hi");
    cold.temperature = -0.5;
    CHECK_THROWS_AS(validate_request(cold), InvalidInputError);

    BackendRequest empty = user_request("hi");
    empty.max_tokens = 0;
    CHECK_THROWS_AS(validate_request(empty), InvalidInputError);

    CHECK_NOTHROW(validate_request(user_request("hi")));
}

TEST_CASE("run_with_retries retries retryable failures with recorded backoff") {
    RetryPolicy policy{4, 1000, 2.0};

    SUBCASE("first attempt wins, no sleeping") {
        SleepRecorder rec;
        int calls = 0;
        BackendResponse r = run_with_retries(policy, rec.fn(), [&] {
            ++calls;
            return fixed_response("ok", 1, 1);
        });
        CHECK(r.content == "ok");
        CHECK(calls == 1);
        CHECK(rec.delays.empty());
    }

    SUBCASE("two retryable failures then success") {
        SleepRecorder rec;
        int calls = 0;
        BackendResponse r = run_with_retries(policy, rec.fn(), [&]() -> BackendResponse {
            if (++calls <= 2) throw TransportError("flaky", 503, true);
            return fixed_response("ok", 1, 1);
        });
        CHECK(r.content == "ok");
        CHECK(calls == 3);
        CHECK(rec.delays == std::vector<long>{1000, 2000});
    }

    SUBCASE("non-retryable failure surfaces immediately") {
        SleepRecorder rec;
        int calls = 0;
        CHECK_THROWS_AS(run_with_retries(policy, rec.fn(),
                                         [&]() -> BackendResponse {
                                             ++calls;
                                             throw TransportError("denied", 400, false);
                                         }),
                        TransportError);
        CHECK(calls == 1);
        CHECK(rec.delays.empty());
    }

    SUBCASE("budget exhaustion rethrows after max_attempts tries") {
        SleepRecorder rec;
        int calls = 0;
        CHECK_THROWS_AS(run_with_retries(policy, rec.fn(),
                                         [&]() -> BackendResponse {
                                             ++calls;
                                             throw TransportError("down", 503, true);
                                         }),
                        TransportError);
        CHECK(calls == 4);
        CHECK(rec.delays == std::vector<long>{1000, 2000, 4000});
    }
}

TEST_CASE("whitespace token counting") {
    CHECK(whitespace_tokens("") == 0);
    CHECK(whitespace_tokens("   ") == 0);
    CHECK(whitespace_tokens("one") == 1);
    CHECK(whitespace_tokens("one two\tthree\nfour") == 4);
    CHECK(whitespace_tokens("  padded   words  ") == 2);
}

TEST_CASE("scripted backend serves tag queue, then sticky, then global") {
    ScriptedBackend backend;
    backend.push("global-1");
    backend.push("global-2");
    backend.push_tag("judge", "judge-1");
    backend.set_sticky("judge", "judge-sticky");

    CHECK(backend.generate(user_request("a", "judge")).content == "judge-1");
    CHECK(backend.generate(user_request("b", "judge")).content == "judge-sticky");
    CHECK(backend.generate(user_request("c", "judge")).content == "judge-sticky");
    CHECK(backend.generate(user_request("d", "expand")).content == "global-1");
    CHECK(backend.generate(user_request("e", "expand")).content == "global-2");
    CHECK_THROWS_AS(backend.generate(user_request("f", "expand")), ScriptError);

    try {
        backend.generate(user_request("g", "expand"));
        FAIL("expected exhaustion");
    } catch (const ScriptError& e) {
        CHECK(std::string(e.what()).find("exhausted") != std::string::npos);
        CHECK(std::string(e.what()).find("expand") != std::string::npos);
    }
}

TEST_CASE("scripted backend synthesizes whitespace-token usage") {
    ScriptedBackend backend;
    backend.push("three word reply");
    BackendRequest req = user_request("two words");
    BackendResponse resp = backend.generate(req);
    CHECK(resp.completion_tokens == 3);
    long expected_prompt = whitespace_tokens("be brief") + whitespace_tokens("two words");
    CHECK(resp.prompt_tokens == expected_prompt);
    CHECK(backend.cost_report().calls_by_tag.at("expand") == 1);
}

TEST_CASE("scripted failure injection exercises the retry loop and is fully logged") {
    ScriptedBackend backend; // default policy: 4 attempts, 1 ms base
    backend.push("finally");
    backend.inject_failures(2);

    BackendResponse resp = backend.generate(user_request("q"));
    CHECK(resp.content == "finally");

    const auto& log = backend.request_log();
    REQUIRE(log.size() == 3);
    CHECK(log[0].attempt == 1);
    CHECK(log[0].failed);
    CHECK(log[1].attempt == 2);
    CHECK(log[1].failed);
    CHECK(log[2].attempt == 3);
    CHECK_FALSE(log[2].failed);
    // One script entry was consumed despite three transport attempts.
    CHECK(backend.cost_report().total_calls() == 1);
}

TEST_CASE("scripted failure injection past the budget rethrows") {
    ScriptedBackend backend;
    backend.push("never reached");
    backend.inject_failures(10);
    CHECK_THROWS_AS(backend.generate(user_request("q")), TransportError);
    CHECK(backend.request_log().size() == 4); // max_attempts
    for (const auto& entry : backend.request_log()) CHECK(entry.failed);
}

TEST_CASE("identically scripted backends replay identically") {
    auto script = [](ScriptedBackend& b) {
        b.push_tag("expand", "r1");
        b.push_tag("expand", "r2");
        b.set_sticky("judge", "verdict");
    };
    ScriptedBackend a, b;
    script(a);
    script(b);
    for (const char* tag : {"expand", "judge", "expand", "judge"}) {
        auto ra = a.generate(user_request("same", tag));
        auto rb = b.generate(user_request("same", tag));
        CHECK(ra.content == rb.content);
        CHECK(ra.prompt_tokens == rb.prompt_tokens);
        CHECK(ra.completion_tokens == rb.completion_tokens);
    }
    CHECK(a.request_log().size() == b.request_log().size());
}

namespace {

// Minimal OpenAI-compatible stub: serves scripted status codes in order,
// capturing every request body and auth header.
struct StubServer {
    httplib::Server server;
    std::thread thread;
    int port = 0;
    std::mutex mutex;
    std::vector<std::string> bodies;
    std::vector<std::string> auth_headers;
    std::vector<int> status_plan; // consumed per request; empty -> 200
    std::string success_body;
    std::atomic<int> hits{0};

    explicit StubServer(std::string body) : success_body(std::move(body)) {
        server.Post("/v1/chat/completions", [this](const httplib::Request& req,
                                                   httplib::Response& res) {
            std::lock_guard<std::mutex> lock(mutex);
            bodies.push_back(req.body);
            auth_headers.push_back(req.get_header_value("Authorization"));
            int idx = hits++;
            int status = idx < static_cast<int>(status_plan.size()) ? status_plan[idx] : 200;
            if (status == 200) {
                res.set_content(success_body, "application/json");
            } else {
                res.status = status;
                res.set_content("{\"error\":\"scripted\"}", "application/json");
            }
        });
        port = server.bind_to_any_port("127.0.0.1");
        REQUIRE(port > 0);
        thread = std::thread([this] { server.listen_after_bind(); });
        server.wait_until_ready();
    }

    ~StubServer() {
        server.stop();
        if (thread.joinable()) thread.join();
    }

    std::string base_url() const {
        return "http://127.0.0.1:" + std::to_string(port) + "/v1";
    }
};

std::string chat_body(const std::string& content, int prompt = 12, int completion = 7) {
    json usage{{"prompt_tokens", prompt}, {"completion_tokens", completion}};
    json body{{"choices", json::array({json{{"message", json{{"content", content}}}}})},
              {"usage", usage}};
    return body.dump();
}

HttpBackendConfig stub_config(const StubServer& stub) {
    HttpBackendConfig cfg;
    cfg.base_url = stub.base_url();
    cfg.model = "test-model";
    cfg.api_key = "sk-test";
    cfg.retry = RetryPolicy{4, 1000, 2.0};
    cfg.prices = PriceTable{0.0, 0.0};
    return cfg;
}

} // namespace

TEST_CASE("http backend speaks the chat-completions wire format") {
    StubServer stub(chat_body("the answer", 12, 7));
    SleepRecorder rec;
    HttpBackend backend(stub_config(stub), rec.fn());

    BackendResponse resp = backend.generate(user_request("ping", "judge"));
    CHECK(resp.content == "the answer");
    CHECK(resp.prompt_tokens == 12);
    CHECK(resp.completion_tokens == 7);
    CHECK(rec.delays.empty());

    REQUIRE(stub.bodies.size() == 1);
    json wire = json::parse(stub.bodies[0]);
    CHECK(wire.at("model") == "test-model");
    CHECK(wire.at("temperature") == doctest::Approx(0.2));
    CHECK(wire.at("max_tokens") == 128);
    REQUIRE(wire.at("messages").size() == 2);
    CHECK(wire["messages"][0].at("role") == "system");
    CHECK(wire["messages"][1].at("role") == "user");
    CHECK(wire["messages"][1].at("content") == "ping");
    CHECK(stub.auth_headers[0] == "Bearer sk-test");

    CostReport cost = backend.cost_report();
    CHECK(cost.calls_by_tag.at("judge") == 1);
    CHECK(cost.prompt_tokens_by_tag.at("judge") == 12);
}

TEST_CASE("http backend retries 429s with exponential backoff") {
    StubServer stub(chat_body("recovered"));
    stub.status_plan = {429, 429, 200};
    SleepRecorder rec;
    HttpBackend backend(stub_config(stub), rec.fn());

    BackendResponse resp = backend.generate(user_request("again"));
    CHECK(resp.content == "recovered");
    CHECK(stub.hits.load() == 3);
    CHECK(rec.delays == std::vector<long>{1000, 2000});
}

TEST_CASE("http backend treats client errors as permanent") {
    StubServer stub(chat_body("unused"));
    stub.status_plan = {400};
    SleepRecorder rec;
    HttpBackend backend(stub_config(stub), rec.fn());

    try {
        backend.generate(user_request("bad"));
        FAIL("expected transport error");
    } catch (const TransportError& e) {
        CHECK(e.http_status == 400);
        CHECK_FALSE(e.retryable);
    }
    CHECK(stub.hits.load() == 1);
    CHECK(rec.delays.empty());
}

TEST_CASE("http backend flags 2xx bodies that are not chat completions") {
    StubServer stub("{\"surprise\": true}");
    SleepRecorder rec;
    HttpBackend backend(stub_config(stub), rec.fn());
    CHECK_THROWS_AS(backend.generate(user_request("shape")), ProtocolError);
}
