#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>
#include <string>

#include <json.hpp>

#include "evomcts/peemp.hpp"
#include "evomcts/scripted_backend.hpp"

using namespace evomcts;
using nlohmann::json;

namespace {

Query sample_query() {
    Query q;
    q.id = "q-9";
    q.body = "Find the smallest prime above 100.";
    return q;
}

TreeNode make_node(NodeId id, const std::string& response, int prompt_version = 0) {
    TreeNode n;
    n.node_id = id;
    n.response = response;
    n.meta_prompt.version = prompt_version;
    n.meta_prompt.body = "prompt v" + std::to_string(prompt_version);
    return n;
}

Experience make_exp(const std::string& id, const std::string& body) {
    Experience e;
    e.id = id;
    e.task_type = "number theory";
    e.body = body;
    return e;
}

json judge_payload(double cand, double base) {
    return json{
        {"criteria",
         json::array({json{{"name", "correctness"},
                           {"description", "answer is right"},
                           {"weight", 60.0}},
                      json{{"name", "clarity"},
                           {"description", "steps are explicit"},
                           {"weight", 40.0}}})},
        {"critique", "the candidate is tighter"},
        {"criterion_scores", json{{"candidate", {cand, cand}}, {"baseline", {base, base}}}},
        {"scores", json{{"candidate", cand}, {"baseline", base}}},
        {"insights",
         json::array({"Always verify primality by trial division up to the square root."})},
        {"evolved_prompt", "Check primality carefully and show the divisions."}};
}

std::string fenced(const json& payload) {
    return std::string(kJudgeBlockBegin) + "\n" + payload.dump(2) + "\n" + kJudgeBlockEnd;
}

std::string score_fence(const std::string& inner) {
    return std::string(kScoreBlockBegin) + "\n" + inner + "\n" + kScoreBlockEnd;
}

} // namespace

TEST_CASE("judge prompt embeds the template version, stages and both responses") {
    TreeNode cand = make_node(3, "Candidate reasoning ending in 101.", 2);
    TreeNode base = make_node(1, "Baseline reasoning ending in 101.", 1);
    std::vector<Experience> prior{
        make_exp("E1", "Trial-divide by primes only."),
        make_exp("E2", "State the answer on a final line."),
    };
    auto msgs = render_judge_prompt(sample_query(), prior, cand, base);
    REQUIRE(msgs.size() == 2);
    CHECK(msgs[0].role == "system");
    CHECK(msgs[1].role == "user");

    CHECK(msgs[0].content.find(kJudgeTemplateVersion) != std::string::npos);
    CHECK(msgs[0].content.find(kJudgeBlockBegin) != std::string::npos);
    CHECK(msgs[0].content.find("evolved_prompt") != std::string::npos);

    // Experiences appear verbatim, in order.
    auto p1 = msgs[1].content.find("Trial-divide by primes only.");
    auto p2 = msgs[1].content.find("State the answer on a final line.");
    REQUIRE(p1 != std::string::npos);
    REQUIRE(p2 != std::string::npos);
    CHECK(p1 < p2);
    CHECK(msgs[1].content.find(sample_query().body) != std::string::npos);
    CHECK(msgs[1].content.find("Candidate reasoning ending in 101.") != std::string::npos);
    CHECK(msgs[1].content.find("Baseline reasoning ending in 101.") != std::string::npos);

    // Identical inputs render identically.
    auto again = render_judge_prompt(sample_query(), prior, cand, base);
    CHECK(again[0].content == msgs[0].content);
    CHECK(again[1].content == msgs[1].content);
}

TEST_CASE("judge prompt marks the no-experience case explicitly") {
    auto msgs = render_judge_prompt(sample_query(), {}, make_node(1, "a"), make_node(0, "b"));
    CHECK(msgs[1].content.find("(no prior experience)") != std::string::npos);
}

TEST_CASE("judge block parsing: happy path") {
    JudgeOutput out = parse_judge_output("preamble\n" + fenced(judge_payload(8.2, 6.5)));
    REQUIRE(out.criteria.size() == 2);
    CHECK(out.criteria[0].name == "correctness");
    CHECK(out.criteria[0].weight == doctest::Approx(60.0));
    CHECK(out.score_candidate == doctest::Approx(8.2));
    CHECK(out.score_baseline == doctest::Approx(6.5));
    REQUIRE(out.insights.size() == 1);
    CHECK(out.evolved_prompt == "Check primality carefully and show the divisions.");
    CHECK(out.warnings.empty());
    CHECK(out.criterion_scores_candidate == std::vector<double>{8.2, 8.2});
}

TEST_CASE("out-of-range scalar scores are clamped with a warning") {
    json payload = judge_payload(10.0, 6.0);
    payload["scores"]["candidate"] = 11.3;
    JudgeOutput out = parse_judge_output(fenced(payload));
    CHECK(out.score_candidate == 10.0);
    REQUIRE_FALSE(out.warnings.empty());

    json low = judge_payload(0.0, 6.0);
    low["scores"]["candidate"] = -2.0;
    CHECK(parse_judge_output(fenced(low)).score_candidate == 0.0);
}

TEST_CASE("weight violations are value errors, not parse errors") {
    json bad_sum = judge_payload(8.0, 6.0);
    bad_sum["criteria"][0]["weight"] = 60.0;
    bad_sum["criteria"][1]["weight"] = 30.0; // sums to 90
    CHECK_THROWS_AS(parse_judge_output(fenced(bad_sum)), ValidationError);

    json zero_weight = judge_payload(8.0, 6.0);
    zero_weight["criteria"][0]["weight"] = 0.0;
    zero_weight["criteria"][1]["weight"] = 100.0;
    CHECK_THROWS_AS(parse_judge_output(fenced(zero_weight)), ValidationError);

    // Tolerance band: 100.4 passes.
    json close = judge_payload(8.0, 6.0);
    close["criteria"][0]["weight"] = 60.4;
    CHECK_NOTHROW(parse_judge_output(fenced(close)));

    json empty_prompt = judge_payload(8.0, 6.0);
    empty_prompt["evolved_prompt"] = "   ";
    CHECK_THROWS_AS(parse_judge_output(fenced(empty_prompt)), ValidationError);

    json no_criteria = judge_payload(8.0, 6.0);
    no_criteria["criteria"] = json::array();
    no_criteria["criterion_scores"]["candidate"] = json::array();
    no_criteria["criterion_scores"]["baseline"] = json::array();
    CHECK_THROWS_AS(parse_judge_output(fenced(no_criteria)), ValidationError);
}

TEST_CASE("structural problems are parse errors") {
    CHECK_THROWS_AS(parse_judge_output("no block"), ParseError);
    CHECK_THROWS_AS(parse_judge_output(std::string(kJudgeBlockBegin) + "\n{broken\n" +
                                       kJudgeBlockEnd),
                    ParseError);
    CHECK_THROWS_AS(parse_judge_output(std::string(kJudgeBlockBegin) + "\n[1,2]\n" +
                                       kJudgeBlockEnd),
                    ParseError);

    json missing = judge_payload(8.0, 6.0);
    missing.erase("scores");
    CHECK_THROWS_AS(parse_judge_output(fenced(missing)), ParseError);

    json short_array = judge_payload(8.0, 6.0);
    short_array["criterion_scores"]["candidate"] = {8.0}; // two criteria expected
    CHECK_THROWS_AS(parse_judge_output(fenced(short_array)), ParseError);

    json non_numeric = judge_payload(8.0, 6.0);
    non_numeric["scores"]["candidate"] = "eight";
    CHECK_THROWS_AS(parse_judge_output(fenced(non_numeric)), ParseError);
}

TEST_CASE("weighted-sum disagreement is a warning, not an error") {
    json payload = judge_payload(8.0, 6.0);
    payload["criterion_scores"]["candidate"] = {2.0, 2.0}; // weighted sum 2.0 vs scalar 8.0
    JudgeOutput out = parse_judge_output(fenced(payload));
    CHECK(out.score_candidate == doctest::Approx(8.0));
    REQUIRE(!out.warnings.empty());
    CHECK(out.warnings[0].find("disagrees") != std::string::npos);
}

TEST_CASE("judge parser never crashes on adversarial input") {
    std::mt19937_64 rng(4242);
    const std::string alphabet = "{}[]\",:01abc <<<>>>JUDGE_V1END\n";
    for (int i = 0; i < 2000; ++i) {
        std::string s;
        int len = static_cast<int>(rng() % 120);
        for (int k = 0; k < len; ++k) s += alphabet[rng() % alphabet.size()];
        try {
            parse_judge_output(s);
        } catch (const ParseError&) {
        } catch (const ValidationError&) {
        }
    }
    CHECK(true); // reaching here means totality held
}

TEST_CASE("judge succeeds first try and consumes one call") {
    ScriptedBackend backend;
    backend.push_tag("judge", fenced(judge_payload(9.0, 7.0)));
    JudgeOutput out = judge(sample_query(), {}, make_node(2, "cand"), make_node(0, "base"),
                            backend, 2);
    CHECK(out.score_candidate == doctest::Approx(9.0));
    CHECK(backend.request_log().size() == 1);
    CHECK(backend.request_log()[0].request.tag == "judge");
    CHECK(backend.request_log()[0].request.temperature == doctest::Approx(0.0));
}

TEST_CASE("judge appends the bad reply and a correction before retrying") {
    ScriptedBackend backend;
    backend.push_tag("judge", "word salad");
    backend.push_tag("judge", fenced(judge_payload(8.5, 6.0)));
    JudgeOutput out = judge(sample_query(), {}, make_node(2, "cand"), make_node(0, "base"),
                            backend, 2);
    CHECK(out.score_candidate == doctest::Approx(8.5));

    const auto& log = backend.request_log();
    REQUIRE(log.size() == 2);
    const auto& retry_msgs = log[1].request.messages;
    REQUIRE(retry_msgs.size() == log[0].request.messages.size() + 2);
    CHECK(retry_msgs[retry_msgs.size() - 2].role == "assistant");
    CHECK(retry_msgs[retry_msgs.size() - 2].content == "word salad");
    CHECK(retry_msgs[retry_msgs.size() - 1].role == "user");
    CHECK(retry_msgs[retry_msgs.size() - 1].content.find(kJudgeBlockBegin) !=
          std::string::npos);
}

TEST_CASE("judge exhaustion reports every attempt") {
    ScriptedBackend backend;
    backend.set_sticky("judge", "forever useless");
    try {
        judge(sample_query(), {}, make_node(2, "c"), make_node(0, "b"), backend, 2);
        FAIL("expected judge failure");
    } catch (const JudgeFailureError& e) {
        CHECK(e.attempts.size() == 3); // 1 + retries
        for (const auto& a : e.attempts) CHECK(a == "forever useless");
    }
    CHECK(backend.request_log().size() == 3);
    CHECK_THROWS_AS(judge(sample_query(), {}, make_node(2, "c"), make_node(0, "b"),
                          backend, -1),
                    InvalidInputError);
}

TEST_CASE("expansion prompt carries the evolved prompt, experiences and parent draft") {
    MetaPrompt prompt{3, "Evolved prompt body v3.", 2};
    TreeNode parent = make_node(4, "Parent draft to improve.");
    std::vector<Experience> prior{make_exp("E1", "Cite the primality test used.")};

    auto msgs = render_expand_prompt(parent, prompt, prior, sample_query());
    REQUIRE(msgs.size() == 2);
    CHECK(msgs[0].role == "system");
    CHECK(msgs[0].content.find("Evolved prompt body v3.") == 0);
    CHECK(msgs[0].content.find("Cite the primality test used.") != std::string::npos);
    CHECK(msgs[1].content.find(sample_query().body) != std::string::npos);
    CHECK(msgs[1].content.find("Parent draft to improve.") != std::string::npos);

    // Without experiences the system message is the bare prompt.
    auto bare = render_expand_prompt(parent, prompt, {}, sample_query());
    CHECK(bare[0].content == "Evolved prompt body v3.");
}

TEST_CASE("expand returns the backend text and tags the call") {
    ScriptedBackend backend;
    backend.push_tag("expand", "An improved draft.");
    MetaPrompt prompt{1, "Prompt body.", 0};
    std::string out = expand(make_node(0, "draft"), prompt, {}, sample_query(), backend,
                             GenParams{0.7, 2048});
    CHECK(out == "An improved draft.");
    REQUIRE(backend.request_log().size() == 1);
    CHECK(backend.request_log()[0].request.tag == "expand");
    CHECK(backend.request_log()[0].request.temperature == doctest::Approx(0.7));
    CHECK(backend.request_log()[0].request.max_tokens == 2048);

    MetaPrompt empty{1, "   ", 0};
    CHECK_THROWS_AS(expand(make_node(0, "d"), empty, {}, sample_query(), backend),
                    InvalidInputError);
}

TEST_CASE("pointwise scoring parses, clamps and retries like the judge") {
    SUBCASE("plain score") {
        std::vector<std::string> warnings;
        CHECK(parse_pointwise_score(score_fence("{\"score\": 7}"), &warnings) == 7.0);
        CHECK(warnings.empty());
    }
    SUBCASE("clamped score") {
        std::vector<std::string> warnings;
        CHECK(parse_pointwise_score(score_fence("{\"score\": 12}"), &warnings) == 10.0);
        CHECK_FALSE(warnings.empty());
    }
    SUBCASE("missing block") {
        CHECK_THROWS_AS(parse_pointwise_score("nothing here", nullptr), ParseError);
        CHECK_THROWS_AS(parse_pointwise_score(score_fence("{\"points\": 5}"), nullptr),
                        ParseError);
    }
    SUBCASE("scorer retries then fails") {
        ScriptedBackend backend;
        backend.set_sticky("judge", "not a score");
        try {
            pointwise_score(sample_query(), make_node(1, "resp"), backend, 1);
            FAIL("expected failure");
        } catch (const JudgeFailureError& e) {
            CHECK(e.attempts.size() == 2);
        }
    }
    SUBCASE("rubric prompt pins the static criteria") {
        auto msgs = render_pointwise_prompt(sample_query(), make_node(1, "resp"));
        REQUIRE(msgs.size() == 2);
        CHECK(msgs[0].content.find(kScoreTemplateVersion) != std::string::npos);
        CHECK(msgs[0].content.find("correctness") != std::string::npos);
        ScriptedBackend backend;
        backend.push_tag("judge", score_fence("{\"score\": 6.5}"));
        CHECK(pointwise_score(sample_query(), make_node(1, "resp"), backend, 0) ==
              doctest::Approx(0.65 * 10));
    }
}

TEST_CASE("per-iteration call ceiling") {
    CHECK(max_calls_per_iteration(0) == 2);
    CHECK(max_calls_per_iteration(2) == 4);
}
