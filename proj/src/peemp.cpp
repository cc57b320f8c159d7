#include "evomcts/peemp.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <sstream>

#include <json.hpp>

#include "evomcts/fenced.hpp"
#include "evomcts/text.hpp"

namespace evomcts {

using nlohmann::json;

namespace {

std::string format_number(double v) {
    std::ostringstream out;
    out << v;
    return out.str();
}

std::string render_experiences(const std::vector<Experience>& e_prior) {
    if (e_prior.empty()) return "(no prior experience)\n";
    std::ostringstream out;
    for (std::size_t i = 0; i < e_prior.size(); ++i)
        out << (i + 1) << ". " << e_prior[i].body << "\n";
    return out.str();
}

double clamp_score(double v, const char* label, std::vector<std::string>* warnings) {
    if (v >= 0.0 && v <= 10.0) return v;
    const double clamped = std::min(10.0, std::max(0.0, v));
    if (warnings)
        warnings->push_back(std::string(label) + " score " + format_number(v) +
                            " outside [0,10], clamped to " + format_number(clamped));
    return clamped;
}

double require_number(const json& j, const char* what) {
    if (!j.is_number()) throw ParseError(std::string(what) + " must be a number");
    return j.get<double>();
}

std::vector<double> require_number_array(const json& j, std::size_t expected,
                                         const char* what) {
    if (!j.is_array()) throw ParseError(std::string(what) + " must be an array");
    if (j.size() != expected)
        throw ParseError(std::string(what) + " must have one entry per criterion");
    std::vector<double> out;
    out.reserve(j.size());
    for (const json& v : j) out.push_back(require_number(v, what));
    return out;
}

} // namespace

std::vector<Message> render_judge_prompt(const Query& q,
                                         const std::vector<Experience>& e_prior,
                                         const TreeNode& candidate,
                                         const TreeNode& baseline) {
    std::ostringstream sys;
    sys << "You are an expert pairwise response judge (" << kJudgeTemplateVersion << ").\n"
        << "Work through all seven stages below, in order, then answer with exactly one\n"
        << "structured block.\n"
        << "\n"
        << "Stage 1 — Adaptive criteria: invent the evaluation criteria this specific\n"
        << "problem demands.\n"
        << "Stage 2 — Comparative critique: contrast the two responses criterion by\n"
        << "criterion, reasoning step by step.\n"
        << "Stage 3 — Weights: assign each criterion a positive percentage weight;\n"
        << "weights must sum to 100.\n"
        << "Stage 4 — Weighted scoring: score each response per criterion on [0,10].\n"
        << "Stage 5 — Scalar scores: give each response one overall score on [0,10];\n"
        << "these are the authoritative scores.\n"
        << "Stage 6 — Insight synthesis: distill new, generally applicable insights\n"
        << "from this comparison (empty list if none).\n"
        << "Stage 7 — Prompt evolution: rewrite the candidate's system prompt so the\n"
        << "next generation avoids the weaknesses you found. Never leave it empty.\n"
        << "\n"
        << "Answer with exactly one block of this form, valid JSON inside the fences:\n"
        << kJudgeBlockBegin << "\n"
        << "{\n"
        << "  \"criteria\": [{\"name\": \"...\", \"description\": \"...\", \"weight\": 50.0}],\n"
        << "  \"critique\": \"...\",\n"
        << "  \"criterion_scores\": {\"candidate\": [0.0], \"baseline\": [0.0]},\n"
        << "  \"scores\": {\"candidate\": 0.0, \"baseline\": 0.0},\n"
        << "  \"insights\": [\"...\"],\n"
        << "  \"evolved_prompt\": \"...\"\n"
        << "}\n"
        << kJudgeBlockEnd << "\n";

    std::ostringstream user;
    user << "Problem:\n"
         << q.body << "\n\n"
         << "Prior experience:\n"
         << render_experiences(e_prior) << "\n"
         << "Candidate response (generated under system prompt v"
         << candidate.meta_prompt.version << "):\n"
         << "--- system prompt ---\n"
         << candidate.meta_prompt.body << "\n"
         << "--- response ---\n"
         << candidate.response << "\n\n"
         << "Baseline response (generated under system prompt v"
         << baseline.meta_prompt.version << "):\n"
         << "--- system prompt ---\n"
         << baseline.meta_prompt.body << "\n"
         << "--- response ---\n"
         << baseline.response << "\n";

    return {{"system", sys.str()}, {"user", user.str()}};
}

JudgeOutput parse_judge_output(const std::string& raw) {
    const std::string payload = extract_fenced_block(raw, kJudgeBlockBegin, kJudgeBlockEnd);
    json j = json::parse(payload, nullptr, false);
    if (j.is_discarded()) throw ParseError("judge block is not valid JSON");
    if (!j.is_object()) throw ParseError("judge block must be a JSON object");

    JudgeOutput out;
    try {
        if (!j.contains("criteria") || !j["criteria"].is_array())
            throw ParseError("judge block missing 'criteria' array");
        for (const json& c : j["criteria"]) {
            if (!c.is_object()) throw ParseError("criterion must be an object");
            Criterion criterion;
            criterion.name = c.at("name").get<std::string>();
            criterion.description = c.at("description").get<std::string>();
            criterion.weight = require_number(c.at("weight"), "criterion weight");
            out.criteria.push_back(std::move(criterion));
        }
        out.critique = j.at("critique").get<std::string>();

        const json& cs = j.at("criterion_scores");
        if (!cs.is_object()) throw ParseError("'criterion_scores' must be an object");
        out.criterion_scores_candidate =
            require_number_array(cs.at("candidate"), out.criteria.size(),
                                 "criterion_scores.candidate");
        out.criterion_scores_baseline =
            require_number_array(cs.at("baseline"), out.criteria.size(),
                                 "criterion_scores.baseline");

        const json& scores = j.at("scores");
        if (!scores.is_object()) throw ParseError("'scores' must be an object");
        out.score_candidate = require_number(scores.at("candidate"), "scores.candidate");
        out.score_baseline = require_number(scores.at("baseline"), "scores.baseline");

        const json& insights = j.at("insights");
        if (!insights.is_array()) throw ParseError("'insights' must be an array");
        for (const json& s : insights) {
            if (!s.is_string()) throw ParseError("insights must be strings");
            out.insights.push_back(s.get<std::string>());
        }
        out.evolved_prompt = j.at("evolved_prompt").get<std::string>();
    } catch (const json::exception& e) {
        throw ParseError(std::string("judge block malformed: ") + e.what());
    }

    if (out.criteria.empty()) throw ValidationError("criteria list is empty");
    double weight_sum = 0.0;
    for (const Criterion& c : out.criteria) {
        if (!(c.weight > 0.0))
            throw ValidationError("criterion '" + c.name + "' has non-positive weight");
        weight_sum += c.weight;
    }
    if (std::abs(weight_sum - 100.0) > 0.5)
        throw ValidationError("criterion weights sum to " + format_number(weight_sum) +
                              ", expected 100 +- 0.5");
    if (trim_copy(out.evolved_prompt).empty())
        throw ValidationError("evolved_prompt is empty");

    out.score_candidate = clamp_score(out.score_candidate, "candidate", &out.warnings);
    out.score_baseline = clamp_score(out.score_baseline, "baseline", &out.warnings);

    // The weighted per-criterion arithmetic is advisory; the scalar scores are
    // authoritative. Disagreement beyond 0.5 is surfaced but not fatal.
    auto weighted = [&](const std::vector<double>& per_criterion) {
        double sum = 0.0;
        for (std::size_t i = 0; i < out.criteria.size(); ++i)
            sum += out.criteria[i].weight / 100.0 * per_criterion[i];
        return sum;
    };
    const double wc = weighted(out.criterion_scores_candidate);
    const double wb = weighted(out.criterion_scores_baseline);
    if (std::abs(wc - out.score_candidate) > 0.5)
        out.warnings.push_back("candidate weighted sum " + format_number(wc) +
                               " disagrees with scalar score " +
                               format_number(out.score_candidate));
    if (std::abs(wb - out.score_baseline) > 0.5)
        out.warnings.push_back("baseline weighted sum " + format_number(wb) +
                               " disagrees with scalar score " +
                               format_number(out.score_baseline));
    return out;
}

JudgeOutput judge(const Query& q, const std::vector<Experience>& e_prior,
                  const TreeNode& candidate, const TreeNode& baseline, Backend& backend,
                  int retries, const GenParams& params) {
    if (retries < 0) throw InvalidInputError("judge: retries must be >= 0");

    BackendRequest req;
    req.tag = tag::judge;
    req.temperature = params.temperature;
    req.max_tokens = params.max_tokens;
    req.messages = render_judge_prompt(q, e_prior, candidate, baseline);

    std::vector<std::string> attempts;
    for (int attempt = 0; attempt <= retries; ++attempt) {
        const std::string raw = backend.generate(req).content;
        attempts.push_back(raw);
        try {
            return parse_judge_output(raw);
        } catch (const Error& e) {
            if (!dynamic_cast<const ParseError*>(&e) &&
                !dynamic_cast<const ValidationError*>(&e))
                throw;
            req.messages.push_back({"assistant", raw});
            req.messages.push_back(
                {"user", std::string("Your reply could not be used (") + e.what() +
                             "). Answer again with exactly one " + kJudgeBlockBegin +
                             " block following the required schema."});
        }
    }
    throw JudgeFailureError("judge produced no valid output in " +
                                std::to_string(retries + 1) + " attempts",
                            std::move(attempts));
}

std::vector<Message> render_expand_prompt(const TreeNode& parent, const MetaPrompt& prompt,
                                          const std::vector<Experience>& e_prior,
                                          const Query& q) {
    if (trim_copy(prompt.body).empty()) throw InvalidInputError("expand: prompt body is empty");

    std::string sys = prompt.body;
    if (!e_prior.empty()) {
        std::ostringstream extra;
        extra << "\n\nRelevant prior experience:\n" << render_experiences(e_prior);
        sys += extra.str();
    }

    std::ostringstream user;
    user << "Problem:\n"
         << q.body << "\n\n"
         << "Current draft:\n"
         << parent.response << "\n\n"
         << "Produce an improved complete response to the problem.";

    return {{"system", sys}, {"user", user.str()}};
}

std::string expand(const TreeNode& parent, const MetaPrompt& prompt,
                   const std::vector<Experience>& e_prior, const Query& q, Backend& backend,
                   const GenParams& params) {
    BackendRequest req;
    req.tag = tag::expand;
    req.temperature = params.temperature;
    req.max_tokens = params.max_tokens;
    req.messages = render_expand_prompt(parent, prompt, e_prior, q);
    return backend.generate(req).content;
}

std::vector<Message> render_pointwise_prompt(const Query& q, const TreeNode& node) {
    std::ostringstream sys;
    sys << "You are a strict grader (" << kScoreTemplateVersion << "). Score the response\n"
        << "against these fixed criteria: correctness (40%), rigor of reasoning (25%),\n"
        << "clarity (20%), completeness (15%). Answer with exactly one block:\n"
        << kScoreBlockBegin << "\n"
        << "{\"score\": 0.0}\n"
        << kScoreBlockEnd << "\n"
        << "where score is the weighted overall score on [0,10].\n";

    std::ostringstream user;
    user << "Problem:\n" << q.body << "\n\nResponse:\n" << node.response << "\n";
    return {{"system", sys.str()}, {"user", user.str()}};
}

double parse_pointwise_score(const std::string& raw, std::vector<std::string>* warnings) {
    const std::string payload = extract_fenced_block(raw, kScoreBlockBegin, kScoreBlockEnd);
    json j = json::parse(payload, nullptr, false);
    if (j.is_discarded()) throw ParseError("score block is not valid JSON");
    if (!j.is_object() || !j.contains("score"))
        throw ParseError("score block missing 'score'");
    const double v = require_number(j["score"], "score");
    return clamp_score(v, "pointwise", warnings);
}

double pointwise_score(const Query& q, const TreeNode& node, Backend& backend, int retries,
                       const GenParams& params) {
    if (retries < 0) throw InvalidInputError("pointwise_score: retries must be >= 0");

    BackendRequest req;
    req.tag = tag::judge;
    req.temperature = params.temperature;
    req.max_tokens = params.max_tokens;
    req.messages = render_pointwise_prompt(q, node);

    std::vector<std::string> attempts;
    for (int attempt = 0; attempt <= retries; ++attempt) {
        const std::string raw = backend.generate(req).content;
        attempts.push_back(raw);
        try {
            return parse_pointwise_score(raw, nullptr);
        } catch (const ParseError& e) {
            req.messages.push_back({"assistant", raw});
            req.messages.push_back(
                {"user", std::string("Your reply could not be used (") + e.what() +
                             "). Answer again with exactly one " + kScoreBlockBegin +
                             " block."});
        }
    }
    throw JudgeFailureError("pointwise scorer produced no valid output in " +
                                std::to_string(retries + 1) + " attempts",
                            std::move(attempts));
}

} // namespace evomcts
