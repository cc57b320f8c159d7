#pragma once

#include <string>
#include <vector>

#include "evomcts/backend.hpp"
#include "evomcts/core.hpp"
#include "evomcts/errors.hpp"
#include "evomcts/memory.hpp"

namespace evomcts {

// One adaptive evaluation dimension the judge invents for the query.
struct Criterion {
    std::string name;
    std::string description;
    double weight = 0.0; // percentage in (0,100]; all weights sum to 100 +- 0.5
};

// The judge's triadic output: scores, new insights, evolved prompt —
// plus the intermediate stages kept for auditing.
struct JudgeOutput {
    std::vector<Criterion> criteria;
    std::string critique;
    std::vector<double> criterion_scores_candidate; // one per criterion
    std::vector<double> criterion_scores_baseline;
    double score_candidate = 0.0; // scalar in [0,10] after clamping
    double score_baseline = 0.0;
    std::vector<std::string> insights; // may be empty
    std::string evolved_prompt;        // never empty
    std::vector<std::string> warnings; // clamps, weighted-sum mismatches
};

// Sampling knobs for generation calls.
struct GenParams {
    double temperature = 0.7;
    int max_tokens = 4096;
};

// Instruction template revision; embedded in every rendered judge prompt so
// traces pin the exact wording that produced them.
inline constexpr const char* kJudgeTemplateVersion = "judge-template/v1";
inline constexpr const char* kScoreTemplateVersion = "score-template/v1";

// Structured-block fences. The judge must answer with one JUDGE block; the
// pointwise scorer with one SCORE block. Fixtures use the same format.
inline constexpr const char* kJudgeBlockBegin = "<<<JUDGE_V1>>>";
inline constexpr const char* kJudgeBlockEnd = "<<<END_JUDGE_V1>>>";
inline constexpr const char* kScoreBlockBegin = "<<<SCORE_V1>>>";
inline constexpr const char* kScoreBlockEnd = "<<<END_SCORE_V1>>>";

// Deterministic seven-stage judging instruction: adaptive criteria,
// comparative critique, weight assignment, weighted scoring, scalar scores,
// insight synthesis, prompt evolution. Prior experiences appear verbatim in
// retrieval order (or an explicit no-prior-experience marker).
std::vector<Message> render_judge_prompt(const Query& q,
                                         const std::vector<Experience>& e_prior,
                                         const TreeNode& candidate,
                                         const TreeNode& baseline);

// Extracts and validates the judge block. Missing/malformed structure ->
// ParseError; weight-sum violation, non-positive weight, or empty evolved
// prompt -> ValidationError. Scores outside [0,10] are clamped with a
// warning; a weighted-sum / scalar-score mismatch > 0.5 is warned, not fatal.
JudgeOutput parse_judge_output(const std::string& raw);

// render -> generate -> parse, re-requesting with a correction message on
// parse/validation failure up to `retries` extra times (so at most
// 1 + retries backend calls). Exhaustion throws JudgeFailureError carrying
// every raw attempt.
JudgeOutput judge(const Query& q, const std::vector<Experience>& e_prior,
                  const TreeNode& candidate, const TreeNode& baseline, Backend& backend,
                  int retries, const GenParams& params = {.temperature = 0.0});

// Child-state generation: system message is the evolved prompt augmented
// with the numbered experience list (bare prompt when e_prior is empty),
// user message is the query plus the parent response as the draft to improve.
std::vector<Message> render_expand_prompt(const TreeNode& parent, const MetaPrompt& prompt,
                                          const std::vector<Experience>& e_prior,
                                          const Query& q);
std::string expand(const TreeNode& parent, const MetaPrompt& prompt,
                   const std::vector<Experience>& e_prior, const Query& q, Backend& backend,
                   const GenParams& params = {});

// Static-rubric pointwise scoring of a single response (judge replacement
// when pairwise judging is ablated): fixed criteria, no insights, no prompt
// evolution. Same retry/clamp semantics as judge.
std::vector<Message> render_pointwise_prompt(const Query& q, const TreeNode& node);
double parse_pointwise_score(const std::string& raw, std::vector<std::string>* warnings);
double pointwise_score(const Query& q, const TreeNode& node, Backend& backend, int retries,
                       const GenParams& params = {.temperature = 0.0});

// Worst-case generation calls per search iteration: one expansion plus at
// most (1 + retries) judge (or pointwise) calls. The search budget
// assertion consumes this constant.
constexpr int max_calls_per_iteration(int retries) { return 1 + (1 + retries); }

} // namespace evomcts
