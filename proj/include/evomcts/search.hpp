#pragma once

#include <cstdint>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "evomcts/backend.hpp"
#include "evomcts/core.hpp"
#include "evomcts/memory.hpp"
#include "evomcts/peemp.hpp"
#include "evomcts/preference.hpp"

namespace evomcts {

enum class Ablation { NoMetaPrompt, NoMemory, NoPeemp, RepeatedSampling };

// Accepts hyphenated or underscored names (no-memory / no_memory, ...);
// unknown names raise ConfigError.
std::set<Ablation> parse_ablations(const std::vector<std::string>& names);
std::string to_string(Ablation a);

inline constexpr const char* kDefaultBasePrompt =
    "You are a meticulous expert problem solver. Reason step by step, verify "
    "every claim, and end with the final answer on its own line in the form "
    "FINAL: <answer>.";

inline const std::vector<std::string> kDefaultTaxonomy = {
    "algebra", "geometry", "number theory", "combinatorics", "calculus", "general"};

struct SearchConfig {
    int iterations = 8;
    double exploration_c = 1.414;
    double gamma = 0.5;
    FusionConfig fusion;
    std::set<Ablation> ablation;
    std::uint64_t seed = 0;

    int retries = 2;       // extra structured-output attempts for judge/scorer/optimizer
    int retrieval_k = 5;
    std::size_t min_insight_length = 20; // high-value gate for new insights

    GenParams expand_params{.temperature = 0.7, .max_tokens = 4096};
    GenParams judge_params{.temperature = 0.0, .max_tokens = 4096};
    std::string base_prompt = kDefaultBasePrompt;
    std::vector<std::string> taxonomy = kDefaultTaxonomy;
};

// Throws ConfigError naming the offending field.
void validate_config(const SearchConfig& cfg);

// One per-iteration record for traces and growth curves.
struct IterationEvent {
    int iteration = 0;           // 1-based rollout index
    NodeId selected = 0;         // parent chosen for expansion
    NodeId child = -1;           // -1 when the iteration failed
    double score_candidate = 0.0;
    double score_baseline = 0.0; // 0 in pointwise modes
    double reward = 0.0;         // fused reward assigned to the child
    int prompt_version = 0;      // evolved-prompt version after the iteration
    int library_active = 0;      // active experiences after the memory update
    int new_insights = 0;        // insights that passed the high-value gate
    bool failed = false;
    std::string note;            // failure reason or judge warnings
};
using EventSink = std::function<void(const IterationEvent&)>;

struct SearchResult {
    NodeId best_node = 0;
    std::string best_response;
    SearchTree tree;
    int experience_delta = 0; // active-count change over the run
    CostReport cost;

    std::vector<MetaPrompt> prompt_lineage; // versions 0..N in order
    std::string task_type;                  // resolved label; empty when memory is off
    bool aborted = false;                   // transport failure ended the run early
    std::string abort_reason;
};

// Exploration value: unvisited nodes are infinitely attractive; otherwise
// q + c * sqrt(ln(parent_visits) / visits).
double uct_value(const TreeNode& node, int parent_visits, double c);

// Greedy descent from the root by uct_value, stopping at the first leaf or
// the first unvisited child picked. Ties break toward the lower node id.
NodeId select(const SearchTree& tree, double c);

// Sets the leaf's q to `reward`, then applies the decay rule
// q_parent = (1-gamma) * q_parent + gamma * q_child up the path to the root,
// incrementing visits on every touched node.
void backpropagate(SearchTree& tree, NodeId leaf, double reward, double gamma);

// Argmax of fused reward over scored nodes, recomputed from the final edge
// set (a node's local probability comes from its creation comparison, 0.5
// when that comparison tied). With no edges at all the raw scores decide.
// Falls back to the root when nothing was ever scored.
NodeId best_node(const SearchTree& tree, const FusionConfig& fusion);

// The dual-loop search over one query. Mutates `library` in place (memory
// updates are applied per iteration). A judge that never produces a valid
// block fails only its own iteration; a transport failure ends the run with
// `aborted` set and everything built so far preserved.
SearchResult run_search(const Query& query, ExperienceLibrary& library, Backend& backend,
                        const SearchConfig& cfg, const EventSink& sink = {});

} // namespace evomcts
