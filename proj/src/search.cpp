#include "evomcts/search.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <sstream>

namespace evomcts {

namespace {

std::string normalize_ablation_name(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) {
        return c == '_' ? '-' : static_cast<char>(std::tolower(c));
    });
    return s;
}

std::string join_warnings(const std::vector<std::string>& warnings) {
    std::string out;
    for (const auto& w : warnings) {
        if (!out.empty()) out += "; ";
        out += w;
    }
    return out;
}

} // namespace

std::set<Ablation> parse_ablations(const std::vector<std::string>& names) {
    std::set<Ablation> flags;
    for (const auto& raw : names) {
        const std::string name = normalize_ablation_name(raw);
        if (name.empty()) continue;
        if (name == "no-meta-prompt") flags.insert(Ablation::NoMetaPrompt);
        else if (name == "no-memory") flags.insert(Ablation::NoMemory);
        else if (name == "no-peemp") flags.insert(Ablation::NoPeemp);
        else if (name == "repeated-sampling") flags.insert(Ablation::RepeatedSampling);
        else throw ConfigError("unknown ablation: " + raw);
    }
    return flags;
}

std::string to_string(Ablation a) {
    switch (a) {
        case Ablation::NoMetaPrompt: return "no-meta-prompt";
        case Ablation::NoMemory: return "no-memory";
        case Ablation::NoPeemp: return "no-peemp";
        case Ablation::RepeatedSampling: return "repeated-sampling";
    }
    return "?";
}

void validate_config(const SearchConfig& cfg) {
    if (cfg.iterations < 1) throw ConfigError("iterations: must be >= 1");
    if (!(cfg.exploration_c > 0.0)) throw ConfigError("exploration_c: must be positive");
    if (!(cfg.gamma >= 0.0 && cfg.gamma <= 1.0)) throw ConfigError("gamma: must be in [0,1]");
    if (!(cfg.fusion.alpha >= 0.0 && cfg.fusion.alpha <= 1.0))
        throw ConfigError("alpha: must be in [0,1]");
    if (cfg.retries < 0) throw ConfigError("retries: must be >= 0");
    if (cfg.retrieval_k < 1) throw ConfigError("retrieval_k: must be >= 1");
    if (cfg.base_prompt.empty()) throw ConfigError("base_prompt: must be non-empty");
    if (cfg.taxonomy.empty()) throw ConfigError("taxonomy: must be non-empty");
}

double uct_value(const TreeNode& node, int parent_visits, double c) {
    if (parent_visits < 1) throw InvalidInputError("uct_value: parent_visits must be >= 1");
    if (!(c > 0.0)) throw InvalidInputError("uct_value: c must be positive");
    if (node.visits == 0) return std::numeric_limits<double>::infinity();
    return node.q_value +
           c * std::sqrt(std::log(static_cast<double>(parent_visits)) / node.visits);
}

NodeId select(const SearchTree& tree, double c) {
    NodeId current = tree.root_id();
    for (;;) {
        const TreeNode& node = tree.node(current);
        if (node.children.empty()) return current;

        // Children are appended in creation order (ascending ids), so a
        // strict comparison keeps the lowest id on ties.
        const int parent_visits = std::max(1, node.visits);
        NodeId best = node.children.front();
        double best_value = -std::numeric_limits<double>::infinity();
        for (NodeId child : node.children) {
            const double value = uct_value(tree.node(child), parent_visits, c);
            if (value > best_value) {
                best = child;
                best_value = value;
            }
        }
        if (tree.node(best).visits == 0) return best;
        current = best;
    }
}

void backpropagate(SearchTree& tree, NodeId leaf, double reward, double gamma) {
    if (!std::isfinite(reward) || reward < 0.0 || reward > 1.0)
        throw InvalidInputError("backpropagate: reward must be in [0,1]");
    if (!(gamma >= 0.0 && gamma <= 1.0))
        throw InvalidInputError("backpropagate: gamma must be in [0,1]");

    TreeNode& leaf_node = tree.node(leaf);
    leaf_node.q_value = reward;
    leaf_node.visits += 1;

    NodeId child = leaf;
    while (tree.node(child).parent_id) {
        const NodeId parent_id = *tree.node(child).parent_id;
        TreeNode& parent = tree.node(parent_id);
        parent.q_value = (1.0 - gamma) * parent.q_value + gamma * tree.node(child).q_value;
        parent.visits += 1;
        child = parent_id;
    }
}

namespace {

// Local win probability of `id` from the comparison that created it; a node
// whose creation comparison tied (no edge) sits at 0.5, as does the root.
double creation_edge_q(const SearchTree& tree, NodeId id) {
    const TreeNode& node = tree.node(id);
    if (!node.parent_id) return 0.5;
    for (const ComparisonEdge& e : tree.edges) {
        if (e.winner == id && e.loser == *node.parent_id)
            return bt_local_q(e.winner_score, e.loser_score);
        if (e.loser == id && e.winner == *node.parent_id)
            return bt_local_q(e.loser_score, e.winner_score);
    }
    return 0.5;
}

} // namespace

NodeId best_node(const SearchTree& tree, const FusionConfig& fusion) {
    std::vector<NodeId> scored;
    for (const auto& [id, node] : tree.nodes)
        if (node.raw_score) scored.push_back(id);
    if (scored.empty()) return tree.root_id();

    // Ascending iteration plus strict comparisons give the lowest-id tie-break.
    if (tree.edges.empty()) {
        NodeId best = scored.front();
        for (NodeId id : scored)
            if (*tree.node(id).raw_score > *tree.node(best).raw_score) best = id;
        return best;
    }

    std::vector<NodeId> all_nodes;
    for (const auto& [id, _] : tree.nodes) all_nodes.push_back(id);
    const BordaRanking ranking = borda_ranking(tree.edges, all_nodes);

    NodeId best = scored.front();
    double best_reward = -1.0;
    for (NodeId id : scored) {
        const double fused =
            fuse_reward(creation_edge_q(tree, id), ranking.normalized.at(id), fusion);
        if (fused > best_reward) {
            best = id;
            best_reward = fused;
        }
    }
    return best;
}

SearchResult run_search(const Query& query, ExperienceLibrary& library, Backend& backend,
                        const SearchConfig& cfg, const EventSink& sink) {
    validate_config(cfg);

    const bool no_meta = cfg.ablation.count(Ablation::NoMetaPrompt) != 0;
    const bool no_memory = cfg.ablation.count(Ablation::NoMemory) != 0;
    const bool no_peemp = cfg.ablation.count(Ablation::NoPeemp) != 0;
    const bool repeated = cfg.ablation.count(Ablation::RepeatedSampling) != 0;
    const bool pointwise = no_peemp || repeated;

    const MetaPrompt base_prompt{0, cfg.base_prompt, std::nullopt};
    MetaPrompt evolved = base_prompt;

    SearchResult result;
    // The root state is the query itself: expansion treats its text as the
    // draft to improve, so no generation call is spent on initialization.
    result.tree = new_tree(query, base_prompt, query.body);
    result.prompt_lineage.push_back(base_prompt);

    const CostReport cost_before = backend.cost_report();
    const int active_before = library.active_count();

    std::vector<Experience> e_prior;
    if (!no_memory) {
        result.task_type = classify_task(query, cfg.taxonomy, backend);
        e_prior = retrieve(library, result.task_type, cfg.retrieval_k);
    }

    SearchTree& tree = result.tree;
    for (int t = 1; t <= cfg.iterations; ++t) {
        IterationEvent ev;
        ev.iteration = t;
        ev.prompt_version = evolved.version;
        ev.library_active = library.active_count();

        try {
            const NodeId parent_id = repeated ? tree.root_id() : select(tree, cfg.exploration_c);
            ev.selected = parent_id;

            const std::string response =
                expand(tree.node(parent_id), evolved, e_prior, query, backend,
                       cfg.expand_params);

            TreeNode candidate;
            candidate.node_id = tree.next_node_id;
            candidate.parent_id = parent_id;
            candidate.meta_prompt = evolved;
            candidate.response = response;

            if (pointwise) {
                const double score =
                    pointwise_score(query, candidate, backend, cfg.retries, cfg.judge_params);
                const NodeId child = add_child(tree, parent_id, evolved, response);
                tree.node(child).raw_score = score;
                ev.child = child;
                ev.score_candidate = score;
                ev.reward = score / 10.0;
                if (!repeated) backpropagate(tree, child, ev.reward, cfg.gamma);
            } else {
                JudgeOutput verdict;
                try {
                    verdict = judge(query, e_prior, candidate, tree.node(parent_id), backend,
                                    cfg.retries, cfg.judge_params);
                } catch (const JudgeFailureError& e) {
                    // This iteration's budget is spent but the tree is unchanged.
                    ev.failed = true;
                    ev.note = e.what();
                    if (sink) sink(ev);
                    continue;
                }

                const NodeId child = add_child(tree, parent_id, evolved, response);
                tree.node(child).raw_score = verdict.score_candidate;
                if (!tree.node(parent_id).raw_score)
                    tree.node(parent_id).raw_score = verdict.score_baseline;

                if (verdict.score_candidate > verdict.score_baseline)
                    tree.edges.push_back({child, parent_id, verdict.score_candidate,
                                          verdict.score_baseline});
                else if (verdict.score_baseline > verdict.score_candidate)
                    tree.edges.push_back({parent_id, child, verdict.score_baseline,
                                          verdict.score_candidate});

                std::vector<NodeId> all_nodes;
                for (const auto& [id, _] : tree.nodes) all_nodes.push_back(id);
                const BordaRanking ranking = borda_ranking(tree.edges, all_nodes);
                const double q_local =
                    bt_local_q(verdict.score_candidate, verdict.score_baseline);
                const double reward =
                    fuse_reward(q_local, ranking.normalized.at(child), cfg.fusion);
                backpropagate(tree, child, reward, cfg.gamma);

                ev.child = child;
                ev.score_candidate = verdict.score_candidate;
                ev.score_baseline = verdict.score_baseline;
                ev.reward = reward;
                ev.note = join_warnings(verdict.warnings);

                if (!no_meta) {
                    MetaPrompt next;
                    next.version = evolved.version + 1;
                    next.parent_version = evolved.version;
                    next.body = verdict.evolved_prompt;
                    evolved = next;
                    result.prompt_lineage.push_back(next);
                }
                ev.prompt_version = evolved.version;

                if (!no_memory) {
                    const std::vector<std::string> kept =
                        filter_insights(verdict.insights, cfg.min_insight_length);
                    ev.new_insights = static_cast<int>(kept.size());
                    if (!kept.empty()) {
                        const UpdatePlan plan = generate_update_plan(
                            library, kept, query, result.task_type, backend, cfg.retries);
                        apply_plan(library, plan);
                    }
                }
            }
        } catch (const TransportError& e) {
            ev.failed = true;
            ev.note = std::string("transport failure: ") + e.what();
            if (sink) sink(ev);
            result.aborted = true;
            result.abort_reason = e.what();
            break;
        }

        ev.library_active = library.active_count();
        if (sink) sink(ev);
    }

    result.best_node = best_node(tree, cfg.fusion);
    result.best_response = tree.node(result.best_node).response;
    result.experience_delta = library.active_count() - active_before;
    result.cost = cost_delta(backend.cost_report(), cost_before);
    return result;
}

} // namespace evomcts
