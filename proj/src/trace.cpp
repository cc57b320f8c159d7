#include "evomcts/trace.hpp"

namespace evomcts {

using nlohmann::json;

json node_to_json(const TreeNode& node) {
    json j{{"node_id", node.node_id},
           {"parent_id", nullptr},
           {"prompt_version", node.meta_prompt.version},
           {"response", node.response},
           {"raw_score", nullptr},
           {"q_value", node.q_value},
           {"visits", node.visits},
           {"children", node.children}};
    if (node.parent_id) j["parent_id"] = *node.parent_id;
    if (node.raw_score) j["raw_score"] = *node.raw_score;
    return j;
}

json edge_to_json(const ComparisonEdge& edge) {
    return json{{"winner", edge.winner},
                {"loser", edge.loser},
                {"winner_score", edge.winner_score},
                {"loser_score", edge.loser_score}};
}

json tree_to_json(const SearchTree& tree) {
    json nodes = json::array();
    for (const auto& [_, node] : tree.nodes) nodes.push_back(node_to_json(node));
    json edges = json::array();
    for (const auto& edge : tree.edges) edges.push_back(edge_to_json(edge));
    return json{{"query_ref", tree.query_ref}, {"nodes", nodes}, {"edges", edges}};
}

json event_to_json(const IterationEvent& ev) {
    return json{{"iteration", ev.iteration},
                {"selected", ev.selected},
                {"child", ev.child},
                {"score_candidate", ev.score_candidate},
                {"score_baseline", ev.score_baseline},
                {"reward", ev.reward},
                {"prompt_version", ev.prompt_version},
                {"library_active", ev.library_active},
                {"new_insights", ev.new_insights},
                {"failed", ev.failed},
                {"note", ev.note}};
}

json cost_to_json(const CostReport& cost) {
    return json{{"calls_by_tag", cost.calls_by_tag},
                {"prompt_tokens_by_tag", cost.prompt_tokens_by_tag},
                {"completion_tokens_by_tag", cost.completion_tokens_by_tag},
                {"total_calls", cost.total_calls()},
                {"dollars", cost.dollars}};
}

json lineage_to_json(const std::vector<MetaPrompt>& lineage) {
    json arr = json::array();
    for (const MetaPrompt& p : lineage) {
        json j{{"version", p.version}, {"parent_version", nullptr}, {"body", p.body}};
        if (p.parent_version) j["parent_version"] = *p.parent_version;
        arr.push_back(j);
    }
    return arr;
}

} // namespace evomcts
