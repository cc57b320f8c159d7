#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "evomcts/errors.hpp"

namespace evomcts {

using NodeId = int;

// One problem instance.
struct Query {
    std::string id;
    std::string body;
    std::optional<std::string> task_type;
    std::optional<std::string> gold_answer;
    std::optional<std::string> source;
};

// Versioned system prompt. Version 0 is the configured base prompt; every
// later version records the version it evolved from.
struct MetaPrompt {
    int version = 0;
    std::string body;
    std::optional<int> parent_version;
};

// A response state: the prompt that produced it plus the response text.
// q_value lives in [0,1]; raw_score is the judge's [0,10] scalar from the
// first comparison involving this node (the root is first scored as a
// baseline; a node is never rescored).
struct TreeNode {
    NodeId node_id = 0;
    std::optional<NodeId> parent_id;
    MetaPrompt meta_prompt;
    std::string response;
    std::optional<double> raw_score;
    double q_value = 0.5;
    int visits = 0;
    std::vector<NodeId> children;
};

// Directed preference: winner beat loser with the recorded scores.
// Ties produce no edge.
struct ComparisonEdge {
    NodeId winner = 0;
    NodeId loser = 0;
    double winner_score = 0.0;
    double loser_score = 0.0;
};

// Search tree for one query. Node ids are a dense monotone counter starting
// at 0 (the root); identical responses under different prompts stay distinct.
struct SearchTree {
    std::string query_ref;
    std::map<NodeId, TreeNode> nodes;
    std::vector<ComparisonEdge> edges;
    NodeId next_node_id = 0;

    const TreeNode& node(NodeId id) const;
    TreeNode& node(NodeId id);
    bool contains(NodeId id) const { return nodes.count(id) != 0; }
    NodeId root_id() const { return 0; }
    std::size_t size() const { return nodes.size(); }
};

// Builds a tree holding only the root state. The root starts neutral:
// q_value 0.5, zero visits, no raw score.
SearchTree new_tree(const Query& query, const MetaPrompt& initial_prompt,
                    const std::string& initial_response);

// Appends a child under `parent`; returns the new node's id
// (the previous next_node_id).
NodeId add_child(SearchTree& tree, NodeId parent, const MetaPrompt& prompt,
                 const std::string& response);

// True when every node reaches the root by parent links without cycles and
// all children lists are consistent.
bool well_formed(const SearchTree& tree);

} // namespace evomcts
