#include "evomcts/core.hpp"

#include <set>

namespace evomcts {

const TreeNode& SearchTree::node(NodeId id) const {
    auto it = nodes.find(id);
    if (it == nodes.end())
        throw MissingNodeError("no node with id " + std::to_string(id));
    return it->second;
}

TreeNode& SearchTree::node(NodeId id) {
    auto it = nodes.find(id);
    if (it == nodes.end())
        throw MissingNodeError("no node with id " + std::to_string(id));
    return it->second;
}

SearchTree new_tree(const Query& query, const MetaPrompt& initial_prompt,
                    const std::string& initial_response) {
    if (initial_response.empty())
        throw InvalidInputError("initial response must be non-empty");
    if (initial_prompt.version != 0)
        throw InvalidInputError("initial prompt must be version 0");

    SearchTree tree;
    tree.query_ref = query.id;
    TreeNode root;
    root.node_id = 0;
    root.meta_prompt = initial_prompt;
    root.response = initial_response;
    root.q_value = 0.5;
    root.visits = 0;
    tree.nodes.emplace(0, std::move(root));
    tree.next_node_id = 1;
    return tree;
}

NodeId add_child(SearchTree& tree, NodeId parent, const MetaPrompt& prompt,
                 const std::string& response) {
    TreeNode& parent_node = tree.node(parent);
    NodeId id = tree.next_node_id++;
    TreeNode child;
    child.node_id = id;
    child.parent_id = parent;
    child.meta_prompt = prompt;
    child.response = response;
    child.q_value = 0.5;
    child.visits = 0;
    parent_node.children.push_back(id);
    tree.nodes.emplace(id, std::move(child));
    return id;
}

bool well_formed(const SearchTree& tree) {
    if (tree.nodes.empty()) return false;
    int roots = 0;
    for (const auto& [id, node] : tree.nodes) {
        if (node.node_id != id) return false;
        if (!node.parent_id) {
            ++roots;
            continue;
        }
        // Walk to the root with a visited set to detect cycles.
        std::set<NodeId> seen{id};
        NodeId cur = id;
        while (true) {
            const auto it = tree.nodes.find(cur);
            if (it == tree.nodes.end()) return false;
            if (!it->second.parent_id) break;
            cur = *it->second.parent_id;
            if (!seen.insert(cur).second) return false;
        }
        if (cur != tree.root_id()) return false;
    }
    if (roots != 1) return false;
    for (const auto& [id, node] : tree.nodes) {
        for (NodeId c : node.children) {
            auto it = tree.nodes.find(c);
            if (it == tree.nodes.end()) return false;
            if (!it->second.parent_id || *it->second.parent_id != id) return false;
        }
    }
    for (const auto& e : tree.edges) {
        if (!tree.contains(e.winner) || !tree.contains(e.loser)) return false;
    }
    return true;
}

} // namespace evomcts
