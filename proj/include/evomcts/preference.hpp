#pragma once

#include <map>
#include <vector>

#include "evomcts/core.hpp"

namespace evomcts {

// Global ranking over a set of compared nodes. `scores` counts strictly
// dominated nodes; `normalized` divides by n-1 (1.0 for a lone participant).
struct BordaRanking {
    std::map<NodeId, int> scores;
    std::map<NodeId, double> normalized;
};

struct FusionConfig {
    double alpha = 0.5; // weight on the local pairwise probability
};

// Win digraph after collapsing strongly connected components. Supernodes are
// indexed densely; adjacency is between supernodes and acyclic by
// construction (condense_cycles) but not revalidated here.
struct CondensedGraph {
    std::vector<std::vector<NodeId>> members;   // supernode -> sorted original ids
    std::vector<std::vector<int>> adjacency;    // supernode -> sorted unique supernode targets
    std::map<NodeId, int> supernode_of;
};

// Bradley-Terry win probability exp(s_c) / (exp(s_c) + exp(s_p)), evaluated
// with the max subtracted before exponentiation.
double bt_local_q(double s_c, double s_p);

// Collapses SCCs of the winner->loser digraph over `nodes`. Every node lands
// in exactly one supernode; edges within an SCC disappear, edges across SCCs
// are kept (deduplicated).
CondensedGraph condense_cycles(const std::vector<ComparisonEdge>& edges,
                               const std::vector<NodeId>& nodes);

// Borda score of a node = count of original nodes strictly dominated through
// the transitive closure of the condensed DAG; all members of a supernode
// share its score. normalized = score / (total_nodes - 1), or 1.0 when
// total_nodes == 1. Throws ContractViolationError on a cyclic adjacency.
BordaRanking borda_ranking(const CondensedGraph& graph, int total_nodes);

// Convenience: condense + rank in one step over the given participant set.
BordaRanking borda_ranking(const std::vector<ComparisonEdge>& edges,
                           const std::vector<NodeId>& nodes);

// alpha * q_local + (1 - alpha) * borda_norm. All inputs must lie in [0,1].
double fuse_reward(double q_local, double borda_norm, const FusionConfig& cfg);

} // namespace evomcts
