#include "evomcts/preference.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <set>

namespace evomcts {

double bt_local_q(double s_c, double s_p) {
    if (!std::isfinite(s_c) || !std::isfinite(s_p))
        throw InvalidInputError("bt_local_q: scores must be finite");
    const double m = std::max(s_c, s_p);
    const double ec = std::exp(s_c - m);
    const double ep = std::exp(s_p - m);
    return ec / (ec + ep);
}

namespace {

// Iterative Tarjan over the adjacency lists; original node order fixed by
// the sorted participant list so the supernode numbering is deterministic.
struct TarjanState {
    const std::vector<std::vector<int>>& adj;
    std::vector<int> index, lowlink;
    std::vector<bool> on_stack;
    std::vector<int> stack;
    std::vector<int> component; // node -> supernode index
    int next_index = 0;
    int component_count = 0;

    explicit TarjanState(const std::vector<std::vector<int>>& adj)
        : adj(adj),
          index(adj.size(), -1),
          lowlink(adj.size(), 0),
          on_stack(adj.size(), false),
          component(adj.size(), -1) {}

    void run(int root) {
        // frames of (node, next child position)
        std::vector<std::pair<int, std::size_t>> frames{{root, 0}};
        while (!frames.empty()) {
            auto& [v, child_pos] = frames.back();
            if (child_pos == 0) {
                index[v] = lowlink[v] = next_index++;
                stack.push_back(v);
                on_stack[v] = true;
            }
            bool descended = false;
            while (child_pos < adj[v].size()) {
                int w = adj[v][child_pos++];
                if (index[w] < 0) {
                    frames.emplace_back(w, 0);
                    descended = true;
                    break;
                }
                if (on_stack[w]) lowlink[v] = std::min(lowlink[v], index[w]);
            }
            if (descended) continue;
            if (lowlink[v] == index[v]) {
                while (true) {
                    int w = stack.back();
                    stack.pop_back();
                    on_stack[w] = false;
                    component[w] = component_count;
                    if (w == v) break;
                }
                ++component_count;
            }
            int finished = v;
            frames.pop_back();
            if (!frames.empty()) {
                int parent = frames.back().first;
                lowlink[parent] = std::min(lowlink[parent], lowlink[finished]);
            }
        }
    }
};

} // namespace

CondensedGraph condense_cycles(const std::vector<ComparisonEdge>& edges,
                               const std::vector<NodeId>& nodes) {
    std::vector<NodeId> ids(nodes);
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());

    std::map<NodeId, int> pos;
    for (std::size_t i = 0; i < ids.size(); ++i) pos[ids[i]] = static_cast<int>(i);

    std::vector<std::vector<int>> adj(ids.size());
    for (const auto& e : edges) {
        auto w = pos.find(e.winner);
        auto l = pos.find(e.loser);
        if (w == pos.end() || l == pos.end())
            throw InvalidInputError("condense_cycles: edge references node outside the set");
        adj[w->second].push_back(l->second);
    }
    for (auto& a : adj) {
        std::sort(a.begin(), a.end());
        a.erase(std::unique(a.begin(), a.end()), a.end());
    }

    TarjanState tarjan(adj);
    for (std::size_t v = 0; v < ids.size(); ++v)
        if (tarjan.index[v] < 0) tarjan.run(static_cast<int>(v));

    CondensedGraph graph;
    graph.members.resize(tarjan.component_count);
    for (std::size_t v = 0; v < ids.size(); ++v) {
        int c = tarjan.component[v];
        graph.members[c].push_back(ids[v]);
        graph.supernode_of[ids[v]] = c;
    }
    for (auto& m : graph.members) std::sort(m.begin(), m.end());

    graph.adjacency.resize(tarjan.component_count);
    std::set<std::pair<int, int>> seen;
    for (std::size_t v = 0; v < ids.size(); ++v) {
        int cv = tarjan.component[v];
        for (int w : adj[v]) {
            int cw = tarjan.component[w];
            if (cv != cw && seen.insert({cv, cw}).second)
                graph.adjacency[cv].push_back(cw);
        }
    }
    for (auto& a : graph.adjacency) std::sort(a.begin(), a.end());
    return graph;
}

BordaRanking borda_ranking(const CondensedGraph& graph, int total_nodes) {
    const int n_super = static_cast<int>(graph.members.size());

    // Kahn topological order; leftover nodes mean the input was cyclic.
    std::vector<int> indegree(n_super, 0);
    for (const auto& targets : graph.adjacency)
        for (int t : targets) ++indegree[t];
    std::vector<int> order;
    order.reserve(n_super);
    std::vector<int> frontier;
    for (int i = 0; i < n_super; ++i)
        if (indegree[i] == 0) frontier.push_back(i);
    while (!frontier.empty()) {
        int v = frontier.back();
        frontier.pop_back();
        order.push_back(v);
        for (int t : graph.adjacency[v])
            if (--indegree[t] == 0) frontier.push_back(t);
    }
    if (static_cast<int>(order.size()) != n_super)
        throw ContractViolationError("borda_ranking: adjacency contains a cycle");

    // Transitive closure via reverse topological order; reachable sets as
    // bool rows (supernode counts here are tree-sized).
    std::vector<std::vector<char>> reach(n_super, std::vector<char>(n_super, 0));
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        int v = *it;
        for (int t : graph.adjacency[v]) {
            reach[v][t] = 1;
            for (int u = 0; u < n_super; ++u)
                if (reach[t][u]) reach[v][u] = 1;
        }
    }

    BordaRanking ranking;
    for (int v = 0; v < n_super; ++v) {
        int dominated = 0;
        for (int u = 0; u < n_super; ++u)
            if (reach[v][u]) dominated += static_cast<int>(graph.members[u].size());
        double norm = total_nodes >= 2
                          ? static_cast<double>(dominated) / (total_nodes - 1)
                          : 1.0;
        for (NodeId id : graph.members[v]) {
            ranking.scores[id] = dominated;
            ranking.normalized[id] = norm;
        }
    }
    return ranking;
}

BordaRanking borda_ranking(const std::vector<ComparisonEdge>& edges,
                           const std::vector<NodeId>& nodes) {
    return borda_ranking(condense_cycles(edges, nodes),
                         static_cast<int>(std::set<NodeId>(nodes.begin(), nodes.end()).size()));
}

double fuse_reward(double q_local, double borda_norm, const FusionConfig& cfg) {
    if (!(q_local >= 0.0 && q_local <= 1.0))
        throw InvalidInputError("fuse_reward: q_local outside [0,1]");
    if (!(borda_norm >= 0.0 && borda_norm <= 1.0))
        throw InvalidInputError("fuse_reward: borda_norm outside [0,1]");
    if (!(cfg.alpha >= 0.0 && cfg.alpha <= 1.0))
        throw InvalidInputError("fuse_reward: alpha outside [0,1]");
    return cfg.alpha * q_local + (1.0 - cfg.alpha) * borda_norm;
}

} // namespace evomcts
