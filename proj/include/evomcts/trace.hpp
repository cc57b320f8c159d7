#pragma once

#include <vector>

#include <json.hpp>

#include "evomcts/backend.hpp"
#include "evomcts/core.hpp"
#include "evomcts/search.hpp"

namespace evomcts {

// JSON views of run state. Keys serialize alphabetically, so identical runs
// dump identical bytes — the property the golden-trace tests pin down.
nlohmann::json node_to_json(const TreeNode& node);
nlohmann::json edge_to_json(const ComparisonEdge& edge);
nlohmann::json tree_to_json(const SearchTree& tree);
nlohmann::json event_to_json(const IterationEvent& ev);
nlohmann::json cost_to_json(const CostReport& cost);
nlohmann::json lineage_to_json(const std::vector<MetaPrompt>& lineage);

} // namespace evomcts
