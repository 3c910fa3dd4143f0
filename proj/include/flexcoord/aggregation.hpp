#pragma once

#include "flexcoord/core.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace flexcoord {

enum class AggregationMode { AllInOne, Homogeneous, Heterogeneous };

const char* to_string(AggregationMode mode);
AggregationMode parse_aggregation_mode(const std::string& text);

/// Virtual storage unit of a group: summed power and capacity,
/// capacity-weighted SoC and efficiencies.
EssParams aggregate(std::span<const EssParams> children, std::string id = "virtual");

/// Groups of unit indices. Homogeneous places units of similar PtE ratio
/// together, Heterogeneous spreads them. Ties are broken by unit id.
std::vector<std::vector<std::size_t>> partition(std::span<const EssParams> units, AggregationMode mode,
                                                std::size_t group_count);

struct TreeChild {
    enum class Kind { Unit, Node };
    Kind kind = Kind::Unit;
    std::size_t index = 0;  // into AggregatorTree::units or ::nodes

    bool operator==(const TreeChild&) const = default;
};

struct AggregatorNode {
    std::string id;
    std::vector<TreeChild> children;
    EssParams virtual_params;
    std::optional<Timeseries> ipf_constraint;
};

/// Coordination hierarchy. Nodes are stored bottom-up: every node appears
/// after all of its child nodes, the root is the last node.
struct AggregatorTree {
    std::vector<EssParams> units;
    std::vector<AggregatorNode> nodes;

    std::size_t root() const { return nodes.size() - 1; }
    const AggregatorNode& root_node() const { return nodes.back(); }

    /// Parameters each child presents to `node`: unit params or virtual params.
    std::vector<EssParams> child_params(std::size_t node) const;

    /// Unit indices below `node`, in tree order.
    std::vector<std::size_t> leaves(std::size_t node) const;

    std::optional<std::size_t> find(const std::string& node_id) const;
};

/// Builds root -> (optional mid levels) -> group aggregators -> units.
/// `nesting` groups the group aggregators into intermediate aggregators by
/// group index; empty means the two-level shape. A single group without
/// nesting becomes a one-node tree whose root owns the units, which is the
/// shape of the monolithic scheme. Virtual parameters are computed bottom-up.
AggregatorTree build_tree(std::vector<EssParams> units, const std::vector<std::vector<std::size_t>>& groups,
                          const std::vector<std::vector<std::size_t>>& nesting = {});

/// Recomputes every node's virtual parameters from its children.
void aggregate_bottom_up(AggregatorTree& tree);

/// Throws InputError unless the tree is a single-rooted, acyclic hierarchy in
/// which every unit appears exactly once.
void validate_tree(const AggregatorTree& tree);

}  // namespace flexcoord
