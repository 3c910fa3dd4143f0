#include "flexcoord/aggregation.hpp"

#include <algorithm>
#include <numeric>

namespace flexcoord {

const char* to_string(AggregationMode mode) {
    switch (mode) {
        case AggregationMode::AllInOne: return "all_in_one";
        case AggregationMode::Homogeneous: return "homogeneous";
        case AggregationMode::Heterogeneous: return "heterogeneous";
    }
    return "unknown";
}

AggregationMode parse_aggregation_mode(const std::string& text) {
    if (text == "all_in_one") return AggregationMode::AllInOne;
    if (text == "homogeneous") return AggregationMode::Homogeneous;
    if (text == "heterogeneous") return AggregationMode::Heterogeneous;
    throw InputError("unknown aggregation mode '" + text + "' (expected all_in_one, homogeneous or heterogeneous)");
}

EssParams aggregate(std::span<const EssParams> children, std::string id) {
    if (children.empty()) throw InputError("aggregate: empty child list");
    if (children.size() == 1) {
        EssParams v = children.front();
        v.id = std::move(id);
        return v;
    }
    EssParams v;
    v.id = std::move(id);
    v.p_max = 0.0;
    v.capacity = 0.0;
    double energy = 0.0, eta_c = 0.0, eta_d = 0.0;
    for (const auto& c : children) {
        v.p_max += c.p_max;
        v.capacity += c.capacity;
        energy += c.soc_initial * c.capacity;
        eta_c += c.eta_chg * c.capacity;
        eta_d += c.eta_dch * c.capacity;
    }
    v.soc_initial = std::clamp(energy / v.capacity, 0.0, 1.0);
    v.eta_chg = std::min(1.0, eta_c / v.capacity);
    v.eta_dch = std::min(1.0, eta_d / v.capacity);
    return v;
}

std::vector<std::vector<std::size_t>> partition(std::span<const EssParams> units, AggregationMode mode,
                                                std::size_t group_count) {
    if (units.empty()) throw InputError("partition: no units");
    if (group_count < 1 || group_count > units.size()) {
        throw InputError("partition: group_count must be in [1, " + std::to_string(units.size()) + "]");
    }
    std::vector<std::size_t> order(units.size());
    std::iota(order.begin(), order.end(), 0);
    if (mode == AggregationMode::AllInOne || group_count == 1) return {order};

    std::vector<double> pte(units.size());
    for (std::size_t i = 0; i < units.size(); ++i) pte[i] = pte_ratio(units[i]);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (pte[a] != pte[b]) return pte[a] < pte[b];
        return units[a].id < units[b].id;
    });

    std::vector<std::vector<std::size_t>> groups(group_count);
    if (mode == AggregationMode::Homogeneous) {
        const std::size_t base = units.size() / group_count;
        const std::size_t extra = units.size() % group_count;
        std::size_t pos = 0;
        for (std::size_t g = 0; g < group_count; ++g) {
            const std::size_t size = base + (g < extra ? 1 : 0);
            groups[g].assign(order.begin() + static_cast<std::ptrdiff_t>(pos),
                             order.begin() + static_cast<std::ptrdiff_t>(pos + size));
            pos += size;
        }
    } else {
        for (std::size_t k = 0; k < order.size(); ++k) groups[k % group_count].push_back(order[k]);
    }
    for (auto& g : groups) std::sort(g.begin(), g.end());
    return groups;
}

std::vector<EssParams> AggregatorTree::child_params(std::size_t node) const {
    std::vector<EssParams> out;
    for (const auto& c : nodes[node].children) {
        out.push_back(c.kind == TreeChild::Kind::Unit ? units[c.index] : nodes[c.index].virtual_params);
    }
    return out;
}

std::vector<std::size_t> AggregatorTree::leaves(std::size_t node) const {
    std::vector<std::size_t> out;
    for (const auto& c : nodes[node].children) {
        if (c.kind == TreeChild::Kind::Unit) {
            out.push_back(c.index);
        } else {
            const auto sub = leaves(c.index);
            out.insert(out.end(), sub.begin(), sub.end());
        }
    }
    return out;
}

std::optional<std::size_t> AggregatorTree::find(const std::string& node_id) const {
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        if (nodes[i].id == node_id) return i;
    }
    return std::nullopt;
}

void aggregate_bottom_up(AggregatorTree& tree) {
    for (std::size_t n = 0; n < tree.nodes.size(); ++n) {
        const auto params = tree.child_params(n);
        tree.nodes[n].virtual_params = aggregate(params, tree.nodes[n].id);
    }
}

AggregatorTree build_tree(std::vector<EssParams> units, const std::vector<std::vector<std::size_t>>& groups,
                          const std::vector<std::vector<std::size_t>>& nesting) {
    if (groups.empty()) throw InputError("build_tree: empty partition");
    AggregatorTree tree;
    tree.units = std::move(units);
    if (groups.size() == 1 && nesting.empty()) {
        // a lone group is the root itself, which then dispatches the units directly
        if (groups[0].empty()) throw InputError("build_tree: empty group 1");
        AggregatorNode root;
        root.id = "root";
        for (std::size_t u : groups[0]) {
            if (u >= tree.units.size()) throw InputError("build_tree: group references unknown unit");
            root.children.push_back({TreeChild::Kind::Unit, u});
        }
        tree.nodes.push_back(std::move(root));
        validate_tree(tree);
        aggregate_bottom_up(tree);
        return tree;
    }
    for (std::size_t g = 0; g < groups.size(); ++g) {
        if (groups[g].empty()) throw InputError("build_tree: empty group " + std::to_string(g + 1));
        AggregatorNode node;
        node.id = "g" + std::to_string(g + 1);
        for (std::size_t u : groups[g]) {
            if (u >= tree.units.size()) throw InputError("build_tree: group references unknown unit");
            node.children.push_back({TreeChild::Kind::Unit, u});
        }
        tree.nodes.push_back(std::move(node));
    }

    AggregatorNode root;
    root.id = "root";
    if (nesting.empty()) {
        for (std::size_t g = 0; g < groups.size(); ++g) root.children.push_back({TreeChild::Kind::Node, g});
    } else {
        std::vector<int> used(groups.size(), 0);
        for (std::size_t m = 0; m < nesting.size(); ++m) {
            if (nesting[m].empty()) throw InputError("build_tree: empty nesting level entry");
            AggregatorNode mid;
            mid.id = "m" + std::to_string(m + 1);
            for (std::size_t g : nesting[m]) {
                if (g >= groups.size()) throw InputError("build_tree: nesting references unknown group");
                ++used[g];
                mid.children.push_back({TreeChild::Kind::Node, g});
            }
            root.children.push_back({TreeChild::Kind::Node, tree.nodes.size()});
            tree.nodes.push_back(std::move(mid));
        }
        for (std::size_t g = 0; g < groups.size(); ++g) {
            if (used[g] != 1) throw InputError("build_tree: every group must be nested exactly once");
        }
    }
    tree.nodes.push_back(std::move(root));
    validate_tree(tree);
    aggregate_bottom_up(tree);
    return tree;
}

void validate_tree(const AggregatorTree& tree) {
    if (tree.nodes.empty()) throw InputError("tree: no aggregators");
    std::vector<int> unit_seen(tree.units.size(), 0);
    std::vector<int> node_parents(tree.nodes.size(), 0);
    for (std::size_t n = 0; n < tree.nodes.size(); ++n) {
        if (tree.nodes[n].children.empty()) throw InputError("tree: aggregator '" + tree.nodes[n].id + "' is empty");
        for (const auto& c : tree.nodes[n].children) {
            if (c.kind == TreeChild::Kind::Unit) {
                if (c.index >= tree.units.size()) throw InputError("tree: unknown unit index");
                ++unit_seen[c.index];
            } else {
                // bottom-up storage order rules out cycles
                if (c.index >= n) throw InputError("tree: child aggregator must precede its parent");
                ++node_parents[c.index];
            }
        }
    }
    for (std::size_t u = 0; u < tree.units.size(); ++u) {
        if (unit_seen[u] != 1) throw InputError("tree: unit '" + tree.units[u].id + "' must belong to exactly one aggregator");
    }
    for (std::size_t n = 0; n + 1 < tree.nodes.size(); ++n) {
        if (node_parents[n] != 1) throw InputError("tree: aggregator '" + tree.nodes[n].id + "' must have exactly one parent");
    }
    if (node_parents.back() != 0) throw InputError("tree: root must not have a parent");
}

}  // namespace flexcoord
