#pragma once

// Multi-relational graph derived from an RST tree. Relation nodes govern
// their constituent spans: every internal node receives an edge from each
// child under its relation, and sends one back under that relation's inverse.

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "race/rst.hpp"

namespace race {

enum class NodeType : int { NonLeaf = 0, Leaf = 1 };

inline constexpr int kNumGraphRelations = 2 * static_cast<int>(kNumRelations);

inline int forward_relation_id(Relation r) { return static_cast<int>(r); }
inline int inverse_relation_id(Relation r) {
  return static_cast<int>(r) + static_cast<int>(kNumRelations);
}

struct GraphNode {
  NodeType type = NodeType::Leaf;
  int edu_index = -1;                 // leaves: position in RstTree::edus
  std::optional<Relation> relation;   // internals only
};

struct Edge {
  int src = 0;
  int relation = 0;
  int dst = 0;
  bool operator==(const Edge&) const = default;
};

/// Node ids are dense: leaves 0..L-1 in document order, then internals in
/// post-order, so the root is always the last node.
struct LogicGraph {
  std::vector<GraphNode> nodes;
  std::vector<Edge> edges;
  int root = 0;
  int num_relations = kNumGraphRelations;

  int num_nodes() const { return static_cast<int>(nodes.size()); }
};

LogicGraph build_graph(const RstTree& tree);

/// Leaf ids under `node` (the node itself for a leaf), ascending. Follows
/// forward (child -> parent) edges backwards. Throws UnknownNode.
std::vector<int> descendants(const LogicGraph& graph, int node);

/// Children of every node under forward relations, in edge order.
std::vector<std::vector<int>> forward_children(const LogicGraph& graph);

/// Checks dense ids, a single root reachable from all nodes, and relation ids
/// below num_relations. Throws InvalidTree.
void validate_graph(const LogicGraph& graph);

/// Node and edge lists for debugging or for other language front-ends.
nlohmann::json graph_to_json(const LogicGraph& graph);

}  // namespace race
