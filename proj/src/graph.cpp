#include "race/graph.hpp"

#include <algorithm>
#include <unordered_map>

#include "race/common.hpp"

namespace race {

LogicGraph build_graph(const RstTree& tree) {
  try {
    validate_tree(tree);
  } catch (const Error& e) {
    fail(ErrorKind::InvalidTree, std::string("build_graph: ") + e.what());
  }

  std::unordered_map<int, std::size_t> leaf_pos;
  for (std::size_t i = 0; i < tree.edus.size(); ++i) leaf_pos[tree.edus[i].id] = i;
  std::unordered_map<int, const InternalNode*> internal;
  for (const auto& n : tree.internals) internal[n.id] = &n;

  LogicGraph g;
  g.nodes.resize(tree.edus.size());
  for (std::size_t i = 0; i < tree.edus.size(); ++i) {
    g.nodes[i] = {NodeType::Leaf, static_cast<int>(i), std::nullopt};
  }

  // Iterative post-order over internals; dense id assigned on exit.
  std::unordered_map<int, int> dense;
  for (const auto& [id, pos] : leaf_pos) dense[id] = static_cast<int>(pos);
  std::vector<std::pair<int, bool>> stack{{tree.root_id, false}};
  while (!stack.empty()) {
    auto [id, expanded] = stack.back();
    stack.pop_back();
    auto it = internal.find(id);
    if (it == internal.end()) continue;
    if (!expanded) {
      stack.emplace_back(id, true);
      stack.emplace_back(it->second->right, false);
      stack.emplace_back(it->second->left, false);
      continue;
    }
    const InternalNode& n = *it->second;
    const int v = g.num_nodes();
    dense[id] = v;
    g.nodes.push_back({NodeType::NonLeaf, -1, n.relation});
    const int a = dense.at(n.left);
    const int b = dense.at(n.right);
    g.edges.push_back({a, forward_relation_id(n.relation), v});
    g.edges.push_back({b, forward_relation_id(n.relation), v});
    g.edges.push_back({v, inverse_relation_id(n.relation), a});
    g.edges.push_back({v, inverse_relation_id(n.relation), b});
  }
  g.root = dense.at(tree.root_id);
  return g;
}

std::vector<std::vector<int>> forward_children(const LogicGraph& graph) {
  std::vector<std::vector<int>> children(graph.nodes.size());
  for (const auto& e : graph.edges) {
    if (e.relation < static_cast<int>(kNumRelations)) children[e.dst].push_back(e.src);
  }
  return children;
}

std::vector<int> descendants(const LogicGraph& graph, int node) {
  if (node < 0 || node >= graph.num_nodes()) {
    fail(ErrorKind::UnknownNode, "node " + std::to_string(node) + " is not in the graph");
  }
  const auto children = forward_children(graph);
  std::vector<int> leaves;
  std::vector<int> stack{node};
  std::vector<bool> seen(graph.nodes.size(), false);
  while (!stack.empty()) {
    const int v = stack.back();
    stack.pop_back();
    if (seen[v]) continue;
    seen[v] = true;
    if (graph.nodes[v].type == NodeType::Leaf) {
      leaves.push_back(v);
      continue;
    }
    for (int c : children[v]) stack.push_back(c);
  }
  std::sort(leaves.begin(), leaves.end());
  return leaves;
}

void validate_graph(const LogicGraph& graph) {
  const int n = graph.num_nodes();
  if (n == 0) fail(ErrorKind::InvalidTree, "graph has no nodes");
  if (graph.root < 0 || graph.root >= n) fail(ErrorKind::InvalidTree, "root is not a node");
  std::vector<std::vector<int>> adj(n);
  for (const auto& e : graph.edges) {
    if (e.src < 0 || e.src >= n || e.dst < 0 || e.dst >= n) {
      fail(ErrorKind::InvalidTree, "edge endpoint outside the node range");
    }
    if (e.relation < 0 || e.relation >= graph.num_relations) {
      fail(ErrorKind::InvalidTree, "edge relation id " + std::to_string(e.relation) +
                                       " outside [0, " + std::to_string(graph.num_relations) + ")");
    }
    adj[e.src].push_back(e.dst);
    adj[e.dst].push_back(e.src);
  }
  std::vector<bool> seen(n, false);
  std::vector<int> stack{graph.root};
  int count = 0;
  while (!stack.empty()) {
    const int v = stack.back();
    stack.pop_back();
    if (seen[v]) continue;
    seen[v] = true;
    ++count;
    for (int u : adj[v]) stack.push_back(u);
  }
  if (count != n) fail(ErrorKind::InvalidTree, "graph is not connected to its root");
}

nlohmann::json graph_to_json(const LogicGraph& graph) {
  nlohmann::json nodes = nlohmann::json::array();
  for (int i = 0; i < graph.num_nodes(); ++i) {
    const auto& node = graph.nodes[i];
    nlohmann::json j = {{"id", i}, {"type", static_cast<int>(node.type)}};
    if (node.type == NodeType::Leaf) {
      j["edu_index"] = node.edu_index;
    } else {
      j["relation"] = std::string(relation_name(*node.relation));
    }
    nodes.push_back(std::move(j));
  }
  nlohmann::json edges = nlohmann::json::array();
  for (const auto& e : graph.edges) edges.push_back({e.src, e.relation, e.dst});
  return {{"nodes", nodes},
          {"edges", edges},
          {"root", graph.root},
          {"num_relations", graph.num_relations}};
}

}  // namespace race
