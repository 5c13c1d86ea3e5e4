#include "race/rst.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <unordered_map>
#include <unordered_set>

#include "race/common.hpp"

namespace race {

namespace {

constexpr std::array<std::string_view, kNumRelations> kRelationNames = {
    "Attribution", "Background",  "Cause",       "Comparison",
    "Condition",   "Contrast",    "Elaboration", "Enablement",
    "Evaluation",  "Explanation", "Joint",       "Manner-Means",
    "Same-unit",   "Summary",     "Temporal",    "Textual-organization",
    "Topic-Change", "Topic-Comment",
};

using nlohmann::json;

const json& require(const json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) fail(ErrorKind::SchemaError, where + ": missing field '" + key + "'");
  return *it;
}

long long require_int(const json& obj, const char* key, const std::string& where) {
  const json& v = require(obj, key, where);
  if (!v.is_number_integer()) {
    fail(ErrorKind::SchemaError, where + ": field '" + key + "' must be an integer");
  }
  return v.get<long long>();
}

struct Topology {
  std::unordered_map<int, const InternalNode*> internal_by_id;
  std::unordered_map<int, std::size_t> leaf_index;  // id -> position in edus
  std::unordered_map<int, int> parent;
};

Topology build_topology(const RstTree& tree) {
  Topology topo;
  std::unordered_set<int> seen;
  for (std::size_t i = 0; i < tree.edus.size(); ++i) {
    const int id = tree.edus[i].id;
    if (!seen.insert(id).second) {
      fail(ErrorKind::SchemaError, "duplicate node id " + std::to_string(id));
    }
    topo.leaf_index[id] = i;
  }
  for (const auto& node : tree.internals) {
    if (!seen.insert(node.id).second) {
      fail(ErrorKind::SchemaError, "duplicate node id " + std::to_string(node.id));
    }
    topo.internal_by_id[node.id] = &node;
  }
  for (const auto& node : tree.internals) {
    for (int child : {node.left, node.right}) {
      if (!seen.count(child)) {
        fail(ErrorKind::InvalidTree, "internal " + std::to_string(node.id) +
                                         " references unknown child " + std::to_string(child));
      }
      if (child == node.id) {
        fail(ErrorKind::InvalidTree, "node " + std::to_string(child) + " is its own child");
      }
      if (!topo.parent.emplace(child, node.id).second) {
        fail(ErrorKind::InvalidTree, "node " + std::to_string(child) + " has two parents");
      }
    }
  }
  return topo;
}

// In-order leaf sequence from `root`, iterative so deep right-branching trees
// are safe. Returns nullopt if more nodes are visited than exist (cycle).
std::optional<std::vector<int>> collect_leaves(const Topology& topo, int root,
                                               std::size_t node_limit,
                                               std::size_t* visited_out) {
  std::vector<int> leaves;
  std::vector<int> stack{root};
  std::size_t visited = 0;
  while (!stack.empty()) {
    const int id = stack.back();
    stack.pop_back();
    if (++visited > node_limit) return std::nullopt;
    auto it = topo.internal_by_id.find(id);
    if (it == topo.internal_by_id.end()) {
      leaves.push_back(id);
    } else {
      stack.push_back(it->second->right);
      stack.push_back(it->second->left);
    }
  }
  if (visited_out) *visited_out = visited;
  return leaves;
}

void check_spans(const RstTree& tree) {
  const std::size_t n = tree.document.size();
  for (std::size_t i = 0; i < tree.edus.size(); ++i) {
    const auto& e = tree.edus[i];
    if (!(e.span_start < e.span_end && e.span_end <= n)) {
      fail(ErrorKind::SpanError, "EDU " + std::to_string(e.id) + " span [" +
                                     std::to_string(e.span_start) + ", " +
                                     std::to_string(e.span_end) + ") is outside a document of length " +
                                     std::to_string(n));
    }
    if (i > 0 && tree.edus[i - 1].span_end > e.span_start) {
      fail(ErrorKind::SpanError, "EDU " + std::to_string(e.id) + " overlaps EDU " +
                                     std::to_string(tree.edus[i - 1].id));
    }
  }
}

// Merges the forest rooted at `roots` right-branching under synthetic
// Textual-organization nodes; roots are ordered by their first leaf.
int merge_forest(RstTree& tree, std::vector<int> roots, const Topology& topo) {
  std::vector<std::pair<std::size_t, int>> keyed;
  for (int r : roots) {
    auto leaves = collect_leaves(topo, r, tree.edus.size() + tree.internals.size(), nullptr);
    if (!leaves || leaves->empty()) fail(ErrorKind::InvalidTree, "cycle below root " + std::to_string(r));
    keyed.emplace_back(topo.leaf_index.at(leaves->front()), r);
  }
  std::sort(keyed.begin(), keyed.end());
  int next_id = 0;
  for (const auto& e : tree.edus) next_id = std::max(next_id, e.id + 1);
  for (const auto& n : tree.internals) next_id = std::max(next_id, n.id + 1);
  const bool track_nuclearity = !tree.nuclearity.empty();
  int merged = keyed.back().second;
  for (std::size_t i = keyed.size() - 1; i-- > 0;) {
    tree.internals.push_back({next_id, Relation::TextualOrganization, keyed[i].second, merged});
    if (track_nuclearity) tree.nuclearity.push_back("NN");
    merged = next_id++;
  }
  return merged;
}

}  // namespace

std::string_view relation_name(Relation r) {
  return kRelationNames.at(static_cast<std::size_t>(r));
}

Relation parse_relation(std::string_view name) {
  for (std::size_t i = 0; i < kNumRelations; ++i) {
    if (kRelationNames[i] == name) return static_cast<Relation>(i);
  }
  fail(ErrorKind::UnknownRelation, "unknown relation label '" + std::string(name) + "'");
}

const std::array<Relation, kNumRelations>& all_relations() {
  static const std::array<Relation, kNumRelations> rels = [] {
    std::array<Relation, kNumRelations> out{};
    for (std::size_t i = 0; i < kNumRelations; ++i) out[i] = static_cast<Relation>(i);
    return out;
  }();
  return rels;
}

void validate_tree(const RstTree& tree) {
  if (tree.edus.empty()) fail(ErrorKind::SchemaError, "tree has no EDUs");
  check_spans(tree);
  if (tree.internals.size() + 1 != tree.edus.size()) {
    fail(ErrorKind::InvalidTree, "binary tree over " + std::to_string(tree.edus.size()) +
                                     " EDUs needs " + std::to_string(tree.edus.size() - 1) +
                                     " internals, found " + std::to_string(tree.internals.size()));
  }
  if (!tree.nuclearity.empty() && tree.nuclearity.size() != tree.internals.size()) {
    fail(ErrorKind::SchemaError, "nuclearity must align with internals");
  }
  const Topology topo = build_topology(tree);
  if (topo.parent.count(tree.root_id)) {
    fail(ErrorKind::InvalidTree, "root " + std::to_string(tree.root_id) + " has a parent");
  }
  if (!topo.leaf_index.count(tree.root_id) && !topo.internal_by_id.count(tree.root_id)) {
    fail(ErrorKind::InvalidTree, "root " + std::to_string(tree.root_id) + " is not a node");
  }
  const std::size_t total = tree.edus.size() + tree.internals.size();
  std::size_t visited = 0;
  auto leaves = collect_leaves(topo, tree.root_id, total, &visited);
  if (!leaves || visited != total) {
    fail(ErrorKind::InvalidTree, "nodes are not a single tree under root " + std::to_string(tree.root_id));
  }
  for (std::size_t i = 0; i < leaves->size(); ++i) {
    if ((*leaves)[i] != tree.edus[i].id) {
      fail(ErrorKind::SpanError, "in-order leaf sequence disagrees with EDU character order at leaf " +
                                     std::to_string((*leaves)[i]));
    }
  }
}

RstTree load_tree(const json& record) {
  if (!record.is_object()) fail(ErrorKind::SchemaError, "tree record must be an object");
  RstTree tree;
  if (auto it = record.find("doc_id"); it != record.end()) {
    if (!it->is_string()) fail(ErrorKind::SchemaError, "doc_id must be a string");
    tree.doc_id = it->get<std::string>();
  }
  const std::string where = tree.doc_id.empty() ? std::string("tree") : "tree " + tree.doc_id;
  const json& text = require(record, "text", where);
  if (!text.is_string()) fail(ErrorKind::SchemaError, where + ": text must be a string");
  tree.document = text.get<std::string>();

  const json& edus = require(record, "edus", where);
  if (!edus.is_array()) fail(ErrorKind::SchemaError, where + ": edus must be an array");
  for (const auto& e : edus) {
    if (!e.is_object()) fail(ErrorKind::SchemaError, where + ": EDU entries must be objects");
    const long long id = require_int(e, "id", where);
    const long long start = require_int(e, "start", where);
    const long long end = require_int(e, "end", where);
    if (start < 0 || end < 0) fail(ErrorKind::SpanError, where + ": negative span offset");
    tree.edus.push_back({static_cast<int>(id), static_cast<std::size_t>(start),
                         static_cast<std::size_t>(end)});
  }
  std::stable_sort(tree.edus.begin(), tree.edus.end(),
                   [](const EduNode& a, const EduNode& b) { return a.span_start < b.span_start; });

  const json& internals = require(record, "internals", where);
  if (!internals.is_array()) fail(ErrorKind::SchemaError, where + ": internals must be an array");
  for (const auto& n : internals) {
    if (!n.is_object()) fail(ErrorKind::SchemaError, where + ": internal entries must be objects");
    const json& rel = require(n, "relation", where);
    if (!rel.is_string()) fail(ErrorKind::SchemaError, where + ": relation must be a string");
    tree.internals.push_back({static_cast<int>(require_int(n, "id", where)),
                              parse_relation(rel.get<std::string>()),
                              static_cast<int>(require_int(n, "left", where)),
                              static_cast<int>(require_int(n, "right", where))});
  }

  if (auto it = record.find("nuclearity"); it != record.end() && !it->is_null()) {
    if (!it->is_array()) fail(ErrorKind::SchemaError, where + ": nuclearity must be an array");
    for (const auto& v : *it) {
      if (!v.is_string()) fail(ErrorKind::SchemaError, where + ": nuclearity entries must be strings");
      tree.nuclearity.push_back(v.get<std::string>());
    }
    if (tree.nuclearity.size() != tree.internals.size()) {
      fail(ErrorKind::SchemaError, where + ": nuclearity must align with internals");
    }
  }
  if (auto it = record.find("meta"); it != record.end() && it->is_object()) tree.meta = *it;

  if (tree.edus.empty()) fail(ErrorKind::SchemaError, where + ": tree has no EDUs");
  check_spans(tree);

  const Topology topo = build_topology(tree);
  std::vector<int> roots;
  for (const auto& e : tree.edus) {
    if (!topo.parent.count(e.id)) roots.push_back(e.id);
  }
  for (const auto& n : tree.internals) {
    if (!topo.parent.count(n.id)) roots.push_back(n.id);
  }
  if (roots.empty()) fail(ErrorKind::InvalidTree, where + ": no root (cycle)");

  const json* root_field = nullptr;
  if (auto it = record.find("root_id"); it != record.end() && !it->is_null()) root_field = &*it;

  if (roots.size() == 1) {
    tree.root_id = roots.front();
    if (root_field) {
      if (!root_field->is_number_integer() || root_field->get<long long>() != tree.root_id) {
        fail(ErrorKind::InvalidTree, where + ": root_id does not match the parentless node " +
                                         std::to_string(tree.root_id));
      }
    }
  } else {
    if (root_field && !root_field->is_array()) {
      fail(ErrorKind::InvalidTree, where + ": " + std::to_string(roots.size()) +
                                       " parentless nodes but a single root_id");
    }
    tree.root_id = merge_forest(tree, roots, topo);
  }

  validate_tree(tree);
  return tree;
}

RstTree load_tree_line(std::string_view line) {
  json record;
  try {
    record = json::parse(line);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::SchemaError, std::string("malformed tree record: ") + e.what());
  }
  return load_tree(record);
}

json serialize_tree(const RstTree& tree) {
  json out;
  out["doc_id"] = tree.doc_id;
  out["text"] = tree.document;
  json edus = json::array();
  for (const auto& e : tree.edus) {
    edus.push_back({{"id", e.id}, {"start", e.span_start}, {"end", e.span_end}});
  }
  out["edus"] = std::move(edus);
  json internals = json::array();
  for (const auto& n : tree.internals) {
    internals.push_back({{"id", n.id},
                         {"relation", std::string(relation_name(n.relation))},
                         {"left", n.left},
                         {"right", n.right}});
  }
  out["internals"] = std::move(internals);
  out["root_id"] = tree.root_id;
  if (!tree.nuclearity.empty()) out["nuclearity"] = tree.nuclearity;
  if (!tree.meta.empty()) out["meta"] = tree.meta;
  return out;
}

std::string serialize_tree_line(const RstTree& tree) { return serialize_tree(tree).dump(); }

std::vector<std::pair<std::size_t, std::size_t>> sentence_spans(std::string_view doc) {
  auto is_space = [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; };
  auto is_terminal = [](char c) { return c == '.' || c == '!' || c == '?'; };
  auto is_closer = [](char c) { return c == '"' || c == '\'' || c == ')' || c == ']'; };

  std::vector<std::pair<std::size_t, std::size_t>> spans;
  std::size_t start = 0;
  std::size_t i = 0;
  const std::size_t n = doc.size();
  while (i < n) {
    if (!is_terminal(doc[i])) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < n && is_terminal(doc[j])) ++j;
    while (j < n && is_closer(doc[j])) ++j;
    if (j < n && !is_space(doc[j])) {
      i = j;
      continue;
    }
    while (j < n && is_space(doc[j])) ++j;
    spans.emplace_back(start, j);
    start = j;
    i = j;
  }
  if (start < n) spans.emplace_back(start, n);
  return spans;
}

RstTree fallback_segment(std::string_view document, std::string doc_id) {
  const bool has_content = std::any_of(document.begin(), document.end(), [](char c) {
    return !std::isspace(static_cast<unsigned char>(c));
  });
  if (!has_content) fail(ErrorKind::EmptyDocument, "cannot segment an empty document");

  RstTree tree;
  tree.doc_id = std::move(doc_id);
  tree.document = std::string(document);
  const auto spans = sentence_spans(document);
  const int n = static_cast<int>(spans.size());
  for (int i = 0; i < n; ++i) tree.edus.push_back({i, spans[i].first, spans[i].second});
  // Internal n+i joins EDU i with everything to its right.
  for (int i = 0; i + 1 < n; ++i) {
    const int right = (i + 2 == n) ? n - 1 : n + i + 1;
    tree.internals.push_back({n + i, Relation::Joint, i, right});
  }
  tree.root_id = n > 1 ? n : 0;
  return tree;
}

RelationCounts relation_frequency_vector(const RstTree& tree) {
  RelationCounts counts{};
  for (const auto& n : tree.internals) counts[static_cast<std::size_t>(n.relation)] += 1.0;
  return counts;
}

std::vector<int> inorder_leaves(const RstTree& tree) {
  const Topology topo = build_topology(tree);
  auto leaves = collect_leaves(topo, tree.root_id, tree.edus.size() + tree.internals.size(), nullptr);
  if (!leaves) fail(ErrorKind::InvalidTree, "cycle in tree");
  return *leaves;
}

std::map<std::string, RstTree> read_trees_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::IoError, "cannot open tree cache " + path);
  std::map<std::string, RstTree> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      RstTree t = load_tree_line(line);
      std::string id = t.doc_id;
      out.insert_or_assign(std::move(id), std::move(t));
    } catch (const Error& e) {
      fail(e.kind(), path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

void append_tree_jsonl(const std::string& path, const RstTree& tree) {
  std::ofstream out(path, std::ios::app);
  if (!out) fail(ErrorKind::IoError, "cannot append to " + path);
  out << serialize_tree_line(tree) << '\n';
}

}  // namespace race
