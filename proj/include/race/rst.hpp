#pragma once

// Rhetorical-structure trees as emitted by an external discourse parser.

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace race {

/// The closed inventory of coarse rhetorical relations.
enum class Relation : std::uint8_t {
  Attribution,
  Background,
  Cause,
  Comparison,
  Condition,
  Contrast,
  Elaboration,
  Enablement,
  Evaluation,
  Explanation,
  Joint,
  MannerMeans,
  SameUnit,
  Summary,
  Temporal,
  TextualOrganization,
  TopicChange,
  TopicComment,
};

inline constexpr std::size_t kNumRelations = 18;

std::string_view relation_name(Relation r);

/// Exact, case-sensitive lookup. Throws Error(UnknownRelation) on anything
/// outside the inventory.
Relation parse_relation(std::string_view name);

const std::array<Relation, kNumRelations>& all_relations();

struct EduNode {
  int id = 0;
  std::size_t span_start = 0;  // inclusive character offset
  std::size_t span_end = 0;    // exclusive character offset
  bool operator==(const EduNode&) const = default;
};

struct InternalNode {
  int id = 0;
  Relation relation = Relation::Joint;
  int left = 0;
  int right = 0;
  bool operator==(const InternalNode&) const = default;
};

/// A validated binary discourse tree over one document.
///
/// Node ids are unique across leaves and internals but need not be dense.
/// Leaves are kept in document order; internals in input order.
struct RstTree {
  std::string doc_id;
  std::string document;
  std::vector<EduNode> edus;
  std::vector<InternalNode> internals;
  int root_id = 0;
  // Parser nuclearity marks ("NS", "SN", "NN"), aligned with internals. Carried
  // through serialization only.
  std::vector<std::string> nuclearity;
  // Free-form metadata from the parser hook (e.g. truncation notes).
  nlohmann::json meta = nlohmann::json::object();

  std::string_view edu_text(std::size_t index) const {
    const auto& e = edus.at(index);
    return std::string_view(document).substr(e.span_start, e.span_end - e.span_start);
  }

  bool operator==(const RstTree&) const = default;
};

/// Parses and validates one tree record.
///
/// A record with several parentless nodes (a forest) is merged right-branching
/// under synthetic Textual-organization nodes, ordered by span.
RstTree load_tree(const nlohmann::json& record);
RstTree load_tree_line(std::string_view line);

nlohmann::json serialize_tree(const RstTree& tree);
std::string serialize_tree_line(const RstTree& tree);

/// Re-checks every structural invariant. Throws SchemaError / SpanError /
/// InvalidTree.
void validate_tree(const RstTree& tree);

/// Sentence-level segmentation used when no parser output exists: leaves
/// partition the document at sentence ends, joined right-branching by Joint.
RstTree fallback_segment(std::string_view document, std::string doc_id = {});

/// Byte ranges of the sentences fallback_segment would produce.
std::vector<std::pair<std::size_t, std::size_t>> sentence_spans(std::string_view document);

using RelationCounts = std::array<double, kNumRelations>;

RelationCounts relation_frequency_vector(const RstTree& tree);

/// Leaf ids in left-to-right (in-order) traversal.
std::vector<int> inorder_leaves(const RstTree& tree);

/// Tree cache file: one serialized tree per line, keyed by doc_id. Later
/// lines win. Malformed lines throw with their line number.
std::map<std::string, RstTree> read_trees_jsonl(const std::string& path);
void append_tree_jsonl(const std::string& path, const RstTree& tree);

}  // namespace race
