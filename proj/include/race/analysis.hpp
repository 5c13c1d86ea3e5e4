#pragma once

// Relation-distribution study over parsed documents: per-class Z-score
// profiles and group-paired cosine similarity of relation counts.

#include <array>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "race/dataset.hpp"
#include "race/rst.hpp"

namespace race {

struct AnalysisDoc {
  std::string id;
  std::string group_id;
  Label label = Label::HumanWritten;
  RelationCounts counts{};  // raw internal-node counts per relation
};

AnalysisDoc make_analysis_doc(const Record& record, const RstTree& tree);

inline constexpr double kSigmaFloor = 1e-12;

struct RelationProfile {
  std::array<RelationCounts, 4> class_mean{};  // mean relative frequency per class
  RelationCounts mu{};
  RelationCounts sigma{};                      // population std over documents
  std::array<RelationCounts, 4> z{};
  std::array<std::size_t, 4> class_docs{};
  std::size_t excluded = 0;                    // documents without internal nodes
};

/// Relative frequencies per document; mu and sigma are taken over every
/// included document. Z is 0 wherever sigma < kSigmaFloor. Throws EmptyClass
/// when some class has no usable document.
RelationProfile zscore_profile(const std::vector<AnalysisDoc>& docs);

/// Cosine of two count vectors; NaN when either is all zero.
double relation_cosine(const RelationCounts& a, const RelationCounts& b);

struct CosineSummary {
  Label reference = Label::HumanWritten;
  Label target = Label::HumanWritten;
  double mean = 0.0;
  double std = 0.0;  // population
  std::size_t pairs = 0;
  std::size_t groups_missing_class = 0;
  std::size_t zero_vector_pairs = 0;
};

/// Pairs the reference and target documents sharing a group_id. Groups
/// lacking either class, or where either vector is zero, are skipped and
/// counted. Throws NoPairs when nothing remains.
CosineSummary pairwise_cosine(Label reference, Label target, const std::vector<AnalysisDoc>& docs);

/// The six reference/target rows of the similarity table.
std::vector<std::pair<Label, Label>> similarity_table_pairs();

/// Tab-separated radar data: header of relation names, one Z row per class.
std::string radar_tsv(const RelationProfile& profile);
nlohmann::json profile_json(const RelationProfile& profile);

std::string format_similarity_table(const std::vector<CosineSummary>& rows);
nlohmann::json similarity_json(const std::vector<CosineSummary>& rows);

}  // namespace race
