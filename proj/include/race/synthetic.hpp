#pragma once

// Synthetic corpus with planted rhetorical signatures, laid out like HART:
// every group has a human source and its polished, generated and humanized
// variants, ids carrying the same prefixes the label mapping reads.

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "race/rst.hpp"

namespace race {

struct SyntheticOptions {
  std::size_t groups = 100;  // four documents per group
  std::uint64_t seed = 7;
  int min_leaves = 6;
  int max_leaves = 12;
  double signature_mass = 0.8;  // chance an internal node draws its class's relations
};

struct SyntheticCorpus {
  std::vector<nlohmann::json> raw;        // HART-style records for build_corpus
  std::map<std::string, RstTree> trees;   // by record id
};

/// Relations each class over-uses; classes have disjoint signatures.
const std::array<std::vector<Relation>, 4>& synthetic_signatures();
/// Relations every class draws from the remaining mass.
const std::vector<Relation>& synthetic_shared_relations();

SyntheticCorpus generate_synthetic(const SyntheticOptions& options);

}  // namespace race
