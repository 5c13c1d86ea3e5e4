#include <doctest.h>

#include <set>

#include "race/dataset.hpp"
#include "race/synthetic.hpp"

using namespace race;

TEST_CASE("synthetic corpus layout") {
  SyntheticOptions so;
  so.groups = 20;
  const SyntheticCorpus a = generate_synthetic(so);
  CHECK(a.raw.size() == 80);
  CHECK(a.trees.size() == 80);

  const Corpus c = build_corpus(a.raw);
  CHECK(c.records.size() == 80);
  CHECK(c.excluded.empty());
  std::map<std::string, std::set<Label>> by_group;
  std::array<int, 4> per_class{};
  for (const auto& r : c.records) {
    by_group[r.group_id].insert(r.label);
    per_class[static_cast<std::size_t>(r.label)] += 1;
    const RstTree& t = a.trees.at(r.id);
    validate_tree(t);
    CHECK(t.document == r.text);
    CHECK(t.edus.size() >= static_cast<std::size_t>(so.min_leaves));
    CHECK(t.edus.size() <= static_cast<std::size_t>(so.max_leaves));
    // EDUs partition the text.
    CHECK(t.edus.front().span_start == 0);
    CHECK(t.edus.back().span_end == t.document.size());
    for (std::size_t i = 1; i < t.edus.size(); ++i) CHECK(t.edus[i].span_start == t.edus[i - 1].span_end);
  }
  CHECK(by_group.size() == 20);
  for (const auto& [g, labels] : by_group) CHECK(labels.size() == 4);
  for (int n : per_class) CHECK(n == 20);

  SyntheticOptions again = so;
  const SyntheticCorpus b = generate_synthetic(again);
  for (std::size_t i = 0; i < a.raw.size(); ++i) CHECK(a.raw[i] == b.raw[i]);
  again.seed = 8;
  CHECK(generate_synthetic(again).raw[0] != a.raw[0]);
}

TEST_CASE("planted signatures dominate their class") {
  const auto& sig = synthetic_signatures();
  std::set<Relation> used;
  for (const auto& s : sig)
    for (Relation r : s) CHECK(used.insert(r).second);  // disjoint
  for (Relation r : synthetic_shared_relations()) CHECK(used.count(r) == 0);

  SyntheticOptions so;
  so.groups = 50;
  const SyntheticCorpus syn = generate_synthetic(so);
  const Corpus c = build_corpus(syn.raw);
  std::array<double, 4> own{}, total{};
  for (const auto& r : c.records) {
    const auto counts = relation_frequency_vector(syn.trees.at(r.id));
    const auto k = static_cast<std::size_t>(r.label);
    for (Relation rel : sig[k]) own[k] += counts[static_cast<std::size_t>(rel)];
    for (double v : counts) total[k] += v;
  }
  // Signature mass 0.8 with the right-branching root excluded still leaves a clear majority.
  for (std::size_t k = 0; k < 4; ++k) CHECK(own[k] / total[k] > 0.6);
}
