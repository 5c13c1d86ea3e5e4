#include <doctest.h>

#include <cmath>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "race/analysis.hpp"

using namespace race;
using fixture::kind_of;

namespace {

constexpr std::size_t idx(Relation r) { return static_cast<std::size_t>(r); }

AnalysisDoc doc(std::string id, std::string group, Label label, RelationCounts counts) {
  return {std::move(id), std::move(group), label, counts};
}

RelationCounts only(Relation r, double n) {
  RelationCounts c{};
  c[idx(r)] = n;
  return c;
}

RelationCounts random_counts(Rng& rng) {
  RelationCounts c{};
  for (double& v : c) v = static_cast<double>(rng.uniform_index(5));
  c[rng.uniform_index(kNumRelations)] += 1;  // at least one internal node
  return c;
}

}  // namespace

TEST_CASE("identical class distributions give zero Z") {
  std::vector<AnalysisDoc> docs;
  Rng rng(1);
  for (int g = 0; g < 5; ++g) {
    const RelationCounts c = random_counts(rng);
    for (int l = 0; l < 4; ++l) docs.push_back(doc("d" + std::to_string(g) + std::to_string(l), "g", static_cast<Label>(l), c));
  }
  const RelationProfile p = zscore_profile(docs);
  for (const auto& row : p.z)
    for (double v : row) CHECK(std::abs(v) < 1e-12);
}

TEST_CASE("an Elaboration-only class is over-expressed for Elaboration") {
  std::vector<AnalysisDoc> docs;
  for (int i = 0; i < 3; ++i) {
    docs.push_back(doc("g" + std::to_string(i), "x", Label::LLMGenerated, only(Relation::Elaboration, 4)));
    for (Label l : {Label::HumanWritten, Label::LLMPolished, Label::Humanized}) {
      docs.push_back(doc("o" + std::to_string(i) + std::to_string(static_cast<int>(l)), "x", l, only(Relation::Contrast, 3)));
    }
  }
  const RelationProfile p = zscore_profile(docs);
  const double gen = p.z[static_cast<int>(Label::LLMGenerated)][idx(Relation::Elaboration)];
  CHECK(gen > 0);
  for (int l = 0; l < 4; ++l) {
    if (l != static_cast<int>(Label::LLMGenerated)) CHECK(p.z[l][idx(Relation::Elaboration)] < gen);
  }
  // A relation nobody uses has zero spread and therefore zero Z.
  CHECK(p.sigma[idx(Relation::Joint)] == 0.0);
  for (int l = 0; l < 4; ++l) CHECK(p.z[l][idx(Relation::Joint)] == 0.0);
}

TEST_CASE("Z profile matches a direct computation on a planted corpus") {
  Rng rng(2);
  std::vector<AnalysisDoc> docs;
  for (int i = 0; i < 40; ++i) {
    const auto label = static_cast<Label>(i % 4);
    RelationCounts c = random_counts(rng);
    c[idx(Relation::Elaboration) + static_cast<std::size_t>(label)] += 6;  // planted per class
    docs.push_back(doc("d" + std::to_string(i), "g" + std::to_string(i / 4), label, c));
  }
  RelationCounts empty{};
  docs.push_back(doc("empty", "none", Label::HumanWritten, empty));

  const RelationProfile p = zscore_profile(docs);
  CHECK(p.excluded == 1);
  for (int l = 0; l < 4; ++l) CHECK(p.class_docs[l] == 10);

  // Spreadsheet-style: relative frequencies, column mean and population std
  // over the 40 documents, class means, then Z.
  std::vector<std::array<double, kNumRelations>> rel;
  for (int i = 0; i < 40; ++i) {
    double total = 0;
    for (double v : docs[i].counts) total += v;
    std::array<double, kNumRelations> r{};
    for (std::size_t j = 0; j < kNumRelations; ++j) r[j] = docs[i].counts[j] / total;
    rel.push_back(r);
  }
  for (std::size_t j = 0; j < kNumRelations; ++j) {
    double mu = 0;
    for (const auto& r : rel) mu += r[j];
    mu /= 40;
    double var = 0;
    for (const auto& r : rel) var += (r[j] - mu) * (r[j] - mu);
    const double sigma = std::sqrt(var / 40);
    CHECK(std::abs(p.mu[j] - mu) < 1e-12);
    CHECK(std::abs(p.sigma[j] - sigma) < 1e-12);
    for (int l = 0; l < 4; ++l) {
      double mean = 0;
      for (int i = l; i < 40; i += 4) mean += rel[i][j];
      mean /= 10;
      CHECK(std::abs(p.class_mean[l][j] - mean) < 1e-12);
      CHECK(std::abs(p.z[l][j] - (mean - mu) / sigma) < 1e-10);
    }
  }
  // Balanced classes: every Z column sums to zero.
  for (std::size_t j = 0; j < kNumRelations; ++j) {
    double s = 0;
    for (int l = 0; l < 4; ++l) s += p.z[l][j];
    CHECK(std::abs(s) < 1e-10);
  }
  CHECK(p.z[static_cast<int>(Label::LLMPolished)][idx(Relation::Elaboration) + 1] > 0);

  const std::string tsv = radar_tsv(p);
  CHECK(std::count(tsv.begin(), tsv.end(), '\n') == 5);
  CHECK(profile_json(p).is_object());

  std::vector<AnalysisDoc> missing(docs.begin(), docs.begin() + 3);
  CHECK(kind_of([&] { zscore_profile(missing); }) == ErrorKind::EmptyClass);
}

TEST_CASE("relation cosine") {
  RelationCounts a{};
  a[0] = 5;
  a[1] = 2;
  CHECK(relation_cosine(a, a) == doctest::Approx(1.0));
  CHECK(relation_cosine(only(Relation::Joint, 2), only(Relation::Contrast, 7)) == 0.0);
  CHECK(std::isnan(relation_cosine(a, RelationCounts{})));
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const RelationCounts x = random_counts(rng);
    const RelationCounts y = random_counts(rng);
    RelationCounts scaled = x;
    for (double& v : scaled) v *= 3.5;
    CHECK(relation_cosine(scaled, y) == doctest::Approx(relation_cosine(x, y)).epsilon(1e-12));
    CHECK(relation_cosine(x, y) == relation_cosine(y, x));
  }
}

TEST_CASE("group-paired cosine similarity") {
  std::vector<AnalysisDoc> docs;
  Rng rng(4);
  std::vector<double> want;
  for (int g = 0; g < 12; ++g) {
    const std::string gid = "news/" + std::to_string(g);
    const RelationCounts h = random_counts(rng);
    const RelationCounts p = g % 3 == 0 ? h : random_counts(rng);
    docs.push_back(doc(gid, gid, Label::HumanWritten, h));
    docs.push_back(doc("rep/" + gid, gid, Label::LLMPolished, p));
    want.push_back(relation_cosine(h, p));
  }
  docs.push_back(doc("news/orphan", "news/orphan", Label::HumanWritten, only(Relation::Joint, 1)));
  docs.push_back(doc("zero", "news/z", Label::HumanWritten, RelationCounts{}));
  docs.push_back(doc("rep/zero", "news/z", Label::LLMPolished, only(Relation::Joint, 1)));

  const CosineSummary s = pairwise_cosine(Label::HumanWritten, Label::LLMPolished, docs);
  CHECK(s.pairs == 12);
  CHECK(s.groups_missing_class == 1);
  CHECK(s.zero_vector_pairs == 1);
  double mean = 0;
  for (double v : want) mean += v / 12;
  double var = 0;
  for (double v : want) var += (v - mean) * (v - mean) / 12;
  CHECK(s.mean == doctest::Approx(mean).epsilon(1e-12));
  CHECK(s.std == doctest::Approx(std::sqrt(var)).epsilon(1e-9));

  const CosineSummary back = pairwise_cosine(Label::LLMPolished, Label::HumanWritten, docs);
  CHECK(back.mean == doctest::Approx(s.mean).epsilon(1e-12));
  CHECK(back.pairs == s.pairs);

  CHECK(kind_of([&] { pairwise_cosine(Label::HumanWritten, Label::Humanized, docs); }) == ErrorKind::NoPairs);

  const auto rows = similarity_table_pairs();
  CHECK(rows.size() == 6);
  CHECK(rows.front() == std::pair{Label::HumanWritten, Label::LLMPolished});
  const std::string table = format_similarity_table({s, back});
  CHECK(table.find("Human-Written") != std::string::npos);
  CHECK(similarity_json({s}).is_array());
}

TEST_CASE("analysis documents from records and trees") {
  Record r;
  r.id = "rep/news/1";
  r.group_id = "news/1";
  r.label = Label::LLMPolished;
  const RstTree t = fallback_segment("One. Two. Three.", r.id);
  const AnalysisDoc d = make_analysis_doc(r, t);
  CHECK(d.group_id == "news/1");
  CHECK(d.counts[idx(Relation::Joint)] == 2);
}
