#include "race/analysis.hpp"

#include <cmath>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>

#include "race/common.hpp"

namespace race {

using nlohmann::json;

namespace {

constexpr std::size_t kClasses = 4;

std::string display(Label l) {
  switch (l) {
    case Label::HumanWritten: return "Human-Written";
    case Label::LLMPolished: return "LLM-Polished";
    case Label::LLMGenerated: return "LLM-Generated";
    case Label::Humanized: return "Humanized";
  }
  return "?";
}

}  // namespace

AnalysisDoc make_analysis_doc(const Record& record, const RstTree& tree) {
  return {record.id, record.group_id, record.label, relation_frequency_vector(tree)};
}

RelationProfile zscore_profile(const std::vector<AnalysisDoc>& docs) {
  RelationProfile p;
  std::vector<std::pair<std::size_t, RelationCounts>> rel;
  for (const auto& d : docs) {
    double total = 0.0;
    for (double c : d.counts) total += c;
    if (total <= 0.0) {
      ++p.excluded;
      continue;
    }
    RelationCounts f{};
    for (std::size_t j = 0; j < kNumRelations; ++j) f[j] = d.counts[j] / total;
    rel.emplace_back(static_cast<std::size_t>(d.label), f);
  }
  for (const auto& [k, f] : rel) {
    ++p.class_docs[k];
    for (std::size_t j = 0; j < kNumRelations; ++j) {
      p.class_mean[k][j] += f[j];
      p.mu[j] += f[j];
    }
  }
  for (std::size_t k = 0; k < kClasses; ++k) {
    if (p.class_docs[k] == 0) {
      fail(ErrorKind::EmptyClass, "no usable document labelled " + display(static_cast<Label>(k)));
    }
    for (double& v : p.class_mean[k]) v /= static_cast<double>(p.class_docs[k]);
  }
  const double n = static_cast<double>(rel.size());
  for (double& v : p.mu) v /= n;
  for (const auto& [k, f] : rel) {
    for (std::size_t j = 0; j < kNumRelations; ++j) p.sigma[j] += (f[j] - p.mu[j]) * (f[j] - p.mu[j]);
  }
  for (double& v : p.sigma) v = std::sqrt(v / n);
  for (std::size_t k = 0; k < kClasses; ++k) {
    for (std::size_t j = 0; j < kNumRelations; ++j) {
      p.z[k][j] = p.sigma[j] < kSigmaFloor ? 0.0 : (p.class_mean[k][j] - p.mu[j]) / p.sigma[j];
    }
  }
  return p;
}

double relation_cosine(const RelationCounts& a, const RelationCounts& b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t j = 0; j < kNumRelations; ++j) {
    dot += a[j] * b[j];
    na += a[j] * a[j];
    nb += b[j] * b[j];
  }
  if (na <= 0.0 || nb <= 0.0) return std::numeric_limits<double>::quiet_NaN();
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

CosineSummary pairwise_cosine(Label reference, Label target, const std::vector<AnalysisDoc>& docs) {
  CosineSummary s;
  s.reference = reference;
  s.target = target;
  // First document per (group, class); variants are unique per group in HART.
  std::map<std::string, std::array<const AnalysisDoc*, kClasses>> groups;
  for (const auto& d : docs) {
    auto& slot = groups[d.group_id][static_cast<std::size_t>(d.label)];
    if (!slot) slot = &d;
  }
  std::vector<double> values;
  for (const auto& [gid, members] : groups) {
    const AnalysisDoc* a = members[static_cast<std::size_t>(reference)];
    const AnalysisDoc* b = members[static_cast<std::size_t>(target)];
    if (!a || !b) {
      ++s.groups_missing_class;
      continue;
    }
    const double c = relation_cosine(a->counts, b->counts);
    if (std::isnan(c)) {
      ++s.zero_vector_pairs;
      continue;
    }
    values.push_back(c);
  }
  if (values.empty()) {
    fail(ErrorKind::NoPairs, "no " + display(reference) + " / " + display(target) + " pair shares a group");
  }
  s.pairs = values.size();
  for (double v : values) s.mean += v;
  s.mean /= static_cast<double>(values.size());
  for (double v : values) s.std += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(s.std / static_cast<double>(values.size()));
  return s;
}

std::vector<std::pair<Label, Label>> similarity_table_pairs() {
  using L = Label;
  return {{L::HumanWritten, L::LLMPolished},  {L::HumanWritten, L::LLMGenerated}, {L::HumanWritten, L::Humanized},
          {L::LLMGenerated, L::HumanWritten}, {L::LLMGenerated, L::LLMPolished},  {L::LLMGenerated, L::Humanized}};
}

std::string radar_tsv(const RelationProfile& p) {
  std::ostringstream os;
  os << "class";
  for (Relation r : all_relations()) os << '\t' << relation_name(r);
  os << '\n' << std::setprecision(10);
  for (std::size_t k = 0; k < kClasses; ++k) {
    os << display(static_cast<Label>(k));
    for (double v : p.z[k]) os << '\t' << v;
    os << '\n';
  }
  return os.str();
}

json profile_json(const RelationProfile& p) {
  json classes = json::array();
  for (std::size_t k = 0; k < kClasses; ++k) {
    json z = json::object();
    json mean = json::object();
    for (Relation r : all_relations()) {
      const auto j = static_cast<std::size_t>(r);
      z[std::string(relation_name(r))] = p.z[k][j];
      mean[std::string(relation_name(r))] = p.class_mean[k][j];
    }
    classes.push_back({{"class", display(static_cast<Label>(k))}, {"documents", p.class_docs[k]}, {"z", z},
                       {"mean_relative_frequency", mean}});
  }
  json mu = json::object();
  json sigma = json::object();
  for (Relation r : all_relations()) {
    mu[std::string(relation_name(r))] = p.mu[static_cast<std::size_t>(r)];
    sigma[std::string(relation_name(r))] = p.sigma[static_cast<std::size_t>(r)];
  }
  return {{"classes", classes}, {"mu", mu}, {"sigma", sigma}, {"excluded_no_internals", p.excluded}};
}

std::string format_similarity_table(const std::vector<CosineSummary>& rows) {
  std::ostringstream os;
  os << std::left << std::setw(16) << "Reference" << std::setw(16) << "Target" << std::setw(8) << "Mean"
     << std::setw(8) << "Std" << "Pairs\n";
  for (const auto& r : rows) {
    os << std::setw(16) << display(r.reference) << std::setw(16) << display(r.target) << std::fixed
       << std::setprecision(2) << std::setw(8) << r.mean << std::setw(8) << r.std << r.pairs;
    if (r.groups_missing_class || r.zero_vector_pairs) {
      os << " (skipped: " << r.groups_missing_class << " incomplete groups, " << r.zero_vector_pairs
         << " zero vectors)";
    }
    os << '\n';
  }
  return os.str();
}

json similarity_json(const std::vector<CosineSummary>& rows) {
  json out = json::array();
  for (const auto& r : rows) {
    out.push_back({{"reference", display(r.reference)},
                   {"target", display(r.target)},
                   {"mean", r.mean},
                   {"std", r.std},
                   {"pairs", r.pairs},
                   {"groups_missing_class", r.groups_missing_class},
                   {"zero_vector_pairs", r.zero_vector_pairs}});
  }
  return out;
}

}  // namespace race
