#include "race/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <memory>
#include <numeric>
#include <sstream>

#include "race/common.hpp"
#include "race/dataset.hpp"

namespace race {

using nlohmann::json;

namespace {

std::unique_ptr<bool[]> one_vs_rest(const ScoreTable& table, int cls) {
  auto pos = std::make_unique<bool[]>(table.size());
  for (std::size_t i = 0; i < table.size(); ++i) pos[i] = table.labels[i] == cls;
  return pos;
}

std::vector<double> column(const ScoreTable& table, int cls) {
  if (cls < 0 || cls >= table.num_classes()) {
    fail(ErrorKind::DimensionMismatch, "class " + std::to_string(cls) + " outside the score table");
  }
  if (static_cast<Eigen::Index>(table.labels.size()) != table.probs.rows()) {
    fail(ErrorKind::DimensionMismatch, "score table needs one label per row");
  }
  std::vector<double> out(table.size());
  for (std::size_t i = 0; i < table.size(); ++i) out[i] = table.probs(static_cast<Eigen::Index>(i), cls);
  return out;
}

void require_both(std::size_t pos, std::size_t neg, const std::string& what) {
  if (pos == 0 || neg == 0) {
    fail(ErrorKind::DegenerateClass, what + " needs positives and negatives (have " + std::to_string(pos) +
                                         " positive, " + std::to_string(neg) + " negative)");
  }
}

template <typename F>
MetricValue guarded(F&& f) {
  MetricValue m;
  try {
    m.value = f();
  } catch (const Error& e) {
    m.error = std::string(error_kind_name(e.kind())) + ": " + e.what();
  }
  return m;
}

json metric_json(const MetricValue& m) {
  if (m.value) return *m.value;
  return {{"error", m.error}};
}

std::string label_display(int c) {
  static const char* kNames[] = {"Human-Written", "LLM-Polished", "LLM-Generated", "Humanized"};
  if (c >= 0 && c < 4) return kNames[c];
  return "class" + std::to_string(c);
}

}  // namespace

ScoreTable ScoreTable::subset(const std::vector<std::size_t>& rows) const {
  ScoreTable out;
  out.probs.resize(static_cast<Eigen::Index>(rows.size()), probs.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.probs.row(static_cast<Eigen::Index>(i)) = probs.row(static_cast<Eigen::Index>(rows[i]));
    out.labels.push_back(labels[rows[i]]);
    if (!lengths.empty()) out.lengths.push_back(lengths[rows[i]]);
    if (!domains.empty()) out.domains.push_back(domains[rows[i]]);
  }
  return out;
}

double binary_auroc(std::span<const double> scores, std::span<const bool> positive) {
  const std::size_t n = scores.size();
  if (positive.size() != n) fail(ErrorKind::DimensionMismatch, "scores and targets differ in length");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Twice the midrank keeps every rank an exact integer.
  double twice_rank_sum = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double twice_midrank = static_cast<double>(i + 1 + j);  // ranks i+1..j
    for (std::size_t k = i; k < j; ++k) {
      if (positive[order[k]]) {
        twice_rank_sum += twice_midrank;
        ++n_pos;
      }
    }
    i = j;
  }
  const std::size_t n_neg = n - n_pos;
  require_both(n_pos, n_neg, "AUROC");
  const double np = static_cast<double>(n_pos);
  const double u_twice = twice_rank_sum - np * (np + 1.0);
  return u_twice / (2.0 * np * static_cast<double>(n_neg));
}

double class_auroc(const ScoreTable& table, int cls) {
  const auto scores = column(table, cls);
  const auto pos = one_vs_rest(table, cls);
  return binary_auroc(scores, std::span<const bool>(pos.get(), table.size()));
}

double macro_auroc(const ScoreTable& table) {
  double sum = 0.0;
  for (int c = 0; c < table.num_classes(); ++c) sum += class_auroc(table, c);
  return sum / table.num_classes();
}

ThresholdResult binary_tpr_at_fpr(std::span<const double> scores, std::span<const bool> positive, double fpr_cap) {
  if (positive.size() != scores.size()) fail(ErrorKind::DimensionMismatch, "scores and targets differ in length");
  std::vector<double> pos_scores;
  std::vector<double> neg_scores;
  for (std::size_t i = 0; i < scores.size(); ++i) (positive[i] ? pos_scores : neg_scores).push_back(scores[i]);
  require_both(pos_scores.size(), neg_scores.size(), "TPR@FPR");
  std::sort(pos_scores.begin(), pos_scores.end());
  std::sort(neg_scores.begin(), neg_scores.end());

  auto count_at_least = [](const std::vector<double>& sorted, double t) {
    return static_cast<double>(sorted.end() - std::lower_bound(sorted.begin(), sorted.end(), t));
  };
  std::vector<double> candidates(scores.begin(), scores.end());
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
  candidates.push_back(std::numeric_limits<double>::infinity());

  const double n_pos = static_cast<double>(pos_scores.size());
  const double n_neg = static_cast<double>(neg_scores.size());
  // FPR is non-increasing in the threshold, so the first feasible candidate
  // in ascending order is the minimum; +inf is always feasible.
  for (double t : candidates) {
    const double fpr = count_at_least(neg_scores, t) / n_neg;
    if (fpr <= fpr_cap) return {count_at_least(pos_scores, t) / n_pos, fpr, t};
  }
  return {0.0, 0.0, std::numeric_limits<double>::infinity()};
}

ThresholdResult tpr_at_fpr(const ScoreTable& table, int cls, double fpr_cap) {
  const auto scores = column(table, cls);
  const auto pos = one_vs_rest(table, cls);
  return binary_tpr_at_fpr(scores, std::span<const bool>(pos.get(), table.size()), fpr_cap);
}

double macro_tpr_at_fpr(const ScoreTable& table, double fpr_cap) {
  double sum = 0.0;
  for (int c = 0; c < table.num_classes(); ++c) sum += tpr_at_fpr(table, c, fpr_cap).tpr;
  return sum / table.num_classes();
}

ClusterIndices clustering_indices(const Eigen::MatrixXd& x, const std::vector<int>& labels) {
  if (static_cast<Eigen::Index>(labels.size()) != x.rows()) {
    fail(ErrorKind::DimensionMismatch, "one label per embedding row is required");
  }
  std::map<int, std::vector<Eigen::Index>> members;
  for (Eigen::Index i = 0; i < x.rows(); ++i) members[labels[i]].push_back(i);
  if (members.size() < 2) fail(ErrorKind::DegenerateCluster, "clustering indices need at least two classes");
  const std::size_t k = members.size();
  const double n = static_cast<double>(x.rows());

  std::vector<Eigen::RowVectorXd> centroids;
  std::vector<double> scatter;
  std::vector<double> sizes;
  double within = 0.0;
  for (const auto& [label, rows] : members) {
    if (rows.size() < 2) {
      fail(ErrorKind::DegenerateCluster, "class " + std::to_string(label) + " has fewer than two points");
    }
    Eigen::RowVectorXd c = Eigen::RowVectorXd::Zero(x.cols());
    for (auto r : rows) c += x.row(r);
    c /= static_cast<double>(rows.size());
    double dist = 0.0;
    for (auto r : rows) {
      dist += (x.row(r) - c).norm();
      within += (x.row(r) - c).squaredNorm();
    }
    centroids.push_back(c);
    scatter.push_back(dist / static_cast<double>(rows.size()));
    sizes.push_back(static_cast<double>(rows.size()));
  }
  const Eigen::RowVectorXd grand = x.colwise().mean();

  double db = 0.0;
  double between = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    double worst = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      if (i == j) continue;
      const double sep = (centroids[i] - centroids[j]).norm();
      if (sep < 1e-12) fail(ErrorKind::DegenerateCluster, "two class centroids coincide");
      worst = std::max(worst, (scatter[i] + scatter[j]) / sep);
    }
    db += worst;
    between += sizes[i] * (centroids[i] - grand).squaredNorm();
  }
  if (within < 1e-300) fail(ErrorKind::DegenerateCluster, "zero within-class scatter");
  const double ch = (between / static_cast<double>(k - 1)) / (within / (n - static_cast<double>(k)));
  return {db / static_cast<double>(k), ch};
}

std::vector<BucketResult> length_bucketed_tpr(const ScoreTable& table, const std::vector<std::size_t>& edges,
                                              double fpr_cap) {
  if (table.lengths.size() != table.size()) fail(ErrorKind::DataMissing, "length buckets need token lengths");
  if (edges.empty()) fail(ErrorKind::DimensionMismatch, "at least one bucket edge is required");
  std::vector<BucketResult> out;
  for (std::size_t b = 0; b < edges.size(); ++b) {
    BucketResult bucket;
    bucket.lo = edges[b];
    bucket.hi = b + 1 < edges.size() ? edges[b + 1] : std::numeric_limits<std::size_t>::max();
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < table.size(); ++i) {
      if (table.lengths[i] >= bucket.lo && table.lengths[i] < bucket.hi) rows.push_back(i);
    }
    bucket.count = rows.size();
    if (rows.empty()) {
      bucket.note = "empty";
    } else {
      try {
        bucket.macro_tpr = macro_tpr_at_fpr(table.subset(rows), fpr_cap);
      } catch (const Error& e) {
        bucket.note = std::string(error_kind_name(e.kind())) + ": " + e.what();
      }
    }
    out.push_back(std::move(bucket));
  }
  return out;
}

MetricsReport build_report(const ScoreTable& table, const Eigen::MatrixXd* embeddings,
                           const std::vector<std::size_t>& length_edges) {
  MetricsReport r;
  r.num_samples = table.size();
  const int C = table.num_classes();
  r.class_counts.assign(static_cast<std::size_t>(C), 0);
  for (int y : table.labels) {
    if (y >= 0 && y < C) ++r.class_counts[static_cast<std::size_t>(y)];
  }
  for (int c = 0; c < C; ++c) {
    r.auroc.push_back(guarded([&] { return class_auroc(table, c); }));
    std::optional<double> threshold;
    r.tpr_at_1.push_back(guarded([&] {
      const auto t = tpr_at_fpr(table, c, 0.01);
      threshold = t.threshold;
      return t.tpr;
    }));
    r.threshold_at_1.push_back(threshold);
    r.tpr_at_5.push_back(guarded([&] { return tpr_at_fpr(table, c, 0.05).tpr; }));
  }
  r.macro_auroc = guarded([&] { return macro_auroc(table); });
  r.macro_tpr_at_1 = guarded([&] { return macro_tpr_at_fpr(table, 0.01); });
  r.macro_tpr_at_5 = guarded([&] { return macro_tpr_at_fpr(table, 0.05); });
  if (embeddings) {
    MetricValue db;
    MetricValue ch;
    try {
      const auto idx = clustering_indices(*embeddings, table.labels);
      db.value = idx.davies_bouldin;
      ch.value = idx.calinski_harabasz;
    } catch (const Error& e) {
      db.error = ch.error = std::string(error_kind_name(e.kind())) + ": " + e.what();
    }
    r.davies_bouldin = db;
    r.calinski_harabasz = ch;
  } else {
    r.davies_bouldin.error = r.calinski_harabasz.error = "no embeddings supplied";
  }
  if (table.lengths.size() == table.size() && !table.lengths.empty()) {
    r.buckets = length_bucketed_tpr(table, length_edges, 0.01);
  }
  return r;
}

json MetricsReport::to_json() const {
  json per_class = json::array();
  for (std::size_t c = 0; c < auroc.size(); ++c) {
    json entry = {{"class", label_display(static_cast<int>(c))},
                  {"count", class_counts[c]},
                  {"auroc", metric_json(auroc[c])},
                  {"tpr_at_1fpr", metric_json(tpr_at_1[c])},
                  {"tpr_at_5fpr", metric_json(tpr_at_5[c])}};
    if (threshold_at_1[c]) {
      entry["threshold_at_1fpr"] =
          std::isinf(*threshold_at_1[c]) ? json("inf") : json(*threshold_at_1[c]);
    }
    per_class.push_back(std::move(entry));
  }
  json buckets_json = json::array();
  for (const auto& b : buckets) {
    json entry = {{"lo", b.lo}, {"count", b.count}};
    entry["hi"] = b.hi == std::numeric_limits<std::size_t>::max() ? json("inf") : json(b.hi);
    if (b.macro_tpr) {
      entry["macro_tpr_at_1fpr"] = *b.macro_tpr;
    } else {
      entry["absent"] = b.note;
    }
    buckets_json.push_back(std::move(entry));
  }
  return {{"num_samples", num_samples},
          {"macro_auroc", metric_json(macro_auroc)},
          {"macro_tpr_at_1fpr", metric_json(macro_tpr_at_1)},
          {"macro_tpr_at_5fpr", metric_json(macro_tpr_at_5)},
          {"per_class", per_class},
          {"davies_bouldin", metric_json(davies_bouldin)},
          {"calinski_harabasz", metric_json(calinski_harabasz)},
          {"length_buckets", buckets_json}};
}

std::map<std::string, double> MetricsReport::flatten() const {
  std::map<std::string, double> out;
  auto put = [&](const std::string& key, const MetricValue& m) {
    if (m.value) out[key] = *m.value;
  };
  put("macro_auroc", macro_auroc);
  put("macro_tpr_at_1fpr", macro_tpr_at_1);
  put("macro_tpr_at_5fpr", macro_tpr_at_5);
  for (std::size_t c = 0; c < auroc.size(); ++c) {
    const std::string name = label_display(static_cast<int>(c));
    put("auroc/" + name, auroc[c]);
    put("tpr_at_1fpr/" + name, tpr_at_1[c]);
    put("tpr_at_5fpr/" + name, tpr_at_5[c]);
  }
  put("davies_bouldin", davies_bouldin);
  put("calinski_harabasz", calinski_harabasz);
  return out;
}

std::string format_report(const MetricsReport& r) {
  std::ostringstream os;
  auto pct = [](const MetricValue& m) -> std::string {
    if (!m.value) return "n/a";
    std::ostringstream s;
    s << std::fixed << std::setprecision(2) << 100.0 * *m.value;
    return s.str();
  };
  os << std::left << std::setw(12) << "";
  for (std::size_t c = 0; c < r.auroc.size(); ++c) os << std::setw(15) << label_display(static_cast<int>(c));
  os << "Avg\n";
  auto row = [&](const char* name, const std::vector<MetricValue>& cells, const MetricValue& avg) {
    os << std::setw(12) << name;
    for (const auto& m : cells) os << std::setw(15) << pct(m);
    os << pct(avg) << '\n';
  };
  row("AUROC", r.auroc, r.macro_auroc);
  row("TPR@1%FPR", r.tpr_at_1, r.macro_tpr_at_1);
  os << "samples " << r.num_samples << "; macro TPR@5%FPR " << pct(r.macro_tpr_at_5);
  if (r.davies_bouldin.value) {
    os << "; DBI " << std::setprecision(4) << std::fixed << *r.davies_bouldin.value << "; CH "
       << std::setprecision(2) << *r.calinski_harabasz.value;
  }
  os << '\n';
  for (const auto& b : r.buckets) {
    os << "  tokens [" << b.lo << ", "
       << (b.hi == std::numeric_limits<std::size_t>::max() ? std::string("inf") : std::to_string(b.hi)) << ") n="
       << b.count << " ";
    if (b.macro_tpr) {
      os << std::fixed << std::setprecision(2) << 100.0 * *b.macro_tpr;
    } else {
      os << "absent (" << b.note << ")";
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace race
