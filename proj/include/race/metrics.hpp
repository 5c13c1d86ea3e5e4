#pragma once

// Threshold-free and fixed-FPR evaluation, clustering validity indices and
// length-bucketed analysis for the four-class detector.

#include <array>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace race {

struct ScoreTable {
  Eigen::MatrixXd probs;             // N x C
  std::vector<int> labels;           // N
  std::vector<std::size_t> lengths;  // N token counts, optional
  std::vector<std::string> domains;  // N tags, optional

  int num_classes() const { return static_cast<int>(probs.cols()); }
  std::size_t size() const { return labels.size(); }
  ScoreTable subset(const std::vector<std::size_t>& rows) const;
};

/// One-vs-rest AUROC by the rank statistic with midranks for ties, i.e.
/// P(pos > neg) + 0.5 P(pos == neg). Throws DegenerateClass when either side
/// is empty.
double binary_auroc(std::span<const double> scores, std::span<const bool> positive);

double class_auroc(const ScoreTable& table, int cls);
double macro_auroc(const ScoreTable& table);

struct ThresholdResult {
  double tpr = 0.0;
  double fpr = 0.0;
  double threshold = std::numeric_limits<double>::infinity();  // +inf: nothing positive
};

/// Smallest threshold among the observed scores and +inf whose false-positive
/// rate (score >= threshold counts as positive) does not exceed `fpr_cap`,
/// and the true-positive rate there. No ROC interpolation.
ThresholdResult binary_tpr_at_fpr(std::span<const double> scores, std::span<const bool> positive,
                                  double fpr_cap);

ThresholdResult tpr_at_fpr(const ScoreTable& table, int cls, double fpr_cap = 0.01);
double macro_tpr_at_fpr(const ScoreTable& table, double fpr_cap = 0.01);

struct ClusterIndices {
  double davies_bouldin = 0.0;
  double calinski_harabasz = 0.0;
};

/// Davies-Bouldin (Euclidean, mean distance to centroid as scatter) and
/// Calinski-Harabasz over class-labelled embeddings. Throws DegenerateCluster
/// with fewer than two classes, a class with fewer than two points,
/// coincident centroids, or zero within-class scatter.
ClusterIndices clustering_indices(const Eigen::MatrixXd& embeddings, const std::vector<int>& labels);

struct BucketResult {
  std::size_t lo = 0;
  std::size_t hi = std::numeric_limits<std::size_t>::max();  // exclusive
  std::size_t count = 0;
  std::optional<double> macro_tpr;
  std::string note;  // why the bucket is absent
};

/// Buckets [edges[i], edges[i+1]) plus [edges.back(), inf). Buckets that are
/// empty or lack a positive/negative for some class are reported without a
/// value.
std::vector<BucketResult> length_bucketed_tpr(const ScoreTable& table, const std::vector<std::size_t>& edges,
                                              double fpr_cap = 0.01);

inline const std::vector<std::size_t>& default_length_edges() {
  static const std::vector<std::size_t> edges{0, 100, 200, 300, 400, 500, 600};
  return edges;
}

/// A metric that may be undefined on the given data.
struct MetricValue {
  std::optional<double> value;
  std::string error;
};

struct MetricsReport {
  std::size_t num_samples = 0;
  std::vector<std::size_t> class_counts;
  MetricValue macro_auroc;
  std::vector<MetricValue> auroc;          // per class
  std::vector<MetricValue> tpr_at_1;       // per class, cap 1%
  std::vector<MetricValue> tpr_at_5;       // per class, cap 5%
  std::vector<std::optional<double>> threshold_at_1;
  MetricValue macro_tpr_at_1;
  MetricValue macro_tpr_at_5;
  MetricValue davies_bouldin;
  MetricValue calinski_harabasz;
  std::vector<BucketResult> buckets;

  nlohmann::json to_json() const;
  /// Defined numeric cells keyed by name; used for multi-seed aggregation.
  std::map<std::string, double> flatten() const;
};

/// Computes every metric the report carries. `embeddings` (N x d) feeds the
/// clustering indices when given.
MetricsReport build_report(const ScoreTable& table, const Eigen::MatrixXd* embeddings = nullptr,
                           const std::vector<std::size_t>& length_edges = default_length_edges());

/// Human-readable summary: AUROC then TPR@1%FPR per class and Avg, in percent.
std::string format_report(const MetricsReport& report);

}  // namespace race
