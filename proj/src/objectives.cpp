#include "race/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "race/common.hpp"
#include "race/model.hpp"

namespace race {

namespace {

void check_labels(const std::vector<int>& labels, Eigen::Index rows) {
  if (static_cast<Eigen::Index>(labels.size()) != rows) {
    fail(ErrorKind::DimensionMismatch, "one label per row is required");
  }
}

struct SupConResult {
  double loss = 0.0;
  Eigen::MatrixXd d_unit;  // gradient w.r.t. the normalized rows
};

SupConResult supcon_on_unit(const Eigen::MatrixXd& u, const std::vector<int>& labels, double temperature,
                            bool want_grad) {
  const Eigen::Index n = u.rows();
  if (n < 2) fail(ErrorKind::BatchTooSmall, "supervised contrastive loss needs at least 2 samples");
  if (!(temperature > 0.0)) fail(ErrorKind::DimensionMismatch, "temperature must be positive");
  const Eigen::MatrixXd sim = (u * u.transpose()) / temperature;

  SupConResult out;
  if (want_grad) out.d_unit = Eigen::MatrixXd::Zero(n, u.cols());
  Eigen::MatrixXd d_sim = Eigen::MatrixXd::Zero(n, n);
  int anchors = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    int positives = 0;
    for (Eigen::Index a = 0; a < n; ++a) positives += (a != i && labels[a] == labels[i]);
    if (positives == 0) continue;
    ++anchors;
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index a = 0; a < n; ++a) {
      if (a != i) mx = std::max(mx, sim(i, a));
    }
    double denom = 0.0;
    for (Eigen::Index a = 0; a < n; ++a) {
      if (a != i) denom += std::exp(sim(i, a) - mx);
    }
    const double log_denom = mx + std::log(denom);
    double anchor_loss = 0.0;
    for (Eigen::Index p = 0; p < n; ++p) {
      if (p != i && labels[p] == labels[i]) anchor_loss -= sim(i, p) - log_denom;
    }
    out.loss += anchor_loss / positives;
    if (want_grad) {
      for (Eigen::Index a = 0; a < n; ++a) {
        if (a == i) continue;
        const double softmax = std::exp(sim(i, a) - log_denom);
        const double target = labels[a] == labels[i] ? 1.0 / positives : 0.0;
        d_sim(i, a) = softmax - target;
      }
    }
  }
  if (anchors == 0) {
    out.loss = 0.0;
    return out;
  }
  out.loss /= anchors;
  if (want_grad) {
    d_sim /= static_cast<double>(anchors);
    // sim = u u^T / t, so d u = (d_sim + d_sim^T) u / t.
    out.d_unit = ((d_sim + d_sim.transpose()) * u) / temperature;
  }
  return out;
}

}  // namespace

Eigen::MatrixXd l2_normalize_rows(const Eigen::MatrixXd& x) {
  Eigen::MatrixXd out = x;
  for (Eigen::Index i = 0; i < x.rows(); ++i) out.row(i) /= std::max(x.row(i).norm(), kNormFloor);
  return out;
}

double supcon_loss(const Eigen::MatrixXd& embeddings, const std::vector<int>& labels, double temperature) {
  check_labels(labels, embeddings.rows());
  return supcon_on_unit(l2_normalize_rows(embeddings), labels, temperature, false).loss;
}

double supcon_loss(const Batch& batch, double temperature) {
  return supcon_loss(batch.embeddings, batch.labels, temperature);
}

double ce_loss(const Eigen::MatrixXd& probs, const std::vector<int>& labels) {
  check_labels(labels, probs.rows());
  if (probs.rows() == 0) fail(ErrorKind::BatchTooSmall, "cross-entropy over an empty batch");
  double sum = 0.0;
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    const int y = labels[i];
    if (y < 0 || y >= probs.cols()) fail(ErrorKind::DimensionMismatch, "label outside the class range");
    sum -= std::log(std::max(probs(i, y), kProbabilityFloor));
  }
  return sum / static_cast<double>(probs.rows());
}

double ce_loss(const Batch& batch) { return ce_loss(batch.probs, batch.labels); }

double total_loss(const Batch& batch, double temperature, double contrastive_weight) {
  return contrastive_weight * supcon_loss(batch, temperature) + ce_loss(batch);
}

LossGradients total_loss_with_grad(const Eigen::MatrixXd& embeddings, const Eigen::MatrixXd& logits,
                                   const std::vector<int>& labels, double temperature,
                                   double contrastive_weight) {
  check_labels(labels, embeddings.rows());
  check_labels(labels, logits.rows());
  LossGradients out;
  const Eigen::Index n = embeddings.rows();

  const Eigen::MatrixXd unit = l2_normalize_rows(embeddings);
  const SupConResult con = supcon_on_unit(unit, labels, temperature, true);
  out.contrastive = con.loss;
  out.d_embeddings = Eigen::MatrixXd::Zero(n, embeddings.cols());
  if (con.d_unit.size() != 0 && contrastive_weight != 0.0) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const double norm = embeddings.row(i).norm();
      const Eigen::RowVectorXd du = contrastive_weight * con.d_unit.row(i);
      if (norm > kNormFloor) {
        out.d_embeddings.row(i) = (du - unit.row(i) * unit.row(i).dot(du)) / norm;
      } else {
        out.d_embeddings.row(i) = du / kNormFloor;
      }
    }
  }

  const Eigen::MatrixXd probs = softmax_rows(logits);
  out.cross_entropy = ce_loss(probs, labels);
  out.d_logits = probs;
  for (Eigen::Index i = 0; i < n; ++i) out.d_logits(i, labels[i]) -= 1.0;
  out.d_logits /= static_cast<double>(n);

  out.total = contrastive_weight * out.contrastive + out.cross_entropy;
  return out;
}

}  // namespace race
