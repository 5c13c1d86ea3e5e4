#pragma once

// Joint training objective: supervised contrastive loss on L2-normalized root
// embeddings plus cross-entropy on the class probabilities.

#include <vector>

#include <Eigen/Dense>

namespace race {

struct Batch {
  Eigen::MatrixXd embeddings;  // N x hidden, before normalization
  Eigen::MatrixXd probs;       // N x C
  std::vector<int> labels;
};

inline constexpr double kProbabilityFloor = 1e-12;
inline constexpr double kNormFloor = 1e-12;

/// Rows scaled to unit length (rows shorter than kNormFloor divided by the
/// floor instead).
Eigen::MatrixXd l2_normalize_rows(const Eigen::MatrixXd& x);

/// Mean over anchors that have at least one positive of
///   -1/|P(i)| sum_{p in P(i)} log( exp(z_i.z_p/t) / sum_{a != i} exp(z_i.z_a/t) ).
/// Anchors without positives are skipped; a batch with none returns 0.
/// Throws BatchTooSmall for N < 2.
double supcon_loss(const Eigen::MatrixXd& embeddings, const std::vector<int>& labels,
                   double temperature);
double supcon_loss(const Batch& batch, double temperature);

/// Mean of -log p(true class), probabilities clamped at kProbabilityFloor.
double ce_loss(const Eigen::MatrixXd& probs, const std::vector<int>& labels);
double ce_loss(const Batch& batch);

/// contrastive_weight * L_con + L_ce (the weight is 1 unless ablating).
double total_loss(const Batch& batch, double temperature, double contrastive_weight = 1.0);

struct LossGradients {
  double contrastive = 0.0;
  double cross_entropy = 0.0;
  double total = 0.0;
  Eigen::MatrixXd d_embeddings;  // w.r.t. the unnormalized embeddings
  Eigen::MatrixXd d_logits;      // w.r.t. the logits feeding the softmax
};

/// Loss value and its gradients, with cross-entropy differentiated through
/// the softmax of `logits`.
LossGradients total_loss_with_grad(const Eigen::MatrixXd& embeddings, const Eigen::MatrixXd& logits,
                                   const std::vector<int>& labels, double temperature,
                                   double contrastive_weight = 1.0);

}  // namespace race
