#pragma once

// Mini-batch training with validation-based checkpoint selection, evaluation
// of a trained model on a split, and aggregation across seeds.

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "race/embedder.hpp"
#include "race/graph.hpp"
#include "race/metrics.hpp"
#include "race/model.hpp"
#include "race/rst.hpp"

namespace race {

/// A document reduced to what the network consumes.
struct Example {
  std::string doc_id;
  int label = 0;
  std::string domain;
  LogicGraph graph;
  Matrix contents;  // num_nodes x plm_dim
  std::size_t num_tokens = 0;
  std::size_t borrowed_edus = 0;
};

Example make_example(std::string doc_id, int label, std::string domain, const RstTree& tree,
                     const TokenEmbeddingMatrix& emb, bool borrow_empty = true);

struct TrainConfig {
  int epochs = 30;
  int batch_size = 32;
  double learning_rate = 1e-3;
  double encoder_learning_rate = 1e-5;  // only meaningful with a trainable encoder layer
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double contrastive_weight = 1.0;
  std::vector<std::uint64_t> seeds{42};
  std::string split = "stratified";  // stratified | group | lodo:<domain>
  std::string encoder = "mock";      // mock | real
  double selection_fpr = 0.01;

  /// Throws ConfigMismatch for batch_size < 2, no seeds, non-positive epochs
  /// or learning rate.
  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

/// Decoupled weight decay Adam over every tensor of ModelParams.
class AdamW {
 public:
  AdamW(const ModelConfig& config, double lr, double weight_decay, double beta1 = 0.9, double beta2 = 0.999,
        double eps = 1e-8);
  void step(ModelParams& params, const ModelParams& grads);
  long steps() const { return t_; }

 private:
  ModelParams m_;
  ModelParams v_;
  double lr_, wd_, b1_, b2_, eps_;
  long t_ = 0;
};

/// Label-stratified batches: each class is shuffled, classes are interleaved
/// in proportion to their size, and the sequence is cut every `batch_size`.
/// A trailing batch of one is merged into its predecessor.
std::vector<std::vector<std::size_t>> make_batches(const std::vector<int>& labels, int batch_size, Rng& rng);

struct StepResult {
  double total = 0.0;
  double contrastive = 0.0;
  double cross_entropy = 0.0;
};

/// One optimizer update on the given examples. Throws NonFiniteLoss.
StepResult train_step(const std::vector<const Example*>& batch, ModelParams& params, const ModelConfig& config,
                      AdamW& optimizer, double contrastive_weight, DropoutContext dropout);

/// Loss and gradients without an update (used by tests and the descent check).
std::pair<StepResult, ModelParams> loss_and_grad(const std::vector<const Example*>& batch,
                                                 const ModelParams& params, const ModelConfig& config,
                                                 double contrastive_weight, DropoutContext dropout = {});

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double train_contrastive = 0.0;
  double train_ce = 0.0;
  MetricValue val_macro_tpr;
  MetricValue val_macro_auroc;
  bool selected = false;

  nlohmann::json to_json() const;
};

struct TrainResult {
  Checkpoint checkpoint;  // the selected epoch
  std::vector<EpochRecord> history;
  int best_epoch = 0;
};

/// Trains one seed. With an empty validation set the last epoch is kept.
TrainResult train(const std::vector<Example>& train_set, const std::vector<Example>& val_set,
                  const ModelConfig& model_config, const TrainConfig& train_config, std::uint64_t seed,
                  const EncoderIdentity& encoder,
                  const std::function<void(const EpochRecord&)>& on_epoch = {});

struct Evaluation {
  std::vector<std::string> doc_ids;
  ScoreTable table;
  Matrix z;
  MetricsReport report;
};

/// Scores every example in evaluation mode and builds the full report.
Evaluation evaluate(const ModelParams& params, const ModelConfig& config, const std::vector<Example>& examples,
                    std::size_t chunk = 64);

/// Same, after checking that the checkpoint was trained on features from
/// `encoder`. Throws ConfigMismatch otherwise.
Evaluation evaluate(const Checkpoint& checkpoint, const EncoderIdentity& encoder,
                    const std::vector<Example>& examples);

struct AggregateCell {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation
  std::size_t runs = 0;
};

/// Elementwise mean and sample std over reports with identical keys. Throws
/// SchemaMismatch when keys differ or fewer than two reports are given.
std::map<std::string, AggregateCell> aggregate_seeds(const std::vector<std::map<std::string, double>>& reports);
std::map<std::string, AggregateCell> aggregate_seeds(const std::vector<MetricsReport>& reports);

nlohmann::json aggregate_json(const std::map<std::string, AggregateCell>& cells);

}  // namespace race
