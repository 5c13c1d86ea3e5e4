#pragma once

// The detection network: descendant span pooling and bottleneck projection
// for node features, relation-specific message passing with basis-decomposed
// weights, root readout and a two-layer classification head.
//
// Everything runs in double precision on Eigen matrices; rows are nodes (or
// documents) and weights multiply from the right (h W), matching the usual
// row-vector convention. Gradients are derived by hand in backward_batch.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "race/common.hpp"
#include "race/embedder.hpp"
#include "race/graph.hpp"

namespace race {

using Matrix = Eigen::MatrixXd;

enum class Activation { ReLU, Identity, Tanh };

std::string_view activation_name(Activation a);
Activation parse_activation(std::string_view name);

struct ModelConfig {
  int plm_dim = 768;
  int feat_dim = 128;
  int hidden_dim = 512;
  int num_layers = 2;
  int num_bases = 10;
  int num_relations = kNumGraphRelations;
  int num_classes = 4;
  double dropout = 0.1;
  Activation activation = Activation::ReLU;
  double temperature = 0.07;
  bool layer_norm = true;
  double layer_norm_eps = 1e-5;

  /// Throws ConfigMismatch on out-of-range fields.
  void validate() const;
  int layer_input_dim(int layer) const { return layer == 0 ? feat_dim : hidden_dim; }

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
  bool operator==(const ModelConfig&) const = default;
};

struct RgcnLayerParams {
  std::vector<Matrix> bases;  // num_bases x (d_in x hidden)
  Matrix coefficients;        // num_relations x num_bases
  Matrix self_weight;         // d_in x hidden
};

/// Every learnable tensor. Relation weights are never stored; they are
/// rebuilt from the bases on demand.
struct ModelParams {
  Matrix type_embedding;  // 2 x plm_dim, row 0 non-leaf, row 1 leaf
  Matrix proj_weight;     // plm_dim x feat_dim
  Matrix proj_bias;       // 1 x feat_dim
  Matrix ln_gain;         // 1 x feat_dim
  Matrix ln_bias;         // 1 x feat_dim
  std::vector<RgcnLayerParams> layers;
  Matrix head_in_weight;   // hidden x hidden
  Matrix head_in_bias;     // 1 x hidden
  Matrix head_out_weight;  // hidden x num_classes
  Matrix head_out_bias;    // 1 x num_classes

  /// Zero type embeddings and biases, unit LN gain, fan-in scaled uniform
  /// weights.
  static ModelParams init(const ModelConfig& config, std::uint64_t seed);
  static ModelParams zeros(const ModelConfig& config);

  /// Flat views in a fixed order, shared by the optimizer and checkpoints.
  std::vector<Matrix*> tensors();
  std::vector<const Matrix*> tensors() const;
  static std::vector<std::string> tensor_names(const ModelConfig& config);

  void check_shapes(const ModelConfig& config) const;
  bool all_finite() const;
};

/// W_r = sum_k coefficients(r, k) * bases[k] for one layer.
Matrix reconstruct_relation_weight(const ModelParams& params, int layer, int relation);

/// Content vector per node: leaves average their aligned token rows, relation
/// nodes average the contents of all descendant leaves.
Matrix compute_node_contents(const LogicGraph& graph, const TokenEmbeddingMatrix& emb,
                             const SpanAlignment& alignment);

/// One document ready for the network.
struct GraphInput {
  const LogicGraph* graph = nullptr;
  const Matrix* contents = nullptr;  // num_nodes x plm_dim
};

/// Disjoint union of several graphs; node i of graph g sits at
/// node_offset[g] + i.
struct BatchedGraph {
  int num_nodes = 0;
  std::vector<int> node_offset;
  std::vector<int> roots;
  std::vector<int> node_type;
  std::vector<Edge> edges;
  std::vector<double> edge_norm;  // 1 / |N_r(dst)|
};

BatchedGraph batch_graphs(std::span<const LogicGraph* const> graphs);

/// Dropout masks for one forward pass; a null rng means evaluation mode.
class DropoutContext {
 public:
  DropoutContext() = default;
  DropoutContext(Rng* rng, double rate) : rng_(rng), rate_(rate) {}

  bool active() const { return rng_ != nullptr && rate_ > 0.0; }
  /// Inverted-dropout scale mask (0 or 1/(1-rate)) with the given shape, or
  /// an empty matrix when inactive.
  Matrix mask(Eigen::Index rows, Eigen::Index cols);

 private:
  Rng* rng_ = nullptr;
  double rate_ = 0.0;
};

struct LayerCache {
  Matrix input;                 // n x d_in
  std::vector<Matrix> aggregated;  // per basis: n x d_in
  Matrix pre;                   // n x hidden
};

struct ForwardCache {
  BatchedGraph batch;
  Matrix contents;      // n x plm
  std::vector<int> type_rows;
  Matrix projected;     // n x feat (before LN)
  Matrix normalized;    // n x feat, LN output (xhat * gain + bias)
  Matrix xhat;
  Eigen::VectorXd inv_std;
  Matrix feature_mask;  // dropout on h0
  std::vector<LayerCache> layers;
  Matrix z;             // N x hidden, root states
  Matrix readout_mask;
  Matrix head_pre;      // N x hidden
  Matrix head_hidden;   // N x hidden, activated
  Matrix head_mask;
};

struct BatchOutput {
  Matrix h0;      // n x feat
  Matrix hidden;  // n x hidden, final layer
  Matrix z;       // N x hidden
  Matrix logits;  // N x C
  Matrix probs;   // N x C
  ForwardCache cache;
};

/// Node features h0 for every node of the batch.
Matrix init_node_features(const BatchedGraph& batch, const Matrix& contents,
                          const ModelParams& params, const ModelConfig& config,
                          DropoutContext dropout = {});

/// Single-graph convenience for the above.
Matrix init_node_features(const LogicGraph& graph, const TokenEmbeddingMatrix& emb,
                          const SpanAlignment& alignment, const ModelParams& params,
                          const ModelConfig& config, DropoutContext dropout = {});

/// One message-passing layer.
Matrix rgcn_forward(const BatchedGraph& batch, const Matrix& h, const ModelParams& params,
                    const ModelConfig& config, int layer);
Matrix rgcn_forward(const LogicGraph& graph, const Matrix& h, const ModelParams& params,
                    const ModelConfig& config, int layer);

BatchOutput forward_batch(std::span<const GraphInput> inputs, const ModelParams& params,
                          const ModelConfig& config, DropoutContext dropout = {});

struct Prediction {
  Eigen::RowVectorXd z;
  Eigen::RowVectorXd probs;
};

Prediction forward(const LogicGraph& graph, const TokenEmbeddingMatrix& emb,
                   const SpanAlignment& alignment, const ModelParams& params,
                   const ModelConfig& config, DropoutContext dropout = {});

/// Gradients of a scalar loss given its gradient w.r.t. the root states z
/// (d_z, N x hidden) and the logits (d_logits, N x C).
ModelParams backward_batch(const ForwardCache& cache, const ModelParams& params,
                           const ModelConfig& config, const Matrix& d_z, const Matrix& d_logits);

Matrix softmax_rows(const Matrix& logits);

struct EncoderIdentity {
  std::string name;
  std::string revision;
  int dim = 0;
  bool operator==(const EncoderIdentity&) const = default;
};

struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;
  ModelConfig config;
  ModelParams params;
  std::uint64_t seed = 0;
  EncoderIdentity encoder;
  nlohmann::json meta = nlohmann::json::object();
};

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint);

/// Throws ConfigMismatch when `expected` is given and differs from the stored
/// config, or when tensor shapes disagree with the stored config.
Checkpoint load_checkpoint(const std::string& path,
                           const std::optional<ModelConfig>& expected = std::nullopt);

}  // namespace race
