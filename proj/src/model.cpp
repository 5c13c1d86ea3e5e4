#include "race/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>

namespace race {

using nlohmann::json;

namespace {

constexpr char kCheckpointMagic[8] = {'R', 'A', 'C', 'E', 'C', 'K', 'P', 'T'};

Matrix apply_activation(const Matrix& x, Activation a) {
  switch (a) {
    case Activation::ReLU: return x.cwiseMax(0.0);
    case Activation::Identity: return x;
    case Activation::Tanh: return x.array().tanh().matrix();
  }
  return x;
}

// d(activation)/d(pre), evaluated from the pre-activation.
Matrix activation_grad(const Matrix& pre, Activation a) {
  switch (a) {
    case Activation::ReLU: return (pre.array() > 0.0).cast<double>().matrix();
    case Activation::Identity: return Matrix::Ones(pre.rows(), pre.cols());
    case Activation::Tanh: return (1.0 - pre.array().tanh().square()).matrix();
  }
  return Matrix::Ones(pre.rows(), pre.cols());
}

Matrix uniform_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols, double bound) {
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = rng.uniform(-bound, bound);
  }
  return m;
}

Matrix apply_mask(const Matrix& x, const Matrix& mask) {
  if (mask.size() == 0) return x;
  return x.cwiseProduct(mask);
}

void require_shape(const Matrix& m, Eigen::Index rows, Eigen::Index cols, const std::string& what) {
  if (m.rows() != rows || m.cols() != cols) {
    fail(ErrorKind::ConfigMismatch, what + " has shape " + std::to_string(m.rows()) + "x" +
                                        std::to_string(m.cols()) + ", expected " +
                                        std::to_string(rows) + "x" + std::to_string(cols));
  }
}

// Layer-0 input through the final layer; fills the projection and layer parts
// of the cache.
void encode_nodes(ForwardCache& cache, const ModelParams& params, const ModelConfig& config,
                  DropoutContext& dropout) {
  const Eigen::Index n = cache.contents.rows();
  if (cache.contents.cols() != config.plm_dim) {
    fail(ErrorKind::DimensionMismatch, "node contents have width " +
                                           std::to_string(cache.contents.cols()) + ", model expects " +
                                           std::to_string(config.plm_dim));
  }
  Matrix x = cache.contents;
  for (Eigen::Index i = 0; i < n; ++i) x.row(i) += params.type_embedding.row(cache.type_rows[i]);
  cache.projected = x * params.proj_weight;
  cache.projected.rowwise() += params.proj_bias.row(0);

  if (config.layer_norm) {
    const Eigen::Index d = cache.projected.cols();
    cache.xhat.resize(n, d);
    cache.inv_std.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double mean = cache.projected.row(i).mean();
      const double var = (cache.projected.row(i).array() - mean).square().mean();
      cache.inv_std(i) = 1.0 / std::sqrt(var + config.layer_norm_eps);
      cache.xhat.row(i) = (cache.projected.row(i).array() - mean) * cache.inv_std(i);
    }
    cache.normalized = cache.xhat.array().rowwise() * params.ln_gain.row(0).array();
    cache.normalized.rowwise() += params.ln_bias.row(0);
  } else {
    cache.normalized = cache.projected;
  }
  cache.feature_mask = dropout.mask(n, cache.normalized.cols());
  Matrix h = apply_mask(cache.normalized, cache.feature_mask);

  cache.layers.clear();
  for (int l = 0; l < config.num_layers; ++l) {
    const auto& layer = params.layers[l];
    LayerCache lc;
    lc.input = h;
    lc.aggregated.assign(layer.bases.size(), Matrix::Zero(n, h.cols()));
    for (std::size_t e = 0; e < cache.batch.edges.size(); ++e) {
      const Edge& edge = cache.batch.edges[e];
      const double w = cache.batch.edge_norm[e];
      for (std::size_t k = 0; k < layer.bases.size(); ++k) {
        const double coef = layer.coefficients(edge.relation, static_cast<Eigen::Index>(k)) * w;
        lc.aggregated[k].row(edge.dst) += coef * h.row(edge.src);
      }
    }
    lc.pre = h * layer.self_weight;
    for (std::size_t k = 0; k < layer.bases.size(); ++k) lc.pre.noalias() += lc.aggregated[k] * layer.bases[k];
    h = apply_activation(lc.pre, config.activation);
    cache.layers.push_back(std::move(lc));
  }

  const Eigen::Index N = static_cast<Eigen::Index>(cache.batch.roots.size());
  cache.z.resize(N, h.cols());
  for (Eigen::Index g = 0; g < N; ++g) cache.z.row(g) = h.row(cache.batch.roots[g]);
}

}  // namespace

std::string_view activation_name(Activation a) {
  switch (a) {
    case Activation::ReLU: return "relu";
    case Activation::Identity: return "identity";
    case Activation::Tanh: return "tanh";
  }
  return "relu";
}

Activation parse_activation(std::string_view name) {
  if (name == "relu") return Activation::ReLU;
  if (name == "identity") return Activation::Identity;
  if (name == "tanh") return Activation::Tanh;
  fail(ErrorKind::ConfigMismatch, "unknown activation '" + std::string(name) + "'");
}

void ModelConfig::validate() const {
  auto bad = [](const std::string& what) { fail(ErrorKind::ConfigMismatch, "model config: " + what); };
  if (plm_dim < 1 || feat_dim < 1 || hidden_dim < 1) bad("widths must be positive");
  if (num_layers < 1) bad("num_layers must be >= 1");
  if (num_relations < 1) bad("num_relations must be >= 1");
  if (num_bases < 1 || num_bases > num_relations) bad("num_bases must be in [1, num_relations]");
  if (num_classes < 2) bad("num_classes must be >= 2");
  if (!(dropout >= 0.0 && dropout < 1.0)) bad("dropout must be in [0, 1)");
  if (!(temperature > 0.0)) bad("temperature must be positive");
  if (!(layer_norm_eps > 0.0)) bad("layer_norm_eps must be positive");
}

json ModelConfig::to_json() const {
  return {{"plm_dim", plm_dim},
          {"feat_dim", feat_dim},
          {"hidden_dim", hidden_dim},
          {"num_layers", num_layers},
          {"num_bases", num_bases},
          {"num_relations", num_relations},
          {"num_classes", num_classes},
          {"dropout", dropout},
          {"activation", std::string(activation_name(activation))},
          {"temperature", temperature},
          {"layer_norm", layer_norm},
          {"layer_norm_eps", layer_norm_eps}};
}

ModelConfig ModelConfig::from_json(const json& j) {
  ModelConfig c;
  c.plm_dim = j.value("plm_dim", c.plm_dim);
  c.feat_dim = j.value("feat_dim", c.feat_dim);
  c.hidden_dim = j.value("hidden_dim", c.hidden_dim);
  c.num_layers = j.value("num_layers", c.num_layers);
  c.num_bases = j.value("num_bases", c.num_bases);
  c.num_relations = j.value("num_relations", c.num_relations);
  c.num_classes = j.value("num_classes", c.num_classes);
  c.dropout = j.value("dropout", c.dropout);
  c.activation = parse_activation(j.value("activation", std::string("relu")));
  c.temperature = j.value("temperature", c.temperature);
  c.layer_norm = j.value("layer_norm", c.layer_norm);
  c.layer_norm_eps = j.value("layer_norm_eps", c.layer_norm_eps);
  return c;
}

ModelParams ModelParams::zeros(const ModelConfig& c) {
  ModelParams p;
  p.type_embedding = Matrix::Zero(2, c.plm_dim);
  p.proj_weight = Matrix::Zero(c.plm_dim, c.feat_dim);
  p.proj_bias = Matrix::Zero(1, c.feat_dim);
  p.ln_gain = Matrix::Zero(1, c.feat_dim);
  p.ln_bias = Matrix::Zero(1, c.feat_dim);
  for (int l = 0; l < c.num_layers; ++l) {
    RgcnLayerParams layer;
    const int d_in = c.layer_input_dim(l);
    layer.bases.assign(c.num_bases, Matrix::Zero(d_in, c.hidden_dim));
    layer.coefficients = Matrix::Zero(c.num_relations, c.num_bases);
    layer.self_weight = Matrix::Zero(d_in, c.hidden_dim);
    p.layers.push_back(std::move(layer));
  }
  p.head_in_weight = Matrix::Zero(c.hidden_dim, c.hidden_dim);
  p.head_in_bias = Matrix::Zero(1, c.hidden_dim);
  p.head_out_weight = Matrix::Zero(c.hidden_dim, c.num_classes);
  p.head_out_bias = Matrix::Zero(1, c.num_classes);
  return p;
}

ModelParams ModelParams::init(const ModelConfig& c, std::uint64_t seed) {
  c.validate();
  ModelParams p = zeros(c);
  Rng rng(seed);
  p.proj_weight = uniform_matrix(rng, c.plm_dim, c.feat_dim, 1.0 / std::sqrt(c.plm_dim));
  p.ln_gain.setOnes();
  for (int l = 0; l < c.num_layers; ++l) {
    auto& layer = p.layers[l];
    const int d_in = c.layer_input_dim(l);
    const double bound = 1.0 / std::sqrt(static_cast<double>(d_in));
    for (auto& basis : layer.bases) basis = uniform_matrix(rng, d_in, c.hidden_dim, bound);
    layer.coefficients = uniform_matrix(rng, c.num_relations, c.num_bases,
                                        1.0 / std::sqrt(static_cast<double>(c.num_bases)));
    layer.self_weight = uniform_matrix(rng, d_in, c.hidden_dim, bound);
  }
  const double head_bound = 1.0 / std::sqrt(static_cast<double>(c.hidden_dim));
  p.head_in_weight = uniform_matrix(rng, c.hidden_dim, c.hidden_dim, head_bound);
  p.head_out_weight = uniform_matrix(rng, c.hidden_dim, c.num_classes, head_bound);
  return p;
}

std::vector<Matrix*> ModelParams::tensors() {
  std::vector<Matrix*> out{&type_embedding, &proj_weight, &proj_bias, &ln_gain, &ln_bias};
  for (auto& layer : layers) {
    for (auto& b : layer.bases) out.push_back(&b);
    out.push_back(&layer.coefficients);
    out.push_back(&layer.self_weight);
  }
  for (Matrix* m : {&head_in_weight, &head_in_bias, &head_out_weight, &head_out_bias}) out.push_back(m);
  return out;
}

std::vector<const Matrix*> ModelParams::tensors() const {
  auto mutable_view = const_cast<ModelParams*>(this)->tensors();
  return {mutable_view.begin(), mutable_view.end()};
}

std::vector<std::string> ModelParams::tensor_names(const ModelConfig& c) {
  std::vector<std::string> names{"type_embedding", "proj_weight", "proj_bias", "ln_gain", "ln_bias"};
  for (int l = 0; l < c.num_layers; ++l) {
    const std::string prefix = "layer" + std::to_string(l) + ".";
    for (int k = 0; k < c.num_bases; ++k) names.push_back(prefix + "basis" + std::to_string(k));
    names.push_back(prefix + "coefficients");
    names.push_back(prefix + "self_weight");
  }
  for (const char* n : {"head_in_weight", "head_in_bias", "head_out_weight", "head_out_bias"}) names.push_back(n);
  return names;
}

void ModelParams::check_shapes(const ModelConfig& c) const {
  const ModelParams ref = zeros(c);
  if (layers.size() != ref.layers.size()) fail(ErrorKind::ConfigMismatch, "layer count differs from config");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (layers[l].bases.size() != ref.layers[l].bases.size()) {
      fail(ErrorKind::ConfigMismatch, "basis count differs from config");
    }
  }
  const auto mine = tensors();
  const auto want = ref.tensors();
  const auto names = tensor_names(c);
  for (std::size_t i = 0; i < want.size(); ++i) require_shape(*mine[i], want[i]->rows(), want[i]->cols(), names[i]);
}

bool ModelParams::all_finite() const {
  for (const Matrix* m : tensors()) {
    if (!m->allFinite()) return false;
  }
  return true;
}

Matrix reconstruct_relation_weight(const ModelParams& params, int layer, int relation) {
  const auto& lp = params.layers.at(static_cast<std::size_t>(layer));
  if (relation < 0 || relation >= lp.coefficients.rows()) {
    fail(ErrorKind::DimensionMismatch, "relation id " + std::to_string(relation) + " out of range");
  }
  Matrix w = Matrix::Zero(lp.bases.front().rows(), lp.bases.front().cols());
  for (std::size_t k = 0; k < lp.bases.size(); ++k) {
    w += lp.coefficients(relation, static_cast<Eigen::Index>(k)) * lp.bases[k];
  }
  return w;
}

Matrix compute_node_contents(const LogicGraph& graph, const TokenEmbeddingMatrix& emb,
                             const SpanAlignment& alignment) {
  const int n = graph.num_nodes();
  const Eigen::Index d = emb.embeddings.cols();
  Matrix contents = Matrix::Zero(n, d);
  std::vector<double> leaf_count(n, 0.0);
  const auto children = forward_children(graph);

  // Post-order so children are finished before their parent; `sum` holds the
  // sum of descendant-leaf contents.
  Matrix sum = Matrix::Zero(n, d);
  std::vector<int> state(n, 0);  // 0 new, 1 open, 2 done
  for (int start = 0; start < n; ++start) {
    if (state[start]) continue;
    std::vector<int> stack{start};
    while (!stack.empty()) {
      const int v = stack.back();
      if (state[v] == 0) {
        state[v] = 1;
        for (int c : children[v]) {
          if (state[c] == 0) stack.push_back(c);
        }
        continue;
      }
      stack.pop_back();
      if (state[v] == 2) continue;
      state[v] = 2;
      const GraphNode& node = graph.nodes[v];
      if (node.type == NodeType::Leaf) {
        if (node.edu_index < 0 || static_cast<std::size_t>(node.edu_index) >= alignment.ranges.size()) {
          fail(ErrorKind::DimensionMismatch, "leaf has no span alignment");
        }
        const auto [first, last] = alignment.ranges[node.edu_index];
        if (first < 0 || last < first || static_cast<Eigen::Index>(last) >= emb.embeddings.rows()) {
          fail(ErrorKind::DimensionMismatch, "span alignment outside the embedding rows");
        }
        contents.row(v) = emb.embeddings.middleRows(first, last - first + 1).colwise().mean();
        sum.row(v) = contents.row(v);
        leaf_count[v] = 1.0;
      } else {
        for (int c : children[v]) {
          sum.row(v) += sum.row(c);
          leaf_count[v] += leaf_count[c];
        }
        if (leaf_count[v] == 0.0) fail(ErrorKind::InvalidTree, "relation node without leaves");
        contents.row(v) = sum.row(v) / leaf_count[v];
      }
    }
  }
  return contents;
}

BatchedGraph batch_graphs(std::span<const LogicGraph* const> graphs) {
  BatchedGraph b;
  for (const LogicGraph* g : graphs) {
    const int offset = b.num_nodes;
    b.node_offset.push_back(offset);
    b.roots.push_back(offset + g->root);
    for (const auto& node : g->nodes) b.node_type.push_back(static_cast<int>(node.type));
    for (const auto& e : g->edges) b.edges.push_back({e.src + offset, e.relation, e.dst + offset});
    b.num_nodes += g->num_nodes();
  }
  std::map<std::pair<int, int>, int> in_degree;
  for (const auto& e : b.edges) ++in_degree[{e.dst, e.relation}];
  b.edge_norm.reserve(b.edges.size());
  for (const auto& e : b.edges) b.edge_norm.push_back(1.0 / in_degree[{e.dst, e.relation}]);
  return b;
}

Matrix DropoutContext::mask(Eigen::Index rows, Eigen::Index cols) {
  if (!active()) return {};
  Matrix m(rows, cols);
  const double keep_scale = 1.0 / (1.0 - rate_);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = rng_->uniform01() < rate_ ? 0.0 : keep_scale;
  }
  return m;
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double mx = logits.row(i).maxCoeff();
    out.row(i) = (logits.row(i).array() - mx).exp().matrix();
    out.row(i) /= out.row(i).sum();
  }
  return out;
}

Matrix init_node_features(const BatchedGraph& batch, const Matrix& contents, const ModelParams& params,
                          const ModelConfig& config, DropoutContext dropout) {
  ModelConfig no_layers = config;
  no_layers.num_layers = 0;
  ForwardCache cache;
  cache.batch = batch;
  cache.contents = contents;
  cache.type_rows = batch.node_type;
  if (contents.rows() != batch.num_nodes) fail(ErrorKind::DimensionMismatch, "one content row per node is required");
  encode_nodes(cache, params, no_layers, dropout);
  return apply_mask(cache.normalized, cache.feature_mask);
}

Matrix init_node_features(const LogicGraph& graph, const TokenEmbeddingMatrix& emb,
                          const SpanAlignment& alignment, const ModelParams& params,
                          const ModelConfig& config, DropoutContext dropout) {
  const LogicGraph* g = &graph;
  const BatchedGraph batch = batch_graphs(std::span<const LogicGraph* const>(&g, 1));
  return init_node_features(batch, compute_node_contents(graph, emb, alignment), params, config, dropout);
}

Matrix rgcn_forward(const BatchedGraph& batch, const Matrix& h, const ModelParams& params,
                    const ModelConfig& config, int layer) {
  const auto& lp = params.layers.at(static_cast<std::size_t>(layer));
  if (h.rows() != batch.num_nodes || h.cols() != lp.self_weight.rows()) {
    fail(ErrorKind::DimensionMismatch, "rgcn_forward: input has shape " + std::to_string(h.rows()) + "x" +
                                           std::to_string(h.cols()));
  }
  std::vector<Matrix> aggregated(lp.bases.size(), Matrix::Zero(h.rows(), h.cols()));
  for (std::size_t e = 0; e < batch.edges.size(); ++e) {
    const Edge& edge = batch.edges[e];
    for (std::size_t k = 0; k < lp.bases.size(); ++k) {
      aggregated[k].row(edge.dst) +=
          (lp.coefficients(edge.relation, static_cast<Eigen::Index>(k)) * batch.edge_norm[e]) * h.row(edge.src);
    }
  }
  Matrix pre = h * lp.self_weight;
  for (std::size_t k = 0; k < lp.bases.size(); ++k) pre.noalias() += aggregated[k] * lp.bases[k];
  return apply_activation(pre, config.activation);
}

Matrix rgcn_forward(const LogicGraph& graph, const Matrix& h, const ModelParams& params,
                    const ModelConfig& config, int layer) {
  const LogicGraph* g = &graph;
  return rgcn_forward(batch_graphs(std::span<const LogicGraph* const>(&g, 1)), h, params, config, layer);
}

BatchOutput forward_batch(std::span<const GraphInput> inputs, const ModelParams& params,
                          const ModelConfig& config, DropoutContext dropout) {
  if (inputs.empty()) fail(ErrorKind::DimensionMismatch, "forward_batch: empty batch");
  std::vector<const LogicGraph*> graphs;
  Eigen::Index total = 0;
  for (const auto& in : inputs) {
    graphs.push_back(in.graph);
    if (in.contents->rows() != in.graph->num_nodes()) {
      fail(ErrorKind::DimensionMismatch, "contents rows differ from graph nodes");
    }
    total += in.contents->rows();
  }
  BatchOutput out;
  ForwardCache& cache = out.cache;
  cache.batch = batch_graphs(graphs);
  cache.type_rows = cache.batch.node_type;
  cache.contents.resize(total, config.plm_dim);
  {
    Eigen::Index row = 0;
    for (const auto& in : inputs) {
      if (in.contents->cols() != config.plm_dim) {
        fail(ErrorKind::DimensionMismatch, "contents width differs from plm_dim");
      }
      cache.contents.middleRows(row, in.contents->rows()) = *in.contents;
      row += in.contents->rows();
    }
  }
  encode_nodes(cache, params, config, dropout);
  out.h0 = cache.layers.empty() ? apply_mask(cache.normalized, cache.feature_mask) : cache.layers.front().input;
  out.z = cache.z;
  out.hidden = apply_activation(cache.layers.back().pre, config.activation);

  cache.readout_mask = dropout.mask(cache.z.rows(), cache.z.cols());
  cache.head_pre = apply_mask(cache.z, cache.readout_mask) * params.head_in_weight;
  cache.head_pre.rowwise() += params.head_in_bias.row(0);
  cache.head_hidden = apply_activation(cache.head_pre, config.activation);
  cache.head_mask = dropout.mask(cache.head_hidden.rows(), cache.head_hidden.cols());
  out.logits = apply_mask(cache.head_hidden, cache.head_mask) * params.head_out_weight;
  out.logits.rowwise() += params.head_out_bias.row(0);
  out.probs = softmax_rows(out.logits);
  return out;
}

Prediction forward(const LogicGraph& graph, const TokenEmbeddingMatrix& emb, const SpanAlignment& alignment,
                   const ModelParams& params, const ModelConfig& config, DropoutContext dropout) {
  const Matrix contents = compute_node_contents(graph, emb, alignment);
  const GraphInput input{&graph, &contents};
  BatchOutput out = forward_batch(std::span<const GraphInput>(&input, 1), params, config, dropout);
  return {out.z.row(0), out.probs.row(0)};
}

ModelParams backward_batch(const ForwardCache& cache, const ModelParams& params, const ModelConfig& config,
                           const Matrix& d_z, const Matrix& d_logits) {
  ModelParams grad = ModelParams::zeros(config);

  // Head.
  const Matrix head_in = apply_mask(cache.head_hidden, cache.head_mask);
  grad.head_out_weight = head_in.transpose() * d_logits;
  grad.head_out_bias = d_logits.colwise().sum();
  Matrix d_head = apply_mask(d_logits * params.head_out_weight.transpose(), cache.head_mask);
  d_head = d_head.cwiseProduct(activation_grad(cache.head_pre, config.activation));
  const Matrix readout = apply_mask(cache.z, cache.readout_mask);
  grad.head_in_weight = readout.transpose() * d_head;
  grad.head_in_bias = d_head.colwise().sum();
  const Matrix d_root = d_z + apply_mask(d_head * params.head_in_weight.transpose(), cache.readout_mask);

  // Readout scatters into the root rows of the final layer.
  const Eigen::Index n = cache.contents.rows();
  Matrix d_h = Matrix::Zero(n, config.hidden_dim);
  for (Eigen::Index g = 0; g < d_root.rows(); ++g) d_h.row(cache.batch.roots[g]) += d_root.row(g);

  for (int l = config.num_layers - 1; l >= 0; --l) {
    const LayerCache& lc = cache.layers[l];
    const RgcnLayerParams& lp = params.layers[l];
    RgcnLayerParams& lg = grad.layers[l];
    const Matrix d_pre = d_h.cwiseProduct(activation_grad(lc.pre, config.activation));
    lg.self_weight = lc.input.transpose() * d_pre;
    Matrix d_in = d_pre * lp.self_weight.transpose();
    for (std::size_t k = 0; k < lp.bases.size(); ++k) {
      const auto kk = static_cast<Eigen::Index>(k);
      lg.bases[k] = lc.aggregated[k].transpose() * d_pre;
      const Matrix d_agg = d_pre * lp.bases[k].transpose();
      for (std::size_t e = 0; e < cache.batch.edges.size(); ++e) {
        const Edge& edge = cache.batch.edges[e];
        const double w = cache.batch.edge_norm[e];
        d_in.row(edge.src) += (lp.coefficients(edge.relation, kk) * w) * d_agg.row(edge.dst);
        lg.coefficients(edge.relation, kk) += w * d_agg.row(edge.dst).dot(lc.input.row(edge.src));
      }
    }
    d_h = std::move(d_in);
  }

  // h0 = dropout(LN(x W + b)).
  Matrix d_norm = apply_mask(d_h, cache.feature_mask);
  Matrix d_proj;
  if (config.layer_norm) {
    grad.ln_gain = d_norm.cwiseProduct(cache.xhat).colwise().sum();
    grad.ln_bias = d_norm.colwise().sum();
    const Matrix d_xhat = d_norm.array().rowwise() * params.ln_gain.row(0).array();
    const double d = static_cast<double>(d_xhat.cols());
    d_proj.resize(d_xhat.rows(), d_xhat.cols());
    for (Eigen::Index i = 0; i < d_xhat.rows(); ++i) {
      const double mean_d = d_xhat.row(i).sum() / d;
      const double mean_dx = d_xhat.row(i).dot(cache.xhat.row(i)) / d;
      d_proj.row(i) =
          cache.inv_std(i) * (d_xhat.row(i).array() - mean_d - cache.xhat.row(i).array() * mean_dx).matrix();
    }
  } else {
    d_proj = d_norm;
  }
  Matrix x = cache.contents;
  for (Eigen::Index i = 0; i < n; ++i) x.row(i) += params.type_embedding.row(cache.type_rows[i]);
  grad.proj_weight = x.transpose() * d_proj;
  grad.proj_bias = d_proj.colwise().sum();
  const Matrix d_x = d_proj * params.proj_weight.transpose();
  for (Eigen::Index i = 0; i < n; ++i) grad.type_embedding.row(cache.type_rows[i]) += d_x.row(i);
  return grad;
}

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  ck.params.check_shapes(ck.config);
  json header;
  header["version"] = Checkpoint::kVersion;
  header["config"] = ck.config.to_json();
  header["seed"] = ck.seed;
  header["encoder"] = {{"name", ck.encoder.name}, {"revision", ck.encoder.revision}, {"dim", ck.encoder.dim}};
  header["meta"] = ck.meta;
  const auto names = ModelParams::tensor_names(ck.config);
  const auto tensors = ck.params.tensors();
  json shapes = json::array();
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    shapes.push_back({{"name", names[i]}, {"rows", tensors[i]->rows()}, {"cols", tensors[i]->cols()}});
  }
  header["tensors"] = shapes;
  const std::string text = header.dump();

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) fail(ErrorKind::IoError, "cannot write checkpoint " + tmp);
    out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    const std::uint32_t version = Checkpoint::kVersion;
    out.write(reinterpret_cast<const char*>(&version), sizeof(version));
    const std::uint64_t len = text.size();
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(text.data(), static_cast<std::streamsize>(len));
    for (const Matrix* m : tensors) {
      for (Eigen::Index r = 0; r < m->rows(); ++r) {
        for (Eigen::Index c = 0; c < m->cols(); ++c) {
          const double v = (*m)(r, c);
          out.write(reinterpret_cast<const char*>(&v), sizeof(v));
        }
      }
    }
    if (!out) fail(ErrorKind::IoError, "cannot write checkpoint " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::string& path, const std::optional<ModelConfig>& expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::DataMissing, "cannot read checkpoint " + path);
  char magic[sizeof(kCheckpointMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
    fail(ErrorKind::SchemaError, path + " is not a checkpoint");
  }
  std::uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  if (version != Checkpoint::kVersion) {
    fail(ErrorKind::ConfigMismatch, "checkpoint version " + std::to_string(version) + " is not supported");
  }
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) fail(ErrorKind::IoError, "truncated checkpoint " + path);
  const json header = json::parse(text);

  Checkpoint ck;
  ck.config = ModelConfig::from_json(header.at("config"));
  if (expected && !(*expected == ck.config)) {
    fail(ErrorKind::ConfigMismatch, "checkpoint config " + ck.config.to_json().dump() +
                                        " differs from the requested " + expected->to_json().dump());
  }
  ck.seed = header.value("seed", std::uint64_t{0});
  const json& enc = header.at("encoder");
  ck.encoder = {enc.value("name", std::string()), enc.value("revision", std::string()), enc.value("dim", 0)};
  ck.meta = header.value("meta", json::object());
  ck.params = ModelParams::zeros(ck.config);
  const auto tensors = ck.params.tensors();
  const json& shapes = header.at("tensors");
  if (shapes.size() != tensors.size()) fail(ErrorKind::ConfigMismatch, "checkpoint tensor count differs from config");
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    Matrix& m = *tensors[i];
    if (shapes[i].at("rows").get<Eigen::Index>() != m.rows() || shapes[i].at("cols").get<Eigen::Index>() != m.cols()) {
      fail(ErrorKind::ConfigMismatch, "tensor " + shapes[i].at("name").get<std::string>() + " has the wrong shape");
    }
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) in.read(reinterpret_cast<char*>(&m(r, c)), sizeof(double));
    }
  }
  if (!in) fail(ErrorKind::IoError, "truncated checkpoint " + path);
  return ck;
}

}  // namespace race
