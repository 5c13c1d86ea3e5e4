#include "race/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "race/common.hpp"
#include "race/objectives.hpp"

namespace race {

using nlohmann::json;

Example make_example(std::string doc_id, int label, std::string domain, const RstTree& tree,
                     const TokenEmbeddingMatrix& emb, bool borrow_empty) {
  Example ex;
  ex.doc_id = std::move(doc_id);
  ex.label = label;
  ex.domain = std::move(domain);
  ex.graph = build_graph(tree);
  const SpanAlignment alignment = align_spans(tree, emb, borrow_empty);
  ex.contents = compute_node_contents(ex.graph, emb, alignment);
  ex.num_tokens = static_cast<std::size_t>(emb.rows());
  ex.borrowed_edus = static_cast<std::size_t>(std::count(alignment.borrowed.begin(), alignment.borrowed.end(), true));
  return ex;
}

void TrainConfig::validate() const {
  auto bad = [](const std::string& m) { fail(ErrorKind::ConfigMismatch, m); };
  if (batch_size < 2) bad("batch_size must be at least 2 for the contrastive term");
  if (seeds.empty()) bad("at least one seed is required");
  if (epochs < 1) bad("epochs must be positive");
  if (!(learning_rate > 0.0)) bad("learning_rate must be positive");
  if (weight_decay < 0.0) bad("weight_decay must be non-negative");
  if (!(selection_fpr > 0.0 && selection_fpr < 1.0)) bad("selection_fpr must lie in (0, 1)");
  if (encoder != "mock" && encoder != "real") bad("encoder must be mock or real");
}

json TrainConfig::to_json() const {
  return {{"epochs", epochs},
          {"batch_size", batch_size},
          {"learning_rate", learning_rate},
          {"encoder_learning_rate", encoder_learning_rate},
          {"weight_decay", weight_decay},
          {"beta1", beta1},
          {"beta2", beta2},
          {"adam_eps", adam_eps},
          {"contrastive_weight", contrastive_weight},
          {"seeds", seeds},
          {"split", split},
          {"encoder", encoder},
          {"selection_fpr", selection_fpr}};
}

TrainConfig TrainConfig::from_json(const json& j) {
  TrainConfig c;
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.encoder_learning_rate = j.value("encoder_learning_rate", c.encoder_learning_rate);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.adam_eps = j.value("adam_eps", c.adam_eps);
  c.contrastive_weight = j.value("contrastive_weight", c.contrastive_weight);
  if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  c.split = j.value("split", c.split);
  c.encoder = j.value("encoder", c.encoder);
  c.selection_fpr = j.value("selection_fpr", c.selection_fpr);
  return c;
}

AdamW::AdamW(const ModelConfig& config, double lr, double weight_decay, double beta1, double beta2, double eps)
    : m_(ModelParams::zeros(config)),
      v_(ModelParams::zeros(config)),
      lr_(lr),
      wd_(weight_decay),
      b1_(beta1),
      b2_(beta2),
      eps_(eps) {}

void AdamW::step(ModelParams& params, const ModelParams& grads) {
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  auto p = params.tensors();
  const auto g = grads.tensors();
  auto m = m_.tensors();
  auto v = v_.tensors();
  for (std::size_t i = 0; i < p.size(); ++i) {
    *m[i] = b1_ * *m[i] + (1.0 - b1_) * *g[i];
    *v[i] = b2_ * *v[i] + (1.0 - b2_) * g[i]->cwiseProduct(*g[i]);
    *p[i] *= 1.0 - lr_ * wd_;
    const Matrix denom = ((*v[i]) / c2).cwiseSqrt().array() + eps_;
    *p[i] -= lr_ * ((*m[i]) / c1).cwiseQuotient(denom);
  }
}

std::vector<std::vector<std::size_t>> make_batches(const std::vector<int>& labels, int batch_size, Rng& rng) {
  if (batch_size < 2) fail(ErrorKind::ConfigMismatch, "batch_size must be at least 2");
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  // Each member gets a position in [0, 1) spread evenly over its class;
  // sorting by position interleaves the classes proportionally.
  struct Slot {
    double pos;
    int cls;
    std::size_t index;
  };
  std::vector<Slot> slots;
  for (auto& [cls, members] : by_class) {
    rng.shuffle(members);
    const double offset = rng.uniform01();
    for (std::size_t k = 0; k < members.size(); ++k) {
      slots.push_back({(static_cast<double>(k) + offset) / static_cast<double>(members.size()), cls, members[k]});
    }
  }
  std::sort(slots.begin(), slots.end(), [](const Slot& a, const Slot& b) {
    return a.pos != b.pos ? a.pos < b.pos : a.cls < b.cls;
  });
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t i = 0; i < slots.size(); i += static_cast<std::size_t>(batch_size)) {
    std::vector<std::size_t> b;
    for (std::size_t k = i; k < std::min(slots.size(), i + static_cast<std::size_t>(batch_size)); ++k) {
      b.push_back(slots[k].index);
    }
    batches.push_back(std::move(b));
  }
  if (batches.size() >= 2 && batches.back().size() == 1) {
    batches[batches.size() - 2].push_back(batches.back().front());
    batches.pop_back();
  }
  return batches;
}

std::pair<StepResult, ModelParams> loss_and_grad(const std::vector<const Example*>& batch,
                                                 const ModelParams& params, const ModelConfig& config,
                                                 double contrastive_weight, DropoutContext dropout) {
  std::vector<GraphInput> inputs;
  std::vector<int> labels;
  for (const Example* ex : batch) {
    inputs.push_back({&ex->graph, &ex->contents});
    labels.push_back(ex->label);
  }
  BatchOutput out = forward_batch(inputs, params, config, dropout);
  const LossGradients lg = total_loss_with_grad(out.z, out.logits, labels, config.temperature, contrastive_weight);
  if (!std::isfinite(lg.total)) {
    fail(ErrorKind::NonFiniteLoss, "loss became " + std::to_string(lg.total) + " (contrastive " +
                                       std::to_string(lg.contrastive) + ", cross-entropy " +
                                       std::to_string(lg.cross_entropy) + ") on a batch of " +
                                       std::to_string(batch.size()) + " starting at " + batch.front()->doc_id);
  }
  ModelParams grads = backward_batch(out.cache, params, config, lg.d_embeddings, lg.d_logits);
  return {{lg.total, lg.contrastive, lg.cross_entropy}, std::move(grads)};
}

StepResult train_step(const std::vector<const Example*>& batch, ModelParams& params, const ModelConfig& config,
                      AdamW& optimizer, double contrastive_weight, DropoutContext dropout) {
  auto [result, grads] = loss_and_grad(batch, params, config, contrastive_weight, dropout);
  if (!grads.all_finite()) fail(ErrorKind::NonFiniteLoss, "non-finite gradient");
  optimizer.step(params, grads);
  if (!params.all_finite()) fail(ErrorKind::NonFiniteLoss, "parameters became non-finite after an update");
  return result;
}

json EpochRecord::to_json() const {
  auto mv = [](const MetricValue& m) -> json { return m.value ? json(*m.value) : json(nullptr); };
  return {{"epoch", epoch},
          {"train_loss", train_loss},
          {"train_contrastive", train_contrastive},
          {"train_ce", train_ce},
          {"val_macro_tpr", mv(val_macro_tpr)},
          {"val_macro_auroc", mv(val_macro_auroc)},
          {"selected", selected}};
}

namespace {

double or_neg_inf(const MetricValue& m) { return m.value ? *m.value : -std::numeric_limits<double>::infinity(); }

}  // namespace

TrainResult train(const std::vector<Example>& train_set, const std::vector<Example>& val_set,
                  const ModelConfig& model_config, const TrainConfig& tc, std::uint64_t seed,
                  const EncoderIdentity& encoder, const std::function<void(const EpochRecord&)>& on_epoch) {
  model_config.validate();
  tc.validate();
  if (train_set.size() < 2) fail(ErrorKind::DataMissing, "training needs at least two examples");
  if (encoder.dim != model_config.plm_dim) {
    fail(ErrorKind::ConfigMismatch, "encoder width " + std::to_string(encoder.dim) + " differs from plm_dim " +
                                        std::to_string(model_config.plm_dim));
  }

  ModelParams params = ModelParams::init(model_config, seed);
  AdamW optimizer(model_config, tc.learning_rate, tc.weight_decay, tc.beta1, tc.beta2, tc.adam_eps);
  Rng batch_rng(mix64(seed ^ 0x6261746368ULL));
  Rng dropout_rng(mix64(seed ^ 0x64726f70ULL));
  std::vector<int> labels;
  for (const auto& ex : train_set) labels.push_back(ex.label);

  TrainResult result;
  result.checkpoint.config = model_config;
  result.checkpoint.seed = seed;
  result.checkpoint.encoder = encoder;
  std::pair<double, double> best{-std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  bool have_best = false;

  for (int epoch = 1; epoch <= tc.epochs; ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch;
    const auto batches = make_batches(labels, tc.batch_size, batch_rng);
    std::size_t seen = 0;
    for (const auto& b : batches) {
      std::vector<const Example*> batch;
      for (std::size_t i : b) batch.push_back(&train_set[i]);
      const StepResult s = train_step(batch, params, model_config, optimizer, tc.contrastive_weight,
                                      DropoutContext(&dropout_rng, model_config.dropout));
      const double w = static_cast<double>(b.size());
      rec.train_loss += s.total * w;
      rec.train_contrastive += s.contrastive * w;
      rec.train_ce += s.cross_entropy * w;
      seen += b.size();
    }
    rec.train_loss /= static_cast<double>(seen);
    rec.train_contrastive /= static_cast<double>(seen);
    rec.train_ce /= static_cast<double>(seen);

    std::pair<double, double> score = best;
    if (!val_set.empty()) {
      const Evaluation ev = evaluate(params, model_config, val_set);
      rec.val_macro_auroc = ev.report.macro_auroc;
      rec.val_macro_tpr.value.reset();
      try {
        rec.val_macro_tpr.value = macro_tpr_at_fpr(ev.table, tc.selection_fpr);
      } catch (const Error& e) {
        rec.val_macro_tpr.error = e.what();
      }
      score = {or_neg_inf(rec.val_macro_tpr), or_neg_inf(rec.val_macro_auroc)};
    }
    // Ties keep the earlier epoch; without validation data the last wins.
    if (!have_best || score > best || val_set.empty()) {
      best = score;
      have_best = true;
      result.checkpoint.params = params;
      result.best_epoch = epoch;
      for (auto& h : result.history) h.selected = false;
      rec.selected = true;
    }
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }

  result.checkpoint.meta = {
      {"best_epoch", result.best_epoch},
      {"train_config", tc.to_json()},
      {"unpublished_defaults",
       json::array({"optimizer", "learning_rate", "weight_decay", "batch_size", "epochs", "dropout"})}};
  return result;
}

Evaluation evaluate(const ModelParams& params, const ModelConfig& config, const std::vector<Example>& examples,
                    std::size_t chunk) {
  Evaluation ev;
  const auto n = static_cast<Eigen::Index>(examples.size());
  ev.table.probs.resize(n, config.num_classes);
  ev.z.resize(n, config.hidden_dim);
  for (std::size_t start = 0; start < examples.size(); start += chunk) {
    const std::size_t end = std::min(examples.size(), start + chunk);
    std::vector<GraphInput> inputs;
    for (std::size_t i = start; i < end; ++i) inputs.push_back({&examples[i].graph, &examples[i].contents});
    const BatchOutput out = forward_batch(inputs, params, config);
    ev.table.probs.middleRows(static_cast<Eigen::Index>(start), out.probs.rows()) = out.probs;
    ev.z.middleRows(static_cast<Eigen::Index>(start), out.z.rows()) = out.z;
  }
  for (const auto& ex : examples) {
    ev.doc_ids.push_back(ex.doc_id);
    ev.table.labels.push_back(ex.label);
    ev.table.lengths.push_back(ex.num_tokens);
    ev.table.domains.push_back(ex.domain);
  }
  ev.report = build_report(ev.table, &ev.z);
  return ev;
}

Evaluation evaluate(const Checkpoint& checkpoint, const EncoderIdentity& encoder,
                    const std::vector<Example>& examples) {
  if (!(checkpoint.encoder == encoder)) {
    fail(ErrorKind::ConfigMismatch, "checkpoint was trained on " + checkpoint.encoder.name + "@" +
                                        checkpoint.encoder.revision + " features, data come from " + encoder.name +
                                        "@" + encoder.revision);
  }
  for (const auto& ex : examples) {
    if (ex.contents.cols() != checkpoint.config.plm_dim) {
      fail(ErrorKind::ConfigMismatch, "feature width of " + ex.doc_id + " differs from the checkpoint");
    }
  }
  return evaluate(checkpoint.params, checkpoint.config, examples);
}

std::map<std::string, AggregateCell> aggregate_seeds(const std::vector<std::map<std::string, double>>& reports) {
  if (reports.size() < 2) fail(ErrorKind::SchemaMismatch, "aggregation needs at least two reports");
  std::set<std::string> keys;
  for (const auto& [k, v] : reports.front()) keys.insert(k);
  for (std::size_t i = 1; i < reports.size(); ++i) {
    std::set<std::string> other;
    for (const auto& [k, v] : reports[i]) other.insert(k);
    if (other != keys) fail(ErrorKind::SchemaMismatch, "report " + std::to_string(i) + " has different cells");
  }
  std::map<std::string, AggregateCell> out;
  const double n = static_cast<double>(reports.size());
  for (const auto& k : keys) {
    AggregateCell c;
    c.runs = reports.size();
    for (const auto& r : reports) c.mean += r.at(k);
    c.mean /= n;
    for (const auto& r : reports) c.std += (r.at(k) - c.mean) * (r.at(k) - c.mean);
    c.std = std::sqrt(c.std / (n - 1.0));
    out[k] = c;
  }
  return out;
}

std::map<std::string, AggregateCell> aggregate_seeds(const std::vector<MetricsReport>& reports) {
  std::vector<std::map<std::string, double>> flat;
  for (const auto& r : reports) flat.push_back(r.flatten());
  return aggregate_seeds(flat);
}

json aggregate_json(const std::map<std::string, AggregateCell>& cells) {
  json out = json::object();
  for (const auto& [k, c] : cells) out[k] = {{"mean", c.mean}, {"std", c.std}, {"runs", c.runs}};
  return out;
}

}  // namespace race
