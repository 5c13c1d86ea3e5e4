#pragma once

// Independent reference implementations used only by the tests. They follow
// the textbook definitions with plain loops and share no code paths with the
// library beyond its data types.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "race/common.hpp"
#include "race/embedder.hpp"
#include "race/graph.hpp"
#include "race/model.hpp"
#include "race/rst.hpp"

namespace oracle {

using race::Matrix;

inline std::string random_text(race::Rng& rng, int sentences, std::vector<std::pair<std::size_t, std::size_t>>* spans) {
  static const char* kWords[] = {"the", "model", "text", "of", "claims", "however", "because", "data",
                                 "shows", "we", "argue", "that", "results", "in", "a", "study"};
  std::string text;
  for (int s = 0; s < sentences; ++s) {
    const std::size_t start = text.size();
    const int n = 1 + static_cast<int>(rng.uniform_index(6));
    for (int w = 0; w < n; ++w) {
      text += kWords[rng.uniform_index(std::size(kWords))];
      text += w + 1 < n ? " " : ".";
    }
    if (s + 1 < sentences) text += ' ';
    if (spans) spans->emplace_back(start, text.size());
  }
  return text;
}

/// Random binary tree with random split points and relations. Leaf ids are
/// 0..L-1, internal ids are shuffled so they are not in post-order.
inline race::RstTree random_tree(race::Rng& rng, int leaves) {
  race::RstTree t;
  std::vector<std::pair<std::size_t, std::size_t>> spans;
  t.document = random_text(rng, leaves, &spans);
  for (int i = 0; i < leaves; ++i) t.edus.push_back({i, spans[i].first, spans[i].second});
  std::vector<int> ids;
  for (int i = 0; i < leaves - 1; ++i) ids.push_back(leaves + i);
  rng.shuffle(ids);
  std::size_t next = 0;
  std::function<int(int, int)> build = [&](int lo, int hi) -> int {
    if (hi - lo == 1) return lo;
    const int cut = lo + 1 + static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(hi - lo - 1)));
    const int l = build(lo, cut);
    const int r = build(cut, hi);
    race::InternalNode n;
    n.id = ids[next++];
    n.relation = static_cast<race::Relation>(rng.uniform_index(race::kNumRelations));
    n.left = l;
    n.right = r;
    t.internals.push_back(n);
    return n.id;
  };
  t.root_id = build(0, leaves);
  return t;
}

/// Arbitrary multigraph: random node types and edges (duplicates allowed).
inline race::LogicGraph random_multigraph(race::Rng& rng, int nodes, int relations) {
  race::LogicGraph g;
  for (int i = 0; i < nodes; ++i) {
    race::GraphNode n;
    n.type = rng.uniform01() < 0.5 ? race::NodeType::Leaf : race::NodeType::NonLeaf;
    g.nodes.push_back(n);
  }
  const int edges = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(3 * nodes + 1)));
  for (int e = 0; e < edges; ++e) {
    g.edges.push_back({static_cast<int>(rng.uniform_index(nodes)), static_cast<int>(rng.uniform_index(relations)),
                       static_cast<int>(rng.uniform_index(nodes))});
  }
  g.root = nodes - 1;
  g.num_relations = relations;
  return g;
}

inline Matrix random_matrix(race::Rng& rng, int rows, int cols, double scale = 1.0) {
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = scale * rng.normal();
  return m;
}

inline double act(double x, race::Activation a) {
  switch (a) {
    case race::Activation::ReLU: return x > 0.0 ? x : 0.0;
    case race::Activation::Tanh: return std::tanh(x);
    case race::Activation::Identity: return x;
  }
  return x;
}

/// out[v] = act( h[v] W0 + sum_r sum_{edges (u,r,v)} h[u] W_r / |edges into v under r| ),
/// W_r = sum_k alpha[r,k] V_k, all by scalar loops.
inline Matrix rgcn(const race::LogicGraph& g, const Matrix& h, const race::ModelParams& p,
                   const race::ModelConfig& c, int layer) {
  const auto& lp = p.layers[static_cast<std::size_t>(layer)];
  const int n = g.num_nodes();
  const int din = static_cast<int>(h.cols());
  const int dout = static_cast<int>(lp.self_weight.cols());
  const int R = static_cast<int>(lp.coefficients.rows());
  std::vector<Matrix> W(static_cast<std::size_t>(R), Matrix::Zero(din, dout));
  for (int r = 0; r < R; ++r)
    for (std::size_t k = 0; k < lp.bases.size(); ++k)
      for (int i = 0; i < din; ++i)
        for (int j = 0; j < dout; ++j) W[r](i, j) += lp.coefficients(r, static_cast<int>(k)) * lp.bases[k](i, j);

  Matrix out = Matrix::Zero(n, dout);
  for (int v = 0; v < n; ++v) {
    for (int j = 0; j < dout; ++j) {
      double acc = 0.0;
      for (int i = 0; i < din; ++i) acc += h(v, i) * lp.self_weight(i, j);
      for (int r = 0; r < R; ++r) {
        int deg = 0;
        for (const auto& e : g.edges) deg += (e.dst == v && e.relation == r);
        if (deg == 0) continue;
        for (const auto& e : g.edges) {
          if (e.dst != v || e.relation != r) continue;
          for (int i = 0; i < din; ++i) acc += h(e.src, i) * W[r](i, j) / deg;
        }
      }
      out(v, j) = act(acc, c.activation);
    }
  }
  return out;
}

/// Internal tree ids in post-order (left subtree, right subtree, node).
inline std::vector<int> postorder_internals(const race::RstTree& t) {
  std::map<int, const race::InternalNode*> by_id;
  for (const auto& n : t.internals) by_id[n.id] = &n;
  std::vector<int> out;
  std::function<void(int)> walk = [&](int id) {
    auto it = by_id.find(id);
    if (it == by_id.end()) return;
    walk(it->second->left);
    walk(it->second->right);
    out.push_back(id);
  };
  walk(t.root_id);
  return out;
}

/// Leaf ids (EDU ids) under each tree node, found by walking parent links
/// upwards from every leaf.
inline std::map<int, std::set<int>> descendant_leaves(const race::RstTree& t) {
  std::map<int, int> parent;
  for (const auto& n : t.internals) {
    parent[n.left] = n.id;
    parent[n.right] = n.id;
  }
  std::map<int, std::set<int>> out;
  for (const auto& e : t.edus) {
    int cur = e.id;
    out[cur].insert(e.id);
    while (parent.count(cur)) {
      cur = parent[cur];
      out[cur].insert(e.id);
    }
  }
  return out;
}

/// Contents per graph node (leaves in document order, internals in
/// post-order): leaf = mean of its tokens, internal = mean of its
/// descendant leaves' contents.
inline Matrix node_contents(const race::RstTree& t, const race::TokenEmbeddingMatrix& emb,
                            const race::SpanAlignment& al) {
  const int L = static_cast<int>(t.edus.size());
  const int d = static_cast<int>(emb.embeddings.cols());
  std::map<int, Eigen::RowVectorXd> leaf;
  for (int i = 0; i < L; ++i) {
    Eigen::RowVectorXd s = Eigen::RowVectorXd::Zero(d);
    const auto [a, b] = al.ranges[i];
    for (int k = a; k <= b; ++k) s += emb.embeddings.row(k);
    leaf[t.edus[i].id] = s / static_cast<double>(b - a + 1);
  }
  const auto desc = descendant_leaves(t);
  const auto post = postorder_internals(t);
  Matrix out(L + static_cast<int>(post.size()), d);
  for (int i = 0; i < L; ++i) out.row(i) = leaf[t.edus[i].id];
  for (std::size_t i = 0; i < post.size(); ++i) {
    Eigen::RowVectorXd s = Eigen::RowVectorXd::Zero(d);
    for (int id : desc.at(post[i])) s += leaf[id];
    out.row(L + static_cast<int>(i)) = s / static_cast<double>(desc.at(post[i]).size());
  }
  return out;
}

/// Fraction of (positive, negative) pairs ranked correctly, ties counted half.
inline double pairwise_auroc(const std::vector<double>& s, const std::vector<bool>& pos) {
  double good = 0.0;
  double pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!pos[i]) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (pos[j]) continue;
      pairs += 1.0;
      good += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
    }
  }
  return good / pairs;
}

struct ScanResult {
  double tpr = 0.0;
  double fpr = 0.0;
  double threshold = std::numeric_limits<double>::infinity();
};

/// Walks distinct scores from the top, keeping the last threshold whose
/// false-positive rate stays within the cap.
inline ScanResult sort_and_scan(const std::vector<double>& s, const std::vector<bool>& pos, double cap) {
  std::vector<double> sorted = s;
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  double P = 0.0, N = 0.0;
  for (bool b : pos) (b ? P : N) += 1.0;
  ScanResult best;
  for (double t : sorted) {
    double tp = 0.0, fp = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s[i] >= t) (pos[i] ? tp : fp) += 1.0;
    }
    if (fp / N > cap) break;
    best = {tp / P, fp / N, t};
  }
  return best;
}

/// Supervised contrastive loss written out term by term (no log-sum-exp).
inline double supcon(const Matrix& z, const std::vector<int>& y, double tau) {
  const int n = static_cast<int>(z.rows());
  std::vector<Eigen::RowVectorXd> u;
  for (int i = 0; i < n; ++i) u.push_back(z.row(i) / z.row(i).norm());
  double total = 0.0;
  int anchors = 0;
  for (int i = 0; i < n; ++i) {
    double denom = 0.0;
    for (int a = 0; a < n; ++a)
      if (a != i) denom += std::exp(u[i].dot(u[a]) / tau);
    double sum = 0.0;
    int np = 0;
    for (int p = 0; p < n; ++p) {
      if (p == i || y[p] != y[i]) continue;
      sum += std::log(std::exp(u[i].dot(u[p]) / tau) / denom);
      ++np;
    }
    if (np == 0) continue;
    total += -sum / np;
    ++anchors;
  }
  return anchors ? total / anchors : 0.0;
}

inline double cross_entropy(const Matrix& probs, const std::vector<int>& y) {
  double s = 0.0;
  for (int i = 0; i < probs.rows(); ++i) s += -std::log(probs(i, y[i]));
  return s / static_cast<double>(probs.rows());
}

/// Nearest-centroid classifier over relative relation frequencies; scores are
/// negative distances to each class centroid fitted on `train`.
inline Matrix nearest_centroid_scores(const std::vector<race::RelationCounts>& train_x, const std::vector<int>& train_y,
                                      const std::vector<race::RelationCounts>& test_x, int classes) {
  auto rel = [](const race::RelationCounts& c) {
    Eigen::RowVectorXd v(race::kNumRelations);
    double t = 0.0;
    for (double x : c) t += x;
    for (std::size_t j = 0; j < race::kNumRelations; ++j) v(static_cast<int>(j)) = t > 0 ? c[j] / t : 0.0;
    return v;
  };
  Matrix centroids = Matrix::Zero(classes, race::kNumRelations);
  std::vector<double> count(static_cast<std::size_t>(classes), 0.0);
  for (std::size_t i = 0; i < train_x.size(); ++i) {
    centroids.row(train_y[i]) += rel(train_x[i]);
    count[static_cast<std::size_t>(train_y[i])] += 1.0;
  }
  for (int c = 0; c < classes; ++c) centroids.row(c) /= count[static_cast<std::size_t>(c)];
  Matrix scores(static_cast<int>(test_x.size()), classes);
  for (std::size_t i = 0; i < test_x.size(); ++i) {
    const auto v = rel(test_x[i]);
    for (int c = 0; c < classes; ++c) scores(static_cast<int>(i), c) = -(v - centroids.row(c)).norm();
  }
  return scores;
}

/// Relative error between two gradient blocks, scaled by the larger norm.
inline double relative_error(const Matrix& a, const Matrix& b) {
  const double denom = std::max({a.norm(), b.norm(), 1e-12});
  return (a - b).norm() / denom;
}

}  // namespace oracle
