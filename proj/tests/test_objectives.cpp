#include <doctest.h>

#include <cmath>
#include <numeric>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "race/model.hpp"
#include "race/objectives.hpp"

using namespace race;
using fixture::kind_of;

namespace {

Matrix random_probs(Rng& rng, int n, int c) {
  return softmax_rows(oracle::random_matrix(rng, n, c, 2.0));
}

std::vector<int> random_labels(Rng& rng, int n, int c) {
  std::vector<int> y(static_cast<std::size_t>(n));
  for (int& v : y) v = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(c)));
  return y;
}

}  // namespace

TEST_CASE("supervised contrastive loss examples") {
  Matrix same(2, 3);
  same << 1, 2, 3, 1, 2, 3;
  CHECK(std::abs(supcon_loss(same, {0, 0}, 0.07)) < 1e-12);

  Rng rng(1);
  const Matrix z = oracle::random_matrix(rng, 4, 5);
  CHECK(supcon_loss(z, {0, 1, 2, 3}, 0.07) == 0.0);

  Matrix fixed(4, 3);
  fixed << 1, 0.2, 0, 0.9, 0.1, 0.3, -0.2, 1, 0.5, 0.1, 0.8, 1;
  CHECK(std::abs(supcon_loss(fixed, {0, 0, 1, 1}, 0.07) - oracle::supcon(fixed, {0, 0, 1, 1}, 0.07)) < 1e-8);
  CHECK(std::abs(supcon_loss(fixed, {0, 0, 1, 1}, 0.5) - oracle::supcon(fixed, {0, 0, 1, 1}, 0.5)) < 1e-8);

  CHECK(kind_of([&] { supcon_loss(fixed.topRows(1), {0}, 0.07); }) == ErrorKind::BatchTooSmall);
}

TEST_CASE("supervised contrastive loss against the literal oracle") {
  Rng rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 2 + static_cast<int>(rng.uniform_index(12));
    const Matrix z = oracle::random_matrix(rng, n, 6);
    const auto y = random_labels(rng, n, 4);
    const double tau = trial % 2 ? 0.07 : 0.5;
    const double got = supcon_loss(z, y, tau);
    CHECK(got >= 0.0);
    CHECK(std::abs(got - oracle::supcon(z, y, tau)) < 1e-8 * std::max(1.0, got));

    // Reordering the batch and positive rescaling change nothing.
    std::vector<int> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    Matrix pz(n, 6);
    std::vector<int> py(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      pz.row(i) = z.row(perm[i]) * (0.1 + 10.0 * rng.uniform01());
      py[i] = y[perm[i]];
    }
    CHECK(std::abs(supcon_loss(pz, py, tau) - got) < 1e-10 * std::max(1.0, got));
  }
}

TEST_CASE("contrastive loss falls as classes separate") {
  Rng rng(3);
  const int per = 6;
  const Matrix noise = oracle::random_matrix(rng, 4 * per, 4);
  std::vector<int> y;
  for (int c = 0; c < 4; ++c)
    for (int i = 0; i < per; ++i) y.push_back(c);
  double prev = std::numeric_limits<double>::infinity();
  for (double sep : {0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 64.0}) {
    Matrix z = noise;
    for (int i = 0; i < 4 * per; ++i) z(i, y[i]) += sep;
    const double l = supcon_loss(z, y, 0.07);
    CHECK(l < prev);
    prev = l;
  }
  // Identical within class and orthogonal across: only the within-class
  // partition remains, log(per - 1) at the limit.
  Matrix ideal = Matrix::Zero(4 * per, 4);
  for (int i = 0; i < 4 * per; ++i) ideal(i, y[i]) = 1.0;
  const double floor_value = std::log(static_cast<double>(per - 1));
  CHECK(std::abs(supcon_loss(ideal, y, 0.07) - floor_value) < 1e-4);
  CHECK(prev >= floor_value - 1e-9);
}

TEST_CASE("cross entropy") {
  Matrix onehot = Matrix::Zero(3, 4);
  onehot(0, 2) = onehot(1, 0) = onehot(2, 3) = 1.0;
  CHECK(ce_loss(onehot, {2, 0, 3}) == 0.0);
  CHECK(std::abs(ce_loss(Matrix::Constant(5, 4, 0.25), {0, 1, 2, 3, 0}) - std::log(4.0)) < 1e-12);
  CHECK(std::abs(ce_loss(onehot, {1, 0, 3}) - (-std::log(kProbabilityFloor)) / 3) < 1e-9);

  Rng rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 1 + static_cast<int>(rng.uniform_index(20));
    const Matrix p = random_probs(rng, n, 4);
    const auto y = random_labels(rng, n, 4);
    CHECK(std::abs(ce_loss(p, y) - oracle::cross_entropy(p, y)) < 1e-12);
  }
}

TEST_CASE("total loss") {
  Rng rng(5);
  const Matrix z = oracle::random_matrix(rng, 4, 3);
  const Matrix p = random_probs(rng, 4, 4);
  Batch b{z, p, {0, 1, 2, 3}};
  CHECK(total_loss(b, 0.07) == ce_loss(b));

  b.labels = {0, 0, 1, 1};
  const double want = oracle::supcon(z, b.labels, 0.07) + oracle::cross_entropy(p, b.labels);
  CHECK(std::abs(total_loss(b, 0.07) - want) < 1e-8);
  CHECK(std::abs(total_loss(b, 0.07, 0.0) - ce_loss(b)) < 1e-15);

  Matrix onehot = Matrix::Zero(2, 4);
  onehot(0, 1) = onehot(1, 1) = 1.0;
  Matrix same(2, 2);
  same << 1, 1, 1, 1;
  CHECK(std::abs(total_loss(Batch{same, onehot, {1, 1}}, 0.07)) < 1e-12);
}

TEST_CASE("loss gradients match finite differences") {
  Rng rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 2 + static_cast<int>(rng.uniform_index(7));
    Matrix z = oracle::random_matrix(rng, n, 4);
    Matrix logits = oracle::random_matrix(rng, n, 4);
    const auto y = random_labels(rng, n, 3);
    const double tau = 0.3;
    const double w = trial % 3 ? 1.0 : 0.5;
    const LossGradients g = total_loss_with_grad(z, logits, y, tau, w);
    CHECK(std::abs(g.total - (w * g.contrastive + g.cross_entropy)) < 1e-12);
    CHECK(std::abs(g.total - total_loss(Batch{z, softmax_rows(logits), y}, tau, w)) < 1e-10);

    auto value = [&] { return total_loss_with_grad(z, logits, y, tau, w).total; };
    const double h = 1e-6;
    for (Matrix* m : {&z, &logits}) {
      Matrix numeric(m->rows(), m->cols());
      for (Eigen::Index i = 0; i < m->size(); ++i) {
        const double orig = m->data()[i];
        m->data()[i] = orig + h;
        const double up = value();
        m->data()[i] = orig - h;
        const double down = value();
        m->data()[i] = orig;
        numeric.data()[i] = (up - down) / (2 * h);
      }
      CHECK(oracle::relative_error(m == &z ? g.d_embeddings : g.d_logits, numeric) < 1e-6);
    }
  }
}

TEST_CASE("row normalization") {
  Matrix x(2, 2);
  x << 3, 4, 0, 0;
  const Matrix n = l2_normalize_rows(x);
  CHECK(n(0, 0) == doctest::Approx(0.6));
  CHECK(n(0, 1) == doctest::Approx(0.8));
  CHECK(n.row(1).isZero());
}
