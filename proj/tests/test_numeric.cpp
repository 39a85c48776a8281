/*
   Copyright 2026 calcap authors

   Licensed under the Apache License, Version 2.0 (the "License");
   you may not use this file except in compliance with the License.
   You may obtain a copy of the License at

       http://www.apache.org/licenses/LICENSE-2.0

   Unless required by applicable law or agreed to in writing, software
   distributed under the License is distributed on an "AS IS" BASIS,
   WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
   See the License for the specific language governing permissions and
   limitations under the License.
*/

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>

#include "calcap/errors.hpp"
#include "calcap/numeric.hpp"
#include "calcap/parameter_store.hpp"
#include "calcap/rng.hpp"
#include "calcap/tape.hpp"

using namespace calcap;

TEST_CASE("softmax matches hand values and stays normalized") {
  auto p = softmax(std::vector<double>{0, 0, 0});
  CHECK(p[0] == doctest::Approx(1.0 / 3).epsilon(1e-14));
  CHECK(p[1] == doctest::Approx(1.0 / 3).epsilon(1e-14));

  auto q = softmax(std::vector<double>{8, 3});
  CHECK(q[0] == doctest::Approx(0.993307149075715).epsilon(1e-9));
  CHECK(q[1] == doctest::Approx(0.006692850924285).epsilon(1e-9));

  SeededRng rng(11);
  for (int it = 0; it < 200; ++it) {
    std::vector<double> logits(1 + rng.uniform_index(40));
    for (double& v : logits) v = rng.uniform(-30, 30);
    auto out = softmax(logits);
    double sum = std::accumulate(out.begin(), out.end(), 0.0);
    CHECK(std::abs(sum - 1.0) <= 1e-12);
    for (double v : out) CHECK(v >= 0.0);
  }
}

TEST_CASE("softmax shift invariance is bitwise for exact shifts") {
  std::vector<double> a{1, 2, 3, -5};
  std::vector<double> b{1 + 4.0, 2 + 4.0, 3 + 4.0, -5 + 4.0};
  auto pa = softmax(a);
  auto pb = softmax(b);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(pa[i] == pb[i]);
}

TEST_CASE("softmax rejects non-finite and empty input") {
  CHECK_THROWS_AS(softmax(std::vector<double>{1.0, NAN}), NumericError);
  CHECK_THROWS_AS(softmax(std::vector<double>{}), NumericError);
}

TEST_CASE("cosine similarity hand values") {
  CHECK(cosine_similarity(std::vector<double>{1, 0}, std::vector<double>{1, 0}) ==
        doctest::Approx(1.0));
  CHECK(cosine_similarity(std::vector<double>{1, 0}, std::vector<double>{0, 1}) ==
        doctest::Approx(0.0));
  CHECK(cosine_similarity(std::vector<double>{1, 1}, std::vector<double>{1, 0}) ==
        doctest::Approx(0.7071067811865475).epsilon(1e-12));
  CHECK_THROWS_AS(
      cosine_similarity(std::vector<double>{1}, std::vector<double>{1, 2}),
      NumericError);
  bool zero = false;
  CHECK(cosine_similarity(std::vector<double>{0, 0}, std::vector<double>{1, 0},
                          &zero) == 0.0);
  CHECK(zero);
}

TEST_CASE("sym_eigenvalues on hand matrices") {
  auto id2 = DenseArray::matrix(2, 2, {1, 0, 0, 1});
  auto e = sym_eigenvalues(id2);
  CHECK(e[0] == doctest::Approx(1.0));
  CHECK(e[1] == doctest::Approx(1.0));

  auto d = DenseArray::matrix(2, 2, {3, 0, 0, 1});
  e = sym_eigenvalues(d);
  CHECK(e[0] == doctest::Approx(3.0));
  CHECK(e[1] == doctest::Approx(1.0));

  auto m = DenseArray::matrix(2, 2, {2, 1, 1, 2});
  e = sym_eigenvalues(m);
  CHECK(e[0] == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(e[1] == doctest::Approx(1.0).epsilon(1e-12));

  auto bad = DenseArray::matrix(2, 2, {2, 1, 0, 2});
  CHECK_THROWS_AS(sym_eigenvalues(bad), NumericError);
}

TEST_CASE("sym_eigenvalues trace and Frobenius identities") {
  SeededRng rng(5);
  for (int it = 0; it < 50; ++it) {
    std::size_t n = 2 + rng.uniform_index(31);
    DenseArray m = DenseArray::zeros({n, n});
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i; j < n; ++j) {
        double v = rng.uniform(-2, 2);
        m.at(i, j) = v;
        m.at(j, i) = v;
      }
    auto eig = sym_eigenvalues(m);
    double trace = 0.0, frob2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) trace += m.at(i, i);
    for (double v : m.data) frob2 += v * v;
    double esum = std::accumulate(eig.begin(), eig.end(), 0.0);
    double e2 = 0.0;
    for (double v : eig) e2 += v * v;
    CHECK(std::abs(esum - trace) <= 1e-9 * std::max(1.0, std::abs(trace)));
    CHECK(std::abs(std::sqrt(e2) - std::sqrt(frob2)) <= 1e-8);
  }
}

TEST_CASE("sym_eigenvalues clamps tiny negatives on PSD input") {
  SeededRng rng(9);
  std::size_t n = 6;
  // Rank-deficient PSD: sum of 3 outer products.
  DenseArray m = DenseArray::zeros({n, n});
  for (int r = 0; r < 3; ++r) {
    std::vector<double> v(n);
    for (double& x : v) x = rng.uniform(-1, 1);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) m.at(i, j) += v[i] * v[j];
  }
  for (double lam : sym_eigenvalues(m)) CHECK(lam >= 0.0);
}

TEST_CASE("sample_categorical honors the distribution and determinism") {
  SeededRng rng(42);
  std::vector<double> degenerate{1, 0, 0};
  for (int i = 0; i < 20; ++i) CHECK(sample_categorical(degenerate, rng) == 0);

  std::vector<double> fair{0.5, 0.5};
  int zeros = 0;
  for (int i = 0; i < 10000; ++i)
    if (sample_categorical(fair, rng) == 0) ++zeros;
  double frac = zeros / 10000.0;
  CHECK(frac >= 0.47);
  CHECK(frac <= 0.53);

  SeededRng r1(42), r2(42);
  std::vector<double> probs{0.2, 0.3, 0.5};
  for (int i = 0; i < 100; ++i)
    CHECK(sample_categorical(probs, r1) == sample_categorical(probs, r2));

  CHECK_THROWS_AS(sample_categorical(std::vector<double>{-0.1, 1.1}, rng),
                  NumericError);
  CHECK_THROWS_AS(sample_categorical(std::vector<double>{0.4, 0.4}, rng),
                  NumericError);
}

TEST_CASE("SeededRng streams are reproducible and forks are independent") {
  SeededRng a(7), b(7);
  for (int i = 0; i < 1000; ++i) CHECK(a.next_u64() == b.next_u64());

  SeededRng base(3);
  auto f1 = base.fork(1);
  auto f2 = base.fork(2);
  CHECK(f1.next_u64() != f2.next_u64());

  SeededRng c(99);
  c.next_u64();
  auto snap = c.state();
  double x = c.uniform();
  c.restore(snap);
  CHECK(c.uniform() == x);
}

TEST_CASE("grad_check on closed forms") {
  auto square = [](const std::vector<double>& p) {
    GradProbe g;
    g.loss = p[0] * p[0];
    g.grad = {2 * p[0]};
    return g;
  };
  CHECK(grad_check(square, {3.0}, 1e-5) < 1e-8);

  auto constant = [](const std::vector<double>& p) {
    GradProbe g;
    g.loss = 4.2;
    g.grad.assign(p.size(), 0.0);
    return g;
  };
  CHECK(grad_check(constant, {1.0, -2.0, 0.5}, 1e-4) < 1e-12);

  CHECK_THROWS_AS(grad_check(square, {3.0}, 0.5), NumericError);
}

namespace {

// Flattens a point vector into tape leaves and runs a composite using
// most of the op set, so central differences exercise every backward
// rule in one pass.
GradProbe composite_probe(const std::vector<double>& p) {
  Tape t;
  // p layout: W (3x4) = 12, x (4), y (3), table (5x2) = 10  -> 29 values
  DenseArray W = DenseArray::matrix(3, 4, {p.begin(), p.begin() + 12});
  DenseArray x = DenseArray::vector({p.begin() + 12, p.begin() + 16});
  DenseArray y = DenseArray::vector({p.begin() + 16, p.begin() + 19});
  DenseArray tab = DenseArray::matrix(5, 2, {p.begin() + 19, p.begin() + 29});

  NodeId w_id = t.leaf(W);
  NodeId x_id = t.leaf(x);
  NodeId y_id = t.leaf(y);
  NodeId tab_id = t.leaf(tab);

  NodeId v = t.matvec(w_id, x_id);           // (3)
  NodeId s = t.sigmoid(v);
  NodeId th = t.tanh(y_id);
  NodeId m = t.mul(s, th);
  NodeId a = t.add(m, y_id);
  NodeId sc = t.scale(a, 1.7);
  NodeId lsm = t.log_softmax(sc);
  NodeId p0 = t.pick(lsm, 1);

  NodeId row = t.embed_row(tab_id, 3);       // (2)
  NodeId row2 = t.embed_row(tab_id, 1);
  NodeId cs = t.cosine(row, row2);
  NodeId d = t.dot(row, row2);

  NodeId cat = t.concat(row, row2);          // (4)
  NodeId sl = t.slice(cat, 1, 2);
  NodeId sm = t.softmax(sl);
  NodeId p1 = t.pick(sm, 0);
  NodeId cl = t.clamp_max(p1, 1.0 - 1e-12);
  NodeId lg = t.log(cl);

  std::vector<NodeId> scalars{p0, cs, d, lg};
  std::vector<double> weights{0.5, -1.25, 0.75, 0.3};
  NodeId loss = t.weighted_sum(scalars, weights);
  t.backward(loss);

  GradProbe out;
  out.loss = t.value(loss).data[0];
  out.grad.reserve(p.size());
  auto push_grad = [&](NodeId id) {
    const DenseArray& g = t.grad(id);
    out.grad.insert(out.grad.end(), g.data.begin(), g.data.end());
  };
  push_grad(w_id);
  push_grad(x_id);
  push_grad(y_id);
  push_grad(tab_id);
  return out;
}

}  // namespace

TEST_CASE("tape backward matches central differences across the op set") {
  SeededRng rng(17);
  std::vector<double> point(29);
  for (double& v : point) v = rng.uniform(-0.9, 0.9);
  CHECK(grad_check(composite_probe, point, 1e-5) < 1e-7);
}

TEST_CASE("tape mask_fill zeroes masked probabilities and gradients") {
  Tape t;
  NodeId x = t.leaf(DenseArray::vector({1.0, 2.0, 3.0, 4.0}));
  std::vector<std::size_t> mask{0, 2};
  NodeId masked = t.mask_fill(x, mask);
  NodeId sm = t.softmax(masked);
  const auto& p = t.value(sm).data;
  CHECK(p[0] == 0.0);
  CHECK(p[2] == 0.0);
  CHECK(p[1] + p[3] == doctest::Approx(1.0).epsilon(1e-12));

  NodeId picked = t.pick(sm, 1);
  t.backward(picked);
  const auto& gx = t.grad(x).data;
  CHECK(gx[0] == 0.0);
  CHECK(gx[2] == 0.0);
  CHECK(gx[1] != 0.0);
}

TEST_CASE("tape cosine drops gradient on zero-norm input") {
  Tape t;
  NodeId a = t.leaf(DenseArray::vector({0.0, 0.0}));
  NodeId b = t.leaf(DenseArray::vector({1.0, 2.0}));
  NodeId c = t.cosine(a, b);
  CHECK(t.value(c).data[0] == 0.0);
  CHECK(t.zero_norm_events() == 1);
  t.backward(c);
  CHECK(t.grad(b).data.empty());  // untouched: no gradient path
}

TEST_CASE("parameter store updates, hashing, isolation") {
  ParameterStore ps;
  ps.create("w", {2, 2});
  ps.create("b", {2});
  SeededRng rng(1);
  ps.init_uniform(rng, 0.08);
  auto h0 = ps.value_hash();

  ps.zero_grads();
  ps.grad("w").data = {1, 1, 1, 1};
  ps.sgd_step(0.0);
  CHECK(ps.value_hash() == h0);  // lr 0 leaves values untouched

  ps.sgd_step(0.1);
  CHECK(ps.value_hash() != h0);

  ps.grad("b").data[0] = NAN;
  CHECK_THROWS_AS(ps.sgd_step(0.1), NumericError);
  CHECK_THROWS_AS(ps.create("w", {1}), DataError);
}
