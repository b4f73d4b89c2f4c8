//==============================================================================
// Copyright (c) 2026 The Dara Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//==============================================================================
#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"

#include "dara/backbone.hpp"
#include "dara/pfa.hpp"
#include "test_support.hpp"

using namespace dara;
using numerics::Index;
using numerics::Matrix;
using numerics::Tape;
using numerics::Var;
using testing::error_of;
using testing::grad_check;
using testing::mat;
using testing::random_matrix;

// ---------------------------------------------------------------- backbone

TEST_CASE("backbone zero weights give a zero map") {
  backbone::BackboneParams p;
  p.w1 = Matrix::Zero(3, 4);
  p.b1 = Matrix::Zero(1, 4);
  p.w2 = Matrix::Zero(4, 2);
  p.b2 = Matrix::Zero(1, 2);
  std::mt19937_64 rng(1);
  const Matrix out = backbone::forward(p, random_matrix(rng, 9, 3));
  CHECK(out.rows() == 9);
  CHECK(out.cols() == 2);
  CHECK(out.isZero(0.0));
}

TEST_CASE("backbone identity layers pass nonnegative input through") {
  backbone::BackboneParams p;
  p.w1 = Matrix::Identity(3, 3);
  p.b1 = Matrix::Zero(1, 3);
  p.w2 = Matrix::Identity(3, 3);
  p.b2 = Matrix::Zero(1, 3);
  std::mt19937_64 rng(2);
  const Matrix x = random_matrix(rng, 4, 3, 0.0, 2.0);
  CHECK(backbone::forward(p, x) == x);
}

TEST_CASE("backbone tape and plain forward agree bitwise and are pure") {
  const auto p = backbone::init_params({5, 7, 4}, 11);
  std::mt19937_64 rng(3);
  const Matrix x = random_matrix(rng, 25 * 3, 5);
  const Matrix plain = backbone::forward(p, x);
  Tape tape;
  const Var out = backbone::forward(backbone::bind(tape, p, true), tape.constant(x));
  CHECK(out.value() == plain);
  CHECK(backbone::forward(p, x) == plain);
  CHECK(plain.rows() == 75);
  CHECK(plain.cols() == 4);
}

TEST_CASE("backbone init is seeded and bounded") {
  const auto a = backbone::init_params({8, 16, 8}, 5);
  const auto b = backbone::init_params({8, 16, 8}, 5);
  const auto c = backbone::init_params({8, 16, 8}, 6);
  CHECK(a.w1 == b.w1);
  CHECK(a.w2 == b.w2);
  CHECK(a.w1 != c.w1);
  CHECK(a.w1.cwiseAbs().maxCoeff() <= std::sqrt(6.0 / 24.0));
  CHECK(a.b1.isZero(0.0));
}

TEST_CASE("backbone gradients match finite differences") {
  auto p = backbone::init_params({3, 5, 4}, 21);
  std::mt19937_64 rng(4);
  p.b1 = random_matrix(rng, 1, 5, 0.1, 0.3);  // keep units away from the ReLU kink
  p.b2 = random_matrix(rng, 1, 4, 0.1, 0.3);
  const Matrix x = random_matrix(rng, 6, 3);
  const Matrix readout = random_matrix(rng, 6, 4);
  const auto check = grad_check(
      [&](Tape& t, std::span<const Var> v) {
        const backbone::BackboneVars vars{v[0], v[1], v[2], v[3]};
        const Var out = backbone::forward(vars, t.constant(x));
        return numerics::frobenius_sq(numerics::hadamard(out, t.constant(readout)));
      },
      {p.w1, p.b1, p.w2, p.b2});
  CHECK(check.max_rel_error <= 1e-4);
}

TEST_CASE("backbone rejects broken shapes") {
  auto p = backbone::init_params({3, 5, 4}, 1);
  CHECK(error_of([&] { backbone::forward(p, Matrix::Zero(2, 4)); }) == ErrorCode::kShapeMismatch);
  p.b1 = Matrix::Zero(1, 4);
  CHECK(error_of([&] { p.validate(); }) == ErrorCode::kShapeMismatch);
}

// ---------------------------------------------------------------- recalibration

namespace {

// Direct loop evaluation of the instance weights, independent of the tape.
std::vector<double> weights_oracle(const std::vector<Matrix>& f) {
  const std::size_t k = f.size();
  if (k == 1) return {1.0};
  std::vector<double> a(k, 0.0);
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      if (i == j) continue;
      double dot = 0, ni = 0, nj = 0;
      for (Index e = 0; e < f[i].size(); ++e) {
        dot += f[i].data()[e] * f[j].data()[e];
        ni += f[i].data()[e] * f[i].data()[e];
        nj += f[j].data()[e] * f[j].data()[e];
      }
      a[i] += dot / std::sqrt(ni * nj);
    }
    a[i] /= static_cast<double>(k - 1);
  }
  return a;
}

}  // namespace

TEST_CASE("recalibrate worked example") {
  const std::vector<Matrix> f = {mat({{1, 0}}), mat({{1, 0}}), mat({{0, 1}})};
  const auto r = pfa::recalibrate(f);
  CHECK(r.weights(0, 0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(r.weights(0, 1) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(r.weights(0, 2) == 0.0);
  CHECK(r.pooled(0, 0) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(r.pooled(0, 1) == 0.0);
  CHECK(r.stacked.rows() == 3);
  CHECK(r.stacked.row(2).isZero(0.0));
}

TEST_CASE("recalibrate: identical instances, single instance, disabled") {
  const Matrix v = mat({{1, -2}, {0.5, 3}});
  const std::vector<Matrix> two = {v, v};
  const auto r = pfa::recalibrate(two);
  CHECK(r.weights(0, 0) == doctest::Approx(1.0));
  CHECK(r.weights(0, 1) == doctest::Approx(1.0));
  CHECK((r.pooled - v).cwiseAbs().maxCoeff() <= 1e-15);

  const std::vector<Matrix> one = {v};
  const auto s = pfa::recalibrate(one);
  CHECK(s.weights(0, 0) == 1.0);
  CHECK(s.stacked == v);

  const std::vector<Matrix> three = {v, -v, 2 * v};
  const auto off = pfa::recalibrate(three, {.enabled = false});
  CHECK(off.weights.isOnes(0.0));
  CHECK((off.pooled - (2.0 / 3.0) * v).cwiseAbs().maxCoeff() <= 1e-15);
}

TEST_CASE("recalibrate matches the loop oracle, keeps negatives, clamps on request") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Matrix> f;
    const int k = 2 + trial % 4;
    for (int i = 0; i < k; ++i) f.push_back(random_matrix(rng, 3, 2));
    const auto r = pfa::recalibrate(f);
    const auto a = weights_oracle(f);
    Matrix pooled = Matrix::Zero(3, 2);
    for (int i = 0; i < k; ++i) {
      CHECK(r.weights(0, i) == doctest::Approx(a[i]).epsilon(1e-12));
      pooled += a[i] * f[i];
    }
    pooled /= k;
    CHECK((r.pooled - pooled).cwiseAbs().maxCoeff() <= 1e-12);
    const auto c = pfa::recalibrate(f, {.enabled = true, .clamp_negative = true});
    for (int i = 0; i < k; ++i) CHECK(c.weights(0, i) == std::max(0.0, r.weights(0, i)));
  }
  const std::vector<Matrix> opposite = {mat({{1, 0}}), mat({{-1, 0}})};
  CHECK(pfa::recalibrate(opposite).weights(0, 0) == doctest::Approx(-1.0));
}

TEST_CASE("recalibrate is scale invariant and permutation equivariant") {
  std::mt19937_64 rng(8);
  std::vector<Matrix> f;
  for (int i = 0; i < 4; ++i) f.push_back(random_matrix(rng, 2, 3));
  const auto base = pfa::recalibrate(f);

  std::vector<Matrix> scaled;
  for (const auto& m : f) scaled.push_back(3.7 * m);
  const auto s = pfa::recalibrate(scaled);
  CHECK((s.weights - base.weights).cwiseAbs().maxCoeff() <= 1e-14);

  const std::vector<int> perm = {2, 0, 3, 1};
  std::vector<Matrix> permuted;
  for (int i : perm) permuted.push_back(f[i]);
  const auto p = pfa::recalibrate(permuted);
  for (int i = 0; i < 4; ++i) {
    CHECK(p.weights(0, i) == doctest::Approx(base.weights(0, perm[i])).epsilon(1e-14));
  }
  CHECK((p.pooled - base.pooled).cwiseAbs().maxCoeff() <= 1e-14);
}

TEST_CASE("recalibrate rejects zero-norm features") {
  const std::vector<Matrix> f = {mat({{1, 0}}), mat({{0, 0}})};
  CHECK(error_of([&] { pfa::recalibrate(f); }) == ErrorCode::kZeroNormFeature);
}

TEST_CASE("recalibration gradients match finite differences") {
  std::mt19937_64 rng(9);
  std::vector<Matrix> f;
  for (int i = 0; i < 3; ++i) f.push_back(random_matrix(rng, 2, 3));
  const Matrix readout = random_matrix(rng, 6, 3);
  const auto check = grad_check(
      [&](Tape& t, std::span<const Var> v) {
        const auto pool = pfa::recalibrate(v);
        return numerics::frobenius_sq(numerics::hadamard(pool.stacked, t.constant(readout)));
      },
      f);
  CHECK(check.max_rel_error <= 1e-4);
}

// ---------------------------------------------------------------- ridge

TEST_CASE("ridge worked example against the gradient-descent oracle") {
  const Matrix q = mat({{2, 1}});
  const Matrix p = Matrix::Identity(2, 2);
  const Matrix recon = pfa::ridge_reconstruct(p, q, 1.0);
  const Matrix oracle = testing::ridge_gd_oracle(p, q, 1.0);
  CHECK((oracle - mat({{1.0, 0.5}})).cwiseAbs().maxCoeff() <= 1e-10);
  CHECK((recon - oracle).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("ridge matches the oracle on random instances") {
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 12; ++trial) {
    const Index rows = 2 + trial % 6;
    const Index c = 3 + trial % 5;
    const double lambda = std::array{0.1, 1.0, 10.0}[trial % 3];
    const Matrix p = random_matrix(rng, rows, c);
    const Matrix q = random_matrix(rng, 3, c);
    const Matrix diff = pfa::ridge_reconstruct(p, q, lambda) - testing::ridge_gd_oracle(p, q, lambda);
    CHECK(diff.cwiseAbs().maxCoeff() <= 1e-6);
  }
}

TEST_CASE("ridge limits in lambda") {
  std::mt19937_64 rng(11);
  const Matrix p = random_matrix(rng, 4, 4) + 3.0 * Matrix::Identity(4, 4);
  const Matrix q = random_matrix(rng, 5, 4);
  CHECK((pfa::ridge_reconstruct(p, q, 0.0) - q).cwiseAbs().maxCoeff() <= 1e-8);
  CHECK(pfa::ridge_reconstruct(p, q, 1e9).cwiseAbs().maxCoeff() <= 1e-7);
  double prev = INFINITY;
  for (double lambda : {0.0, 0.01, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0, 100.0, 1000.0}) {
    const double n = pfa::ridge_reconstruct(p, q, lambda).norm();
    CHECK(n <= prev);
    prev = n;
  }
}

TEST_CASE("ridge stacked queries equal one-by-one reconstruction") {
  std::mt19937_64 rng(12);
  const Matrix p = random_matrix(rng, 6, 3);
  const Matrix q1 = random_matrix(rng, 2, 3);
  const Matrix q2 = random_matrix(rng, 2, 3);
  Matrix q(4, 3);
  q << q1, q2;
  const Matrix both = pfa::ridge_reconstruct(p, q, 0.7);
  CHECK((both.topRows(2) - pfa::ridge_reconstruct(p, q1, 0.7)).cwiseAbs().maxCoeff() <= 1e-14);
  CHECK((both.bottomRows(2) - pfa::ridge_reconstruct(p, q2, 0.7)).cwiseAbs().maxCoeff() <= 1e-14);
}

TEST_CASE("ridge errors") {
  CHECK(error_of([] { pfa::ridge_reconstruct(Matrix::Zero(2, 2), Matrix::Ones(1, 2), 0.0); }) ==
        ErrorCode::kNotPositiveDefinite);
  CHECK(error_of([] { pfa::ridge_reconstruct(Matrix::Ones(2, 2), Matrix::Ones(1, 3), 1.0); }) ==
        ErrorCode::kShapeMismatch);
}

TEST_CASE("ridge lambda rule") {
  CHECK(pfa::ridge_lambda(125, 8, 1.0) == doctest::Approx(125.0 / 8.0));
  CHECK(pfa::ridge_lambda(25, 64, 0.5) == doctest::Approx(25.0 / 64.0 * 0.5));
  CHECK(pfa::ridge_lambda(4, 2, 1.0) > 0.0);
}

// ---------------------------------------------------------------- measurement

TEST_CASE("measure examples") {
  const auto unit = pfa::MeasurementParams::for_cells(4);
  CHECK(unit.gamma() / 4.0 == doctest::Approx(1.0));
  const Matrix even = pfa::measure(mat({{3, 3}}), unit, 4);
  CHECK(even(0, 0) == doctest::Approx(0.5));
  CHECK(even(0, 1) == doctest::Approx(0.5));
  const Matrix dominant = pfa::measure(mat({{0, 40}}), unit, 4);
  CHECK(std::abs(dominant(0, 0) - 1.0) <= 1e-6);
  CHECK(std::abs(dominant(0, 1)) <= 1e-6);
  const Matrix shifted = pfa::measure(mat({{1.5, 2.5, 0.25}}).array() + 17.0, unit, 4);
  CHECK((shifted - pfa::measure(mat({{1.5, 2.5, 0.25}}), unit, 4)).cwiseAbs().maxCoeff() <=
        1e-12);
}

TEST_CASE("measure rows are distributions whose argmax is the distance argmin") {
  std::mt19937_64 rng(13);
  const Matrix d = random_matrix(rng, 40, 5, 0.0, 10.0);
  const pfa::MeasurementParams params{0.3};
  const Matrix p = pfa::measure(d, params, 9);
  const auto pred = pfa::predict(d);
  for (Index i = 0; i < d.rows(); ++i) {
    CHECK(std::abs(p.row(i).sum() - 1.0) <= 1e-9);
    CHECK(p.row(i).minCoeff() >= 0.0);
    Index arg = 0;
    p.row(i).maxCoeff(&arg);
    CHECK(arg == pred[i]);
  }
  CHECK(pfa::predict(mat({{2, 1, 1}, {0, 0, 0}})) == std::vector<int>{1, 0});
}

TEST_CASE("cross entropy equals the hand computation") {
  const Matrix logits = mat({{1, 2, 0}, {0, 0, 3}});
  const std::vector<int> labels = {1, 0};
  Tape tape;
  const double loss = pfa::cross_entropy(tape.constant(logits), labels).item();
  const double row0 = -(2.0 - std::log(std::exp(1.0) + std::exp(2.0) + 1.0));
  const double row1 = -(0.0 - std::log(2.0 + std::exp(3.0)));
  CHECK(loss == doctest::Approx((row0 + row1) / 2).epsilon(1e-14));
}

TEST_CASE("measurement loss gradients through the solve match finite differences") {
  std::mt19937_64 rng(14);
  const Index cells = 2;
  const std::vector<int> labels = {0, 1, 1};
  const Matrix q = random_matrix(rng, 3 * cells, 3);
  const auto check = grad_check(
      [&](Tape& t, std::span<const Var> v) {
        const Var pools[] = {v[0], v[1]};
        const Var d = pfa::pool_distances(pools, t.constant(q), cells, 0.5);
        return pfa::cross_entropy(pfa::measure_logits(d, v[2], cells), labels);
      },
      {random_matrix(rng, 4, 3), random_matrix(rng, 4, 3), mat({{0.2}})});
  CHECK(check.max_rel_error <= 1e-4);
}

// ---------------------------------------------------------------- reprojection prototypes

TEST_CASE("reprojection prototypes start as bitwise copies") {
  std::mt19937_64 rng(15);
  const std::vector<Matrix> pools = {random_matrix(rng, 6, 3), random_matrix(rng, 6, 3)};
  const auto z = pfa::init_reprojection(pools);
  const Matrix q = random_matrix(rng, 3, 3);
  for (std::size_t n = 0; n < pools.size(); ++n) {
    CHECK(z[n] == pools[n]);
    CHECK(pfa::ridge_reconstruct(z[n], q, 0.4) == pfa::ridge_reconstruct(pools[n], q, 0.4));
  }
}

TEST_CASE("one gradient step on the prototypes lowers the loss; zero step keeps them") {
  // Two well separated classes, two queries each.
  std::mt19937_64 rng(16);
  const Index cells = 3;
  const Matrix mean0 = random_matrix(rng, cells, 4, 0.5, 1.5);
  const Matrix mean1 = -mean0;
  std::vector<Matrix> queries;
  for (int i = 0; i < 2; ++i) queries.push_back(mean0 + 0.1 * random_matrix(rng, cells, 4));
  for (int i = 0; i < 2; ++i) queries.push_back(mean1 + 0.1 * random_matrix(rng, cells, 4));
  Matrix q(4 * cells, 4);
  for (int i = 0; i < 4; ++i) q.middleRows(i * cells, cells) = queries[i];
  const std::vector<int> labels = {0, 0, 1, 1};
  std::vector<Matrix> z = {mean0 + 0.5 * random_matrix(rng, cells, 4),
                           mean1 + 0.5 * random_matrix(rng, cells, 4)};
  const double log_gamma = std::log(static_cast<double>(cells));

  auto loss_and_grads = [&](const std::vector<Matrix>& zs) {
    Tape t;
    const Var vars[] = {t.parameter(zs[0]), t.parameter(zs[1])};
    const Var d = pfa::pool_distances(vars, t.constant(q), cells, 1.0);
    const Var loss = pfa::cross_entropy(
        pfa::measure_logits(d, t.constant(Matrix::Constant(1, 1, log_gamma)), cells), labels);
    t.backward(loss);
    return std::pair{loss.item(), std::vector<Matrix>{t.grad(vars[0]), t.grad(vars[1])}};
  };
  const auto [before, grads] = loss_and_grads(z);
  auto stepped = z;
  for (int n = 0; n < 2; ++n) stepped[n] -= 0.0 * grads[n];
  CHECK(stepped[0] == z[0]);
  CHECK(stepped[1] == z[1]);
  for (int n = 0; n < 2; ++n) stepped[n] -= 0.01 * grads[n];
  CHECK(loss_and_grads(stepped).first < before);
}
