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
#include "dara/nda.hpp"

#include <cmath>
#include <string>

#include "dara/error.hpp"

namespace dara::nda {

namespace {

void require_channels(Index got, Index want, const char* what) {
  if (got != want) {
    fail(ErrorCode::kChannelMismatch, std::string(what) + ": expected " + std::to_string(want) +
                                          " channels, got " + std::to_string(got));
  }
}

Matrix row_broadcast(const Matrix& row, Index rows) { return row.replicate(rows, 1); }

Matrix standardize(const Matrix& x, const Matrix& mean, const Matrix& var, double eps) {
  const Matrix inv = (var.array() + eps).sqrt().inverse().matrix();
  return ((x - row_broadcast(mean, x.rows())).array() * row_broadcast(inv, x.rows()).array())
      .matrix();
}

ChannelAffine affine(const Matrix& mean_from, const Matrix& var_from, const Matrix& mean_to,
                     const Matrix& var_to, double eps) {
  ChannelAffine a;
  a.scale = ((var_to.array() + eps).sqrt() / (var_from.array() + eps).sqrt()).matrix();
  a.shift = (mean_to.array() - mean_from.array() * a.scale.array()).matrix();
  return a;
}

Matrix apply(const Matrix& x, const ChannelAffine& a) {
  return (x.array() * row_broadcast(a.scale, x.rows()).array() +
          row_broadcast(a.shift, x.rows()).array())
      .matrix();
}

Var apply(const Var& x, const ChannelAffine& a) {
  Tape& tape = *x.tape();
  return numerics::add(numerics::hadamard(x, tape.constant(a.scale)), tape.constant(a.shift));
}

}  // namespace

ChannelStats bn_stats(std::span<const Matrix> batch) {
  if (batch.empty()) fail(ErrorCode::kInvalidArgument, "bn_stats needs at least one item");
  const Index c = batch.front().cols();
  Matrix sum = Matrix::Zero(1, c);
  Index n = 0;
  for (const Matrix& m : batch) {
    require_channels(m.cols(), c, "bn_stats");
    sum += m.colwise().sum();
    n += m.rows();
  }
  ChannelStats s;
  s.mean = sum / static_cast<double>(n);
  Matrix sq = Matrix::Zero(1, c);
  for (const Matrix& m : batch) {
    sq += (m - row_broadcast(s.mean, m.rows())).array().square().matrix().colwise().sum();
  }
  s.var = sq / static_cast<double>(n);
  return s;
}

ChannelStats in_stats(const Matrix& item) {
  const Matrix one[] = {item};
  return bn_stats(one);
}

ChannelStats TanStats::average_in() const {
  return {in_mean.colwise().mean(), in_var.colwise().mean()};
}

TanStats tan_stats(std::span<const Matrix> batch, double eps) {
  if (!(eps > 0.0)) fail(ErrorCode::kInvalidArgument, "eps must be > 0");
  if (batch.empty()) fail(ErrorCode::kInvalidArgument, "tan_stats needs at least one item");
  for (const Matrix& m : batch) {
    if (m.rows() != batch.front().rows() || m.cols() != batch.front().cols()) {
      fail(ErrorCode::kShapeMismatch, "tan_stats: items of shape " +
                                          numerics::shape_string(batch.front()) + " and " +
                                          numerics::shape_string(m));
    }
  }
  TanStats t;
  t.eps = eps;
  t.bn = bn_stats(batch);
  const Index b = static_cast<Index>(batch.size());
  t.in_mean.resize(b, t.bn.mean.cols());
  t.in_var.resize(b, t.bn.mean.cols());
  for (Index i = 0; i < b; ++i) {
    const ChannelStats s = in_stats(batch[static_cast<std::size_t>(i)]);
    t.in_mean.row(i) = s.mean;
    t.in_var.row(i) = s.var;
  }
  return t;
}

std::vector<Branches> tan_normalize(std::span<const Matrix> items, const TanStats& stats,
                                    InPairing pairing) {
  if (pairing == InPairing::kItemWise &&
      static_cast<Index>(items.size()) != stats.in_mean.rows()) {
    fail(ErrorCode::kShapeMismatch, "item-wise IN pairing needs " +
                                        std::to_string(stats.in_mean.rows()) + " items, got " +
                                        std::to_string(items.size()));
  }
  const ChannelStats avg = stats.average_in();
  std::vector<Branches> out;
  out.reserve(items.size());
  for (std::size_t i = 0; i < items.size(); ++i) {
    const Matrix& x = items[i];
    require_channels(x.cols(), stats.channels(), "tan_normalize");
    Branches br;
    br.bn = standardize(x, stats.bn.mean, stats.bn.var, stats.eps);
    if (pairing == InPairing::kItemWise) {
      const Index r = static_cast<Index>(i);
      br.in = standardize(x, stats.in_mean.row(r), stats.in_var.row(r), stats.eps);
    } else {
      br.in = standardize(x, avg.mean, avg.var, stats.eps);
    }
    out.push_back(std::move(br));
  }
  return out;
}

void GateParams::validate(Index channels) const {
  if (mode == GateMode::kFixed) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) {
      fail(ErrorCode::kConfig, "fixed gate alpha must lie in [0, 1]");
    }
    return;
  }
  if (w.rows() != 1 || w.cols() != channels) {
    fail(ErrorCode::kChannelMismatch, "gate weight has shape " + numerics::shape_string(w) +
                                          ", expected 1x" + std::to_string(channels));
  }
  if (!w.allFinite() || !std::isfinite(b)) {
    fail(ErrorCode::kInvalidArgument, "gate parameters contain non-finite values");
  }
}

GateParams GateParams::learnable(Index channels) {
  GateParams g;
  g.mode = GateMode::kLearnable;
  g.w = Matrix::Zero(1, channels);
  return g;
}

GateParams GateParams::fixed(double alpha) {
  GateParams g;
  g.mode = GateMode::kFixed;
  g.alpha = alpha;
  g.validate(0);
  return g;
}

double gate(const Matrix& features, const GateParams& params) {
  if (params.mode == GateMode::kFixed) return params.alpha;
  params.validate(features.cols());
  Tape tape;
  return gate(tape.constant(features), tape.constant(params.w),
              tape.constant(Matrix::Constant(1, 1, params.b)))
      .item();
}

Var gate(const Var& features, const Var& w, const Var& b) {
  require_channels(w.cols(), features.cols(), "gate");
  if (w.rows() != 1 || b.rows() != 1 || b.cols() != 1) {
    fail(ErrorCode::kShapeMismatch, "gate expects w 1xC and b 1x1");
  }
  const Var pooled = numerics::mean_over(features, numerics::Axis::kRows);
  return numerics::sigmoid(
      numerics::add(numerics::matmul(pooled, numerics::transpose(w)), b));
}

Matrix fuse(const Matrix& bn, const Matrix& in, double tau) {
  if (bn.rows() != in.rows() || bn.cols() != in.cols()) {
    fail(ErrorCode::kShapeMismatch, "fuse: branches " + numerics::shape_string(bn) + " and " +
                                        numerics::shape_string(in));
  }
  return (1.0 - tau) * bn + tau * in;
}

Var fuse(const Var& bn, const Var& in, const Var& tau) {
  Tape& tape = *tau.tape();
  const Var rest = numerics::sub(tape.constant(Matrix::Ones(1, 1)), tau);
  return numerics::add(numerics::mul_scalar(rest, bn), numerics::mul_scalar(tau, in));
}

Matrix fuse_sum(const Matrix& bn, const Matrix& in) {
  if (bn.rows() != in.rows() || bn.cols() != in.cols()) {
    fail(ErrorCode::kShapeMismatch, "fuse_sum: branches " + numerics::shape_string(bn) +
                                        " and " + numerics::shape_string(in));
  }
  return bn + in;
}

AlignmentMaps alignment_maps(const TanStats& from, const TanStats& to) {
  require_channels(to.channels(), from.channels(), "alignment_maps");
  const double eps = to.eps;
  const ChannelStats from_in = from.average_in();
  const ChannelStats to_in = to.average_in();
  return {affine(from.bn.mean, from.bn.var, to.bn.mean, to.bn.var, eps),
          affine(from_in.mean, from_in.var, to_in.mean, to_in.var, eps)};
}

Matrix align(const Matrix& item, const AlignmentMaps& maps, double tau) {
  require_channels(item.cols(), maps.bn.scale.cols(), "align");
  return fuse(apply(item, maps.bn), apply(item, maps.in), tau);
}

Var align(const Var& item, const AlignmentMaps& maps, const Var& tau) {
  require_channels(item.cols(), maps.bn.scale.cols(), "align");
  return fuse(apply(item, maps.bn), apply(item, maps.in), tau);
}

Matrix align_sum(const Matrix& item, const AlignmentMaps& maps) {
  require_channels(item.cols(), maps.bn.scale.cols(), "align_sum");
  return fuse_sum(apply(item, maps.bn), apply(item, maps.in));
}

Var align_sum(const Var& item, const AlignmentMaps& maps) {
  require_channels(item.cols(), maps.bn.scale.cols(), "align_sum");
  return numerics::add(apply(item, maps.bn), apply(item, maps.in));
}

}  // namespace dara::nda
