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
#pragma once

#include <span>
#include <vector>

#include "dara/numerics/tape.hpp"

namespace dara::nda {

using numerics::Index;
using numerics::Matrix;
using numerics::Tape;
using numerics::Var;

inline constexpr double kDefaultEpsilon = 1e-5;

/// Per-channel mean and population variance, each 1 x C.
struct ChannelStats {
  Matrix mean;
  Matrix var;
};

/// Statistics over all B*R positions of a batch of R x C maps.
ChannelStats bn_stats(std::span<const Matrix> batch);
/// Statistics over the R positions of one map.
ChannelStats in_stats(const Matrix& item);

struct TanStats {
  ChannelStats bn;
  Matrix in_mean;  // B x C, one row per item
  Matrix in_var;   // B x C
  double eps = kDefaultEpsilon;

  Index channels() const noexcept { return bn.mean.cols(); }
  /// Row averages of the per-item IN statistics.
  ChannelStats average_in() const;
};

/// Throws kInvalidArgument for an empty batch or eps <= 0, kShapeMismatch when
/// the maps differ in shape.
TanStats tan_stats(std::span<const Matrix> batch, double eps = kDefaultEpsilon);

/// How support items are paired with the per-item IN statistics of the
/// reference batch.
enum class InPairing {
  kAverage,   // every item uses the batch average
  kItemWise,  // item i uses row i (batch sizes must agree)
};

struct Branches {
  Matrix bn;
  Matrix in;
};

/// (F - mu) / sqrt(var + eps) with BN and IN statistics taken from `stats`.
/// Throws kChannelMismatch when channel counts differ.
std::vector<Branches> tan_normalize(std::span<const Matrix> items, const TanStats& stats,
                                    InPairing pairing = InPairing::kAverage);

enum class GateMode { kFixed, kLearnable };

struct GateParams {
  GateMode mode = GateMode::kLearnable;
  double alpha = 0.5;  // fixed mode
  Matrix w;            // 1 x C, learnable mode
  double b = 0.0;

  void validate(Index channels) const;
  /// Learnable gate with w = 0, b = 0 (tau = 0.5).
  static GateParams learnable(Index channels);
  static GateParams fixed(double alpha);
};

/// sigmoid(w . mean_r F(r, :) + b), or alpha in fixed mode.
double gate(const Matrix& features, const GateParams& params);
/// Learnable gate on a tape; `w` is 1 x C and `b` is 1 x 1.
Var gate(const Var& features, const Var& w, const Var& b);

/// (1 - tau) * bn + tau * in. Throws kShapeMismatch for unequal branches.
Matrix fuse(const Matrix& bn, const Matrix& in, double tau);
Var fuse(const Var& bn, const Var& in, const Var& tau);
/// Ungated sum of both branches.
Matrix fuse_sum(const Matrix& bn, const Matrix& in);

/// Per-channel affine map x * scale + shift.
struct ChannelAffine {
  Matrix scale;  // 1 x C
  Matrix shift;  // 1 x C
};

/// Maps that standardize with one set of statistics and re-inject another:
/// x -> (x - mu_from) / sqrt(var_from + eps) * sqrt(var_to + eps) + mu_to,
/// once with BN statistics and once with averaged IN statistics.
struct AlignmentMaps {
  ChannelAffine bn;
  ChannelAffine in;
};

AlignmentMaps alignment_maps(const TanStats& from, const TanStats& to);

/// (1 - tau) * bn_map(x) + tau * in_map(x).
Matrix align(const Matrix& item, const AlignmentMaps& maps, double tau);
Var align(const Var& item, const AlignmentMaps& maps, const Var& tau);
/// bn_map(x) + in_map(x), the ungated form.
Matrix align_sum(const Matrix& item, const AlignmentMaps& maps);
Var align_sum(const Var& item, const AlignmentMaps& maps);

}  // namespace dara::nda
