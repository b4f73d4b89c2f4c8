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

namespace dara::pfa {

using numerics::Index;
using numerics::Matrix;
using numerics::Tape;
using numerics::Var;

/// Ridge strength for a pool of `pool_rows` rows (K*R) over `channels`
/// channels: lambda = pool_rows / channels * beta.
double ridge_lambda(Index pool_rows, Index channels, double beta);

struct RecalibrationOptions {
  /// When false every instance weight is 1.
  bool enabled = true;
  /// Clamp negative mean cosines to zero (off by default).
  bool clamp_negative = false;
};

/// Recalibrated class pool on a tape.
struct PoolVars {
  std::vector<Var> weights;  // one 1x1 per instance
  Var stacked;               // [A_1 F_1; ...; A_K F_K], (K*R) x C
  Var pooled;                // (1/K) sum_k A_k F_k, R x C
};

/// Instance weights A_i = mean_{j != i} cos(F_i, F_j), with A = 1 for a
/// single instance. Throws kZeroNormFeature for a vanishing feature map and
/// kShapeMismatch for unequal shapes.
PoolVars recalibrate(std::span<const Var> features, const RecalibrationOptions& options = {});

struct Recalibrated {
  Matrix weights;  // 1 x K
  Matrix stacked;
  Matrix pooled;
};

Recalibrated recalibrate(std::span<const Matrix> features,
                         const RecalibrationOptions& options = {});

/// Q P^T (P P^T + lambda I)^{-1} P through the Gram system of the pool.
/// `queries` may stack several R x C maps; the result has the shape of
/// `queries`. Throws kNotPositiveDefinite when the Gram system is singular.
Var ridge_reconstruct(const Var& pool, const Var& queries, double lambda);
Matrix ridge_reconstruct(const Matrix& pool, const Matrix& queries, double lambda);

/// Squared Frobenius distance between each reconstruction and its query,
/// for stacked queries of `cells` rows each: returns M x N for N pools.
Var reconstruction_distances(std::span<const Var> reconstructions, const Var& queries,
                             Index cells);

/// Reconstruct stacked queries from every pool and return the M x N
/// squared distances.
Var pool_distances(std::span<const Var> pools, const Var& queries, Index cells,
                   double lambda);
Matrix pool_distances(std::span<const Matrix> pools, const Matrix& queries, Index cells,
                      double lambda);

/// Temperature gamma, stored as its logarithm so it stays positive.
struct MeasurementParams {
  double log_gamma = 0.0;

  double gamma() const;
  /// gamma / R = 1 at initialization.
  static MeasurementParams for_cells(Index cells);
};

/// Logits -(gamma / R) * D for an M x N distance matrix.
Var measure_logits(const Var& distances, const Var& log_gamma, Index cells);

/// Row-wise softmax of the logits: class probabilities per query.
Matrix measure(const Matrix& distances, const MeasurementParams& params, Index cells);

/// Mean negative log-probability of the true class; `labels` has one entry
/// per row of `logits`.
Var cross_entropy(const Var& logits, std::span<const int> labels);

/// Nearest reconstruction per row; ties go to the lowest class index.
std::vector<int> predict(const Matrix& distances);

/// Learnable reprojection prototypes start as copies of the pools.
std::vector<Matrix> init_reprojection(std::span<const Matrix> pools);

}  // namespace dara::pfa
