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

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "dara/numerics/matrix.hpp"

namespace dara::numerics {

class Tape;

/// Handle to one node on a Tape. Cheap to copy; valid while its tape lives.
class Var {
 public:
  Var() = default;

  Index rows() const noexcept { return rows_; }
  Index cols() const noexcept { return cols_; }
  int id() const noexcept { return id_; }
  Tape* tape() const noexcept { return tape_; }
  bool valid() const noexcept { return tape_ != nullptr; }

  const Matrix& value() const;
  /// Scalar value of a 1x1 node.
  double item() const;

 private:
  friend class Tape;
  friend struct TapeAccess;
  Var(Tape* tape, int id, Index rows, Index cols)
      : tape_(tape), id_(id), rows_(rows), cols_(cols) {}

  Tape* tape_ = nullptr;
  int id_ = -1;
  Index rows_ = 0;
  Index cols_ = 0;
};

enum class Axis { kRows, kCols, kAll };

enum class OpKind : std::uint8_t {
  kLeaf,
  kMatMul,
  kTranspose,
  kAdd,
  kSub,
  kHadamard,
  kScale,
  kMulScalar,
  kRelu,
  kSigmoid,
  kExp,
  kLog,
  kRowSoftmax,
  kRowLogSoftmax,
  kFrobeniusSq,
  kBlockFrobeniusSq,
  kCosine,
  kMeanOver,
  kSolveThrough,
  kVStack,
  kHStack,
  kSliceRows,
  kSelectPerRow,
};

/// Reverse-mode record for one forward build. Nodes are appended in
/// evaluation order, so inputs always precede the node that consumes them.
/// A tape supports exactly one backward pass.
class Tape {
 public:
  Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  ~Tape();

  /// Leaf that never receives a gradient.
  Var constant(Matrix value);
  /// Leaf whose gradient is accumulated by backward().
  Var parameter(Matrix value);

  const Matrix& value(const Var& v) const;
  /// Gradient of the last backward() loss with respect to `v`. Nodes the loss
  /// does not depend on report a zero matrix of matching shape.
  Matrix grad(const Var& v) const;

  /// Throws kNonScalarLoss unless `loss` is 1x1.
  void backward(const Var& loss);

  std::size_t size() const noexcept { return nodes_.size(); }
  bool backward_done() const noexcept { return backward_done_; }

  struct Node;  // defined in tape.cpp

 private:
  friend struct TapeAccess;
  std::vector<std::unique_ptr<Node>> nodes_;
  bool backward_done_ = false;
};

// Operation set. Every op checks that its inputs share one tape and have
// compatible shapes (kShapeMismatch otherwise).

Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
/// Elementwise sum. `b` may also be a 1xC row (broadcast over rows of `a`)
/// or a 1x1 scalar.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
/// Elementwise product with the same broadcasting rules as add().
Var hadamard(const Var& a, const Var& b);
Var scale(const Var& a, double factor);
/// `s` is 1x1; returns s * x.
Var mul_scalar(const Var& s, const Var& x);
Var relu(const Var& a);
Var sigmoid(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);
/// Softmax of every row with per-row max subtraction.
Var row_softmax(const Var& a);
/// log(row_softmax(a)) computed as a - max - log(sum(exp(a - max))).
Var row_log_softmax(const Var& a);
/// Sum of squared entries, 1x1.
Var frobenius_sq(const Var& a);
/// Squared Frobenius norm of each consecutive block of `block_rows` rows,
/// returned as a (rows / block_rows) x 1 column.
Var block_frobenius_sq(const Var& a, Index block_rows);
/// Cosine similarity of the two matrices read as flat vectors, 1x1.
Var cosine(const Var& a, const Var& b);
/// kRows averages over rows (1 x cols), kCols over columns (rows x 1),
/// kAll over every entry (1x1).
Var mean_over(const Var& a, Axis axis);
/// x = a^{-1} b for SPD `a`, by Cholesky. The forward value is bitwise
/// identical to solve_spd(a, b).
Var solve_through(const Var& a, const Var& b);
Var vstack(std::span<const Var> parts);
Var hstack(std::span<const Var> parts);
Var slice_rows(const Var& a, Index begin, Index count);
/// out(i) = a(i, columns[i]); returns rows x 1.
Var select_per_row(const Var& a, std::span<const int> columns);

}  // namespace dara::numerics
