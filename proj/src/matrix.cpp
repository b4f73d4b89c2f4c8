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
#include "dara/numerics/matrix.hpp"

#include <algorithm>

#include <Eigen/Cholesky>

#include "dara/error.hpp"
#include "numerics_detail.hpp"

namespace dara::numerics {

bool all_finite(const Matrix& m) noexcept { return m.allFinite(); }

std::string shape_string(Index rows, Index cols) {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

std::string shape_string(const Matrix& m) { return shape_string(m.rows(), m.cols()); }

namespace detail {

Eigen::LLT<Matrix> cholesky(const Matrix& a) {
  if (a.rows() != a.cols()) {
    fail(ErrorCode::kShapeMismatch, "SPD solve needs a square matrix, got " + shape_string(a));
  }
  const double tol = 1e-10 * std::max(1.0, a.cwiseAbs().maxCoeff());
  if ((a - a.transpose()).cwiseAbs().maxCoeff() > tol) {
    fail(ErrorCode::kInvalidArgument, "SPD solve needs a symmetric matrix");
  }
  Eigen::LLT<Matrix> llt(a);
  if (llt.info() != Eigen::Success) {
    fail(ErrorCode::kNotPositiveDefinite,
         "Cholesky factorization hit a non-positive pivot (" + shape_string(a) + ")");
  }
  return llt;
}

}  // namespace detail

Matrix solve_spd(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) {
    fail(ErrorCode::kShapeMismatch,
         "SPD solve: lhs " + shape_string(a) + " vs rhs " + shape_string(b));
  }
  const auto llt = detail::cholesky(a);
  return llt.solve(b);
}

}  // namespace dara::numerics
