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

#include <string>

#include <Eigen/Core>

namespace dara::numerics {

/// Dense double-precision matrix, row-major. Values are treated as
/// immutable once they leave the function that built them.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Index = Eigen::Index;

bool all_finite(const Matrix& m) noexcept;

/// "rows x cols", used in error messages.
std::string shape_string(const Matrix& m);
std::string shape_string(Index rows, Index cols);

/// Solves a * x = b for symmetric positive definite `a` through a Cholesky
/// factorization. Throws kNotPositiveDefinite on a non-positive pivot and
/// kShapeMismatch on incompatible operands.
Matrix solve_spd(const Matrix& a, const Matrix& b);

}  // namespace dara::numerics
