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

#include "dara/numerics/tape.hpp"

namespace dara::backbone {

using numerics::Matrix;
using numerics::Tape;
using numerics::Var;

struct BackboneShape {
  int in_channels = 8;
  int hidden_channels = 16;
  int out_channels = 8;
};

/// Per-cell two-layer MLP: relu(relu(x W1 + b1) W2 + b2), applied to every
/// spatial cell of a feature map independently.
struct BackboneParams {
  Matrix w1;  // C_in x C_hidden
  Matrix b1;  // 1 x C_hidden
  Matrix w2;  // C_hidden x C
  Matrix b2;  // 1 x C

  BackboneShape shape() const;
  /// Throws kShapeMismatch if the layers do not chain or kInvalidArgument on
  /// non-finite entries.
  void validate() const;
};

/// Glorot-uniform weights in +-sqrt(6 / (fan_in + fan_out)), zero biases.
BackboneParams init_params(const BackboneShape& shape, std::uint64_t seed);

/// The four parameter leaves of one tape.
struct BackboneVars {
  Var w1;
  Var b1;
  Var w2;
  Var b2;
};

/// Registers the parameters on `tape`, as trainable leaves or as constants.
BackboneVars bind(Tape& tape, const BackboneParams& params, bool trainable);

/// `items` stacks one or more raw maps vertically ((n*R) x C_in); the output
/// stacks the matching (n*R) x C feature maps.
Var forward(const BackboneVars& vars, const Var& items);

/// Tape-free evaluation, bitwise equal to the tape path.
Matrix forward(const BackboneParams& params, const Matrix& items);

}  // namespace dara::backbone
