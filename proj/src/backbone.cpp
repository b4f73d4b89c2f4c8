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
#include "dara/backbone.hpp"

#include <cmath>

#include "dara/data/rng.hpp"
#include "dara/error.hpp"

namespace dara::backbone {

BackboneShape BackboneParams::shape() const {
  return {static_cast<int>(w1.rows()), static_cast<int>(w1.cols()), static_cast<int>(w2.cols())};
}

void BackboneParams::validate() const {
  if (w1.rows() < 1 || w1.cols() < 1 || b1.rows() != 1 || b1.cols() != w1.cols() ||
      w2.rows() != w1.cols() || w2.cols() < 1 || b2.rows() != 1 || b2.cols() != w2.cols()) {
    fail(ErrorCode::kShapeMismatch,
         "backbone layers do not chain: w1 " + numerics::shape_string(w1) + ", b1 " +
             numerics::shape_string(b1) + ", w2 " + numerics::shape_string(w2) + ", b2 " +
             numerics::shape_string(b2));
  }
  if (!w1.allFinite() || !b1.allFinite() || !w2.allFinite() || !b2.allFinite()) {
    fail(ErrorCode::kInvalidArgument, "backbone parameters contain non-finite values");
  }
}

namespace {

Matrix glorot(data::Rng& rng, int fan_in, int fan_out) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Matrix m(fan_in, fan_out);
  for (numerics::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-limit, limit);
  return m;
}

}  // namespace

BackboneParams init_params(const BackboneShape& shape, std::uint64_t seed) {
  if (shape.in_channels < 1 || shape.hidden_channels < 1 || shape.out_channels < 1) {
    fail(ErrorCode::kConfig, "backbone channel counts must be >= 1");
  }
  data::Rng rng(seed);
  BackboneParams p;
  p.w1 = glorot(rng, shape.in_channels, shape.hidden_channels);
  p.b1 = Matrix::Zero(1, shape.hidden_channels);
  p.w2 = glorot(rng, shape.hidden_channels, shape.out_channels);
  p.b2 = Matrix::Zero(1, shape.out_channels);
  return p;
}

BackboneVars bind(Tape& tape, const BackboneParams& params, bool trainable) {
  params.validate();
  auto leaf = [&](const Matrix& m) { return trainable ? tape.parameter(m) : tape.constant(m); };
  return {leaf(params.w1), leaf(params.b1), leaf(params.w2), leaf(params.b2)};
}

Var forward(const BackboneVars& vars, const Var& items) {
  if (items.cols() != vars.w1.rows()) {
    fail(ErrorCode::kShapeMismatch, "backbone expects " + std::to_string(vars.w1.rows()) +
                                        " input channels, got " + std::to_string(items.cols()));
  }
  const Var hidden = numerics::relu(numerics::add(numerics::matmul(items, vars.w1), vars.b1));
  return numerics::relu(numerics::add(numerics::matmul(hidden, vars.w2), vars.b2));
}

Matrix forward(const BackboneParams& params, const Matrix& items) {
  if (items.cols() != params.w1.rows()) {
    fail(ErrorCode::kShapeMismatch, "backbone expects " + std::to_string(params.w1.rows()) +
                                        " input channels, got " + std::to_string(items.cols()));
  }
  Matrix hidden = items * params.w1;
  hidden = (hidden + params.b1.replicate(hidden.rows(), 1)).cwiseMax(0.0);
  Matrix out = hidden * params.w2;
  return (out + params.b2.replicate(out.rows(), 1)).cwiseMax(0.0);
}

}  // namespace dara::backbone
