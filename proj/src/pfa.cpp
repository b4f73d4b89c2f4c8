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
#include "dara/pfa.hpp"

#include <cmath>
#include <string>

#include "dara/error.hpp"

namespace dara::pfa {

using numerics::Axis;

double ridge_lambda(Index pool_rows, Index channels, double beta) {
  if (pool_rows < 1 || channels < 1) {
    fail(ErrorCode::kInvalidArgument, "ridge_lambda needs a non-empty pool");
  }
  if (!(beta >= 0.0) || !std::isfinite(beta)) {
    fail(ErrorCode::kConfig, "beta must be finite and >= 0");
  }
  return static_cast<double>(pool_rows) / static_cast<double>(channels) * beta;
}

PoolVars recalibrate(std::span<const Var> features, const RecalibrationOptions& options) {
  if (features.empty()) fail(ErrorCode::kInvalidArgument, "recalibrate needs at least one instance");
  const Var& first = features.front();
  for (const Var& f : features) {
    if (f.rows() != first.rows() || f.cols() != first.cols()) {
      fail(ErrorCode::kShapeMismatch, "recalibrate: instance shapes differ (" +
                                          numerics::shape_string(first.rows(), first.cols()) +
                                          " vs " + numerics::shape_string(f.rows(), f.cols()) + ")");
    }
  }
  Tape& tape = *first.tape();
  const std::size_t k = features.size();
  PoolVars out;

  if (!options.enabled || k == 1) {
    const Var one = tape.constant(Matrix::Ones(1, 1));
    out.weights.assign(k, one);
    out.stacked = k == 1 ? first : numerics::vstack(features);
    Var sum = features[0];
    for (std::size_t i = 1; i < k; ++i) sum = numerics::add(sum, features[i]);
    out.pooled = numerics::scale(sum, 1.0 / static_cast<double>(k));
    return out;
  }

  // cos is symmetric: evaluate each pair once.
  std::vector<std::vector<Var>> cos(k, std::vector<Var>(k));
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = i + 1; j < k; ++j) {
      cos[i][j] = numerics::cosine(features[i], features[j]);
      cos[j][i] = cos[i][j];
    }
  }
  std::vector<Var> weighted;
  weighted.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    Var sum;
    for (std::size_t j = 0; j < k; ++j) {
      if (j == i) continue;
      sum = sum.valid() ? numerics::add(sum, cos[i][j]) : cos[i][j];
    }
    Var a = numerics::scale(sum, 1.0 / static_cast<double>(k - 1));
    if (options.clamp_negative) a = numerics::relu(a);
    out.weights.push_back(a);
    weighted.push_back(numerics::mul_scalar(a, features[i]));
  }
  out.stacked = numerics::vstack(weighted);
  Var sum = weighted[0];
  for (std::size_t i = 1; i < k; ++i) sum = numerics::add(sum, weighted[i]);
  out.pooled = numerics::scale(sum, 1.0 / static_cast<double>(k));
  return out;
}

Recalibrated recalibrate(std::span<const Matrix> features, const RecalibrationOptions& options) {
  Tape tape;
  std::vector<Var> vars;
  vars.reserve(features.size());
  for (const Matrix& f : features) vars.push_back(tape.constant(f));
  const PoolVars pool = recalibrate(vars, options);
  Recalibrated out;
  out.weights.resize(1, static_cast<Index>(pool.weights.size()));
  for (std::size_t i = 0; i < pool.weights.size(); ++i) {
    out.weights(0, static_cast<Index>(i)) = pool.weights[i].item();
  }
  out.stacked = pool.stacked.value();
  out.pooled = pool.pooled.value();
  return out;
}

Var ridge_reconstruct(const Var& pool, const Var& queries, double lambda) {
  if (pool.cols() != queries.cols()) {
    fail(ErrorCode::kShapeMismatch,
         "ridge_reconstruct: pool " + numerics::shape_string(pool.rows(), pool.cols()) +
             " and queries " + numerics::shape_string(queries.rows(), queries.cols()) +
             " disagree on channels");
  }
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    fail(ErrorCode::kInvalidArgument, "ridge_reconstruct: lambda must be finite and >= 0");
  }
  Tape& tape = *pool.tape();
  const Var pt = numerics::transpose(pool);
  Var gram = numerics::matmul(pool, pt);
  if (lambda > 0.0) {
    gram = numerics::add(gram, tape.constant(lambda * Matrix::Identity(pool.rows(), pool.rows())));
  }
  const Var x = numerics::solve_through(gram, pool);
  // Q (P^T X) keeps the intermediate at C x C instead of (rows of Q) x (rows of P).
  return numerics::matmul(queries, numerics::matmul(pt, x));
}

Matrix ridge_reconstruct(const Matrix& pool, const Matrix& queries, double lambda) {
  Tape tape;
  return ridge_reconstruct(tape.constant(pool), tape.constant(queries), lambda).value();
}

Var reconstruction_distances(std::span<const Var> reconstructions, const Var& queries,
                             Index cells) {
  if (reconstructions.empty()) fail(ErrorCode::kInvalidArgument, "no reconstructions");
  if (cells < 1 || queries.rows() % cells != 0) {
    fail(ErrorCode::kShapeMismatch, "queries with " + std::to_string(queries.rows()) +
                                        " rows do not split into maps of " +
                                        std::to_string(cells) + " cells");
  }
  std::vector<Var> columns;
  columns.reserve(reconstructions.size());
  for (const Var& r : reconstructions) {
    columns.push_back(numerics::block_frobenius_sq(numerics::sub(r, queries), cells));
  }
  return columns.size() == 1 ? columns.front() : numerics::hstack(columns);
}

Var pool_distances(std::span<const Var> pools, const Var& queries, Index cells, double lambda) {
  std::vector<Var> recon;
  recon.reserve(pools.size());
  for (const Var& p : pools) recon.push_back(ridge_reconstruct(p, queries, lambda));
  return reconstruction_distances(recon, queries, cells);
}

Matrix pool_distances(std::span<const Matrix> pools, const Matrix& queries, Index cells,
                      double lambda) {
  Tape tape;
  std::vector<Var> vars;
  vars.reserve(pools.size());
  for (const Matrix& p : pools) vars.push_back(tape.constant(p));
  return pool_distances(vars, tape.constant(queries), cells, lambda).value();
}

double MeasurementParams::gamma() const { return std::exp(log_gamma); }

MeasurementParams MeasurementParams::for_cells(Index cells) {
  if (cells < 1) fail(ErrorCode::kInvalidArgument, "cells must be >= 1");
  return {std::log(static_cast<double>(cells))};
}

Var measure_logits(const Var& distances, const Var& log_gamma, Index cells) {
  if (log_gamma.rows() != 1 || log_gamma.cols() != 1) {
    fail(ErrorCode::kShapeMismatch, "log_gamma must be 1x1");
  }
  const Var factor = numerics::scale(numerics::exp(log_gamma), -1.0 / static_cast<double>(cells));
  return numerics::mul_scalar(factor, distances);
}

Matrix measure(const Matrix& distances, const MeasurementParams& params, Index cells) {
  Tape tape;
  const Var lg = tape.constant(Matrix::Constant(1, 1, params.log_gamma));
  return numerics::row_softmax(measure_logits(tape.constant(distances), lg, cells)).value();
}

Var cross_entropy(const Var& logits, std::span<const int> labels) {
  if (static_cast<Index>(labels.size()) != logits.rows()) {
    fail(ErrorCode::kShapeMismatch, "cross_entropy: " + std::to_string(labels.size()) +
                                        " labels for " + std::to_string(logits.rows()) + " rows");
  }
  const Var picked = numerics::select_per_row(numerics::row_log_softmax(logits), labels);
  return numerics::scale(numerics::mean_over(picked, Axis::kAll), -1.0);
}

std::vector<int> predict(const Matrix& distances) {
  std::vector<int> out(static_cast<std::size_t>(distances.rows()));
  for (Index i = 0; i < distances.rows(); ++i) {
    Index best = 0;
    for (Index j = 1; j < distances.cols(); ++j) {
      if (distances(i, j) < distances(i, best)) best = j;
    }
    out[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return out;
}

std::vector<Matrix> init_reprojection(std::span<const Matrix> pools) {
  return {pools.begin(), pools.end()};
}

}  // namespace dara::pfa
