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
#include "dara/numerics/tape.hpp"

#include <cmath>

#include "dara/error.hpp"
#include "numerics_detail.hpp"

namespace dara::numerics {

namespace {

enum class Broadcast : std::uint8_t { kSame, kRow, kScalar };

}  // namespace

struct Tape::Node {
  OpKind kind = OpKind::kLeaf;
  std::vector<int> inputs;
  Matrix value;
  Matrix grad;  // empty until something flows into it
  bool needs_grad = false;
  double scalar = 0.0;
  Index param = 0;
  Axis axis = Axis::kAll;
  Broadcast broadcast = Broadcast::kSame;
  std::vector<int> columns;
  std::shared_ptr<const Eigen::LLT<Matrix>> factor;
};

Tape::Tape() = default;
Tape::~Tape() = default;

struct TapeAccess {
  static Tape::Node& node(Tape& t, int id) { return *t.nodes_[static_cast<std::size_t>(id)]; }
  static const Tape::Node& node(const Tape& t, int id) {
    return *t.nodes_[static_cast<std::size_t>(id)];
  }

  static Var push(Tape& t, std::unique_ptr<Tape::Node> n) {
    if (t.backward_done_) {
      fail(ErrorCode::kInvalidArgument, "tape already consumed by backward()");
    }
    const Index r = n->value.rows();
    const Index c = n->value.cols();
    const int id = static_cast<int>(t.nodes_.size());
    for (int in : n->inputs) {
      n->needs_grad = n->needs_grad || t.nodes_[static_cast<std::size_t>(in)]->needs_grad;
    }
    t.nodes_.push_back(std::move(n));
    return Var(&t, id, r, c);
  }

  static Var make_leaf(Tape& t, Matrix value, bool needs_grad) {
    auto n = std::make_unique<Tape::Node>();
    n->value = std::move(value);
    n->needs_grad = needs_grad;
    return push(t, std::move(n));
  }
};

namespace {

using Node = Tape::Node;

Tape& same_tape(const Var& a) {
  if (!a.valid()) fail(ErrorCode::kInvalidArgument, "operation on an empty Var");
  return *a.tape();
}

Tape& same_tape(const Var& a, const Var& b) {
  Tape& t = same_tape(a);
  if (b.tape() != &t) fail(ErrorCode::kInvalidArgument, "operands live on different tapes");
  return t;
}

std::unique_ptr<Node> make_node(OpKind kind, std::vector<int> inputs, Matrix value) {
  auto n = std::make_unique<Node>();
  n->kind = kind;
  n->inputs = std::move(inputs);
  n->value = std::move(value);
  return n;
}

[[noreturn]] void shape_error(const char* op, const Var& a, const Var& b) {
  fail(ErrorCode::kShapeMismatch, std::string(op) + ": " + shape_string(a.rows(), a.cols()) +
                                      " vs " + shape_string(b.rows(), b.cols()));
}

Broadcast broadcast_mode(const char* op, const Var& a, const Var& b) {
  if (a.rows() == b.rows() && a.cols() == b.cols()) return Broadcast::kSame;
  if (b.rows() == 1 && b.cols() == a.cols()) return Broadcast::kRow;
  if (b.rows() == 1 && b.cols() == 1) return Broadcast::kScalar;
  shape_error(op, a, b);
}

Matrix expand(const Matrix& b, Index rows, Index cols, Broadcast mode) {
  switch (mode) {
    case Broadcast::kSame:
      return b;
    case Broadcast::kRow:
      return b.replicate(rows, 1);
    case Broadcast::kScalar:
      return Matrix::Constant(rows, cols, b(0, 0));
  }
  return b;
}

Matrix reduce(const Matrix& g, Broadcast mode) {
  switch (mode) {
    case Broadcast::kSame:
      return g;
    case Broadcast::kRow:
      return g.colwise().sum();
    case Broadcast::kScalar:
      return Matrix::Constant(1, 1, g.sum());
  }
  return g;
}

void accumulate(Tape& t, int id, const Matrix& g) {
  Node& n = TapeAccess::node(t, id);
  if (!n.needs_grad) return;
  if (n.grad.size() == 0) {
    n.grad = g;
  } else {
    n.grad += g;
  }
}

}  // namespace

const Matrix& Var::value() const {
  if (!valid()) fail(ErrorCode::kInvalidArgument, "value() of an empty Var");
  return tape_->value(*this);
}

double Var::item() const {
  const Matrix& v = value();
  if (v.rows() != 1 || v.cols() != 1) {
    fail(ErrorCode::kShapeMismatch, "item() needs 1x1, got " + shape_string(v));
  }
  return v(0, 0);
}

Var Tape::constant(Matrix value) { return TapeAccess::make_leaf(*this, std::move(value), false); }

Var Tape::parameter(Matrix value) { return TapeAccess::make_leaf(*this, std::move(value), true); }

const Matrix& Tape::value(const Var& v) const { return TapeAccess::node(*this, v.id()).value; }

Matrix Tape::grad(const Var& v) const {
  const Node& n = TapeAccess::node(*this, v.id());
  if (n.grad.size() == 0) return Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::backward(const Var& loss) {
  if (loss.tape() != this) fail(ErrorCode::kInvalidArgument, "loss is not on this tape");
  if (loss.rows() != 1 || loss.cols() != 1) {
    fail(ErrorCode::kNonScalarLoss,
         "backward() needs a 1x1 loss, got " + shape_string(loss.rows(), loss.cols()));
  }
  if (backward_done_) fail(ErrorCode::kInvalidArgument, "backward() already ran on this tape");
  backward_done_ = true;

  Node& root = *nodes_[static_cast<std::size_t>(loss.id())];
  if (!root.needs_grad) return;
  root.grad = Matrix::Ones(1, 1);

  for (int id = loss.id(); id >= 0; --id) {
    Node& n = *nodes_[static_cast<std::size_t>(id)];
    if (n.kind == OpKind::kLeaf || !n.needs_grad || n.grad.size() == 0) continue;
    const Matrix& g = n.grad;
    const auto& in = n.inputs;
    auto val = [&](std::size_t k) -> const Matrix& { return nodes_[static_cast<std::size_t>(in[k])]->value; };
    auto wants = [&](std::size_t k) { return nodes_[static_cast<std::size_t>(in[k])]->needs_grad; };

    switch (n.kind) {
      case OpKind::kLeaf:
        break;
      case OpKind::kMatMul:
        if (wants(0)) accumulate(*this, in[0], g * val(1).transpose());
        if (wants(1)) accumulate(*this, in[1], val(0).transpose() * g);
        break;
      case OpKind::kTranspose:
        if (wants(0)) accumulate(*this, in[0], g.transpose());
        break;
      case OpKind::kAdd:
        if (wants(0)) accumulate(*this, in[0], g);
        if (wants(1)) accumulate(*this, in[1], reduce(g, n.broadcast));
        break;
      case OpKind::kSub:
        if (wants(0)) accumulate(*this, in[0], g);
        if (wants(1)) accumulate(*this, in[1], -reduce(g, n.broadcast));
        break;
      case OpKind::kHadamard: {
        const Matrix b = expand(val(1), g.rows(), g.cols(), n.broadcast);
        if (wants(0)) accumulate(*this, in[0], g.cwiseProduct(b));
        if (wants(1)) accumulate(*this, in[1], reduce(g.cwiseProduct(val(0)), n.broadcast));
        break;
      }
      case OpKind::kScale:
        if (wants(0)) accumulate(*this, in[0], n.scalar * g);
        break;
      case OpKind::kMulScalar:
        if (wants(0)) accumulate(*this, in[0], Matrix::Constant(1, 1, g.cwiseProduct(val(1)).sum()));
        if (wants(1)) accumulate(*this, in[1], val(0)(0, 0) * g);
        break;
      case OpKind::kRelu:
        if (wants(0)) accumulate(*this, in[0],
                   g.cwiseProduct(val(0).unaryExpr([](double x) { return x > 0.0 ? 1.0 : 0.0; })));
        break;
      case OpKind::kSigmoid:
        if (wants(0)) accumulate(*this, in[0],
                   g.cwiseProduct(n.value.unaryExpr([](double y) { return y * (1.0 - y); })));
        break;
      case OpKind::kExp:
        if (wants(0)) accumulate(*this, in[0], g.cwiseProduct(n.value));
        break;
      case OpKind::kLog:
        if (wants(0)) accumulate(*this, in[0], g.cwiseQuotient(val(0)));
        break;
      case OpKind::kRowSoftmax: {
        const Matrix gy = g.cwiseProduct(n.value);
        const Eigen::VectorXd row_dot = gy.rowwise().sum();
        Matrix d = gy;
        d -= n.value.cwiseProduct(row_dot.replicate(1, n.value.cols()));
        if (wants(0)) accumulate(*this, in[0], d);
        break;
      }
      case OpKind::kRowLogSoftmax: {
        const Matrix p = n.value.array().exp().matrix();
        const Eigen::VectorXd row_sum = g.rowwise().sum();
        Matrix d = g;
        d -= p.cwiseProduct(row_sum.replicate(1, p.cols()));
        if (wants(0)) accumulate(*this, in[0], d);
        break;
      }
      case OpKind::kFrobeniusSq:
        if (wants(0)) accumulate(*this, in[0], 2.0 * g(0, 0) * val(0));
        break;
      case OpKind::kBlockFrobeniusSq: {
        const Matrix& a = val(0);
        Matrix d(a.rows(), a.cols());
        for (Index b = 0; b < g.rows(); ++b) {
          d.middleRows(b * n.param, n.param) = 2.0 * g(b, 0) * a.middleRows(b * n.param, n.param);
        }
        if (wants(0)) accumulate(*this, in[0], d);
        break;
      }
      case OpKind::kCosine: {
        const Matrix& a = val(0);
        const Matrix& b = val(1);
        const double na = a.norm();
        const double nb = b.norm();
        const double c = n.value(0, 0);
        const double gs = g(0, 0);
        if (wants(0)) accumulate(*this, in[0], gs * (b / (na * nb) - c * a / (na * na)));
        if (wants(1)) accumulate(*this, in[1], gs * (a / (na * nb) - c * b / (nb * nb)));
        break;
      }
      case OpKind::kMeanOver: {
        const Matrix& a = val(0);
        Matrix d;
        switch (n.axis) {
          case Axis::kRows:
            d = g.replicate(a.rows(), 1) / static_cast<double>(a.rows());
            break;
          case Axis::kCols:
            d = g.replicate(1, a.cols()) / static_cast<double>(a.cols());
            break;
          case Axis::kAll:
            d = Matrix::Constant(a.rows(), a.cols(), g(0, 0) / static_cast<double>(a.size()));
            break;
        }
        if (wants(0)) accumulate(*this, in[0], d);
        break;
      }
      case OpKind::kSolveThrough: {
        const Matrix gb = n.factor->solve(g);
        if (wants(1)) accumulate(*this, in[1], gb);
        if (wants(0)) {
          const Matrix ga = -gb * n.value.transpose();
          accumulate(*this, in[0], 0.5 * (ga + ga.transpose()));
        }
        break;
      }
      case OpKind::kVStack: {
        Index offset = 0;
        for (std::size_t k = 0; k < in.size(); ++k) {
          const Index r = val(k).rows();
          if (wants(k)) accumulate(*this, in[k], g.middleRows(offset, r));
          offset += r;
        }
        break;
      }
      case OpKind::kHStack: {
        Index offset = 0;
        for (std::size_t k = 0; k < in.size(); ++k) {
          const Index c = val(k).cols();
          if (wants(k)) accumulate(*this, in[k], g.middleCols(offset, c));
          offset += c;
        }
        break;
      }
      case OpKind::kSliceRows: {
        const Matrix& a = val(0);
        Matrix d = Matrix::Zero(a.rows(), a.cols());
        d.middleRows(n.param, g.rows()) = g;
        if (wants(0)) accumulate(*this, in[0], d);
        break;
      }
      case OpKind::kSelectPerRow: {
        const Matrix& a = val(0);
        Matrix d = Matrix::Zero(a.rows(), a.cols());
        for (Index i = 0; i < a.rows(); ++i) d(i, n.columns[static_cast<std::size_t>(i)]) = g(i, 0);
        if (wants(0)) accumulate(*this, in[0], d);
        break;
      }
    }
  }
}

Var matmul(const Var& a, const Var& b) {
  Tape& t = same_tape(a, b);
  if (a.cols() != b.rows()) shape_error("matmul", a, b);
  Matrix v = a.value() * b.value();
  return TapeAccess::push(t, make_node(OpKind::kMatMul, {a.id(), b.id()}, std::move(v)));
}

Var transpose(const Var& a) {
  Tape& t = same_tape(a);
  Matrix v = a.value().transpose();
  return TapeAccess::push(t, make_node(OpKind::kTranspose, {a.id()}, std::move(v)));
}

Var add(const Var& a, const Var& b) {
  Tape& t = same_tape(a, b);
  const Broadcast mode = broadcast_mode("add", a, b);
  Matrix v = a.value() + expand(b.value(), a.rows(), a.cols(), mode);
  auto n = make_node(OpKind::kAdd, {a.id(), b.id()}, std::move(v));
  n->broadcast = mode;
  return TapeAccess::push(t, std::move(n));
}

Var sub(const Var& a, const Var& b) {
  Tape& t = same_tape(a, b);
  const Broadcast mode = broadcast_mode("sub", a, b);
  Matrix v = a.value() - expand(b.value(), a.rows(), a.cols(), mode);
  auto n = make_node(OpKind::kSub, {a.id(), b.id()}, std::move(v));
  n->broadcast = mode;
  return TapeAccess::push(t, std::move(n));
}

Var hadamard(const Var& a, const Var& b) {
  Tape& t = same_tape(a, b);
  const Broadcast mode = broadcast_mode("hadamard", a, b);
  Matrix v = a.value().cwiseProduct(expand(b.value(), a.rows(), a.cols(), mode));
  auto n = make_node(OpKind::kHadamard, {a.id(), b.id()}, std::move(v));
  n->broadcast = mode;
  return TapeAccess::push(t, std::move(n));
}

Var scale(const Var& a, double factor) {
  Tape& t = same_tape(a);
  Matrix v = factor * a.value();
  auto n = make_node(OpKind::kScale, {a.id()}, std::move(v));
  n->scalar = factor;
  return TapeAccess::push(t, std::move(n));
}

Var mul_scalar(const Var& s, const Var& x) {
  Tape& t = same_tape(s, x);
  if (s.rows() != 1 || s.cols() != 1) shape_error("mul_scalar", s, x);
  Matrix v = s.value()(0, 0) * x.value();
  return TapeAccess::push(t, make_node(OpKind::kMulScalar, {s.id(), x.id()}, std::move(v)));
}

Var relu(const Var& a) {
  Tape& t = same_tape(a);
  Matrix v = a.value().cwiseMax(0.0);
  return TapeAccess::push(t, make_node(OpKind::kRelu, {a.id()}, std::move(v)));
}

Var sigmoid(const Var& a) {
  Tape& t = same_tape(a);
  Matrix v = a.value().unaryExpr([](double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
  });
  return TapeAccess::push(t, make_node(OpKind::kSigmoid, {a.id()}, std::move(v)));
}

Var exp(const Var& a) {
  Tape& t = same_tape(a);
  Matrix v = a.value().array().exp().matrix();
  return TapeAccess::push(t, make_node(OpKind::kExp, {a.id()}, std::move(v)));
}

Var log(const Var& a) {
  Tape& t = same_tape(a);
  Matrix v = a.value().array().log().matrix();
  return TapeAccess::push(t, make_node(OpKind::kLog, {a.id()}, std::move(v)));
}

Var row_softmax(const Var& a) {
  Tape& t = same_tape(a);
  const Matrix& x = a.value();
  Matrix v(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i) {
    const double m = x.row(i).maxCoeff();
    v.row(i) = (x.row(i).array() - m).exp().matrix();
    v.row(i) /= v.row(i).sum();
  }
  return TapeAccess::push(t, make_node(OpKind::kRowSoftmax, {a.id()}, std::move(v)));
}

Var row_log_softmax(const Var& a) {
  Tape& t = same_tape(a);
  const Matrix& x = a.value();
  Matrix v(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i) {
    const double m = x.row(i).maxCoeff();
    const double lse = std::log((x.row(i).array() - m).exp().sum());
    v.row(i) = (x.row(i).array() - m - lse).matrix();
  }
  return TapeAccess::push(t, make_node(OpKind::kRowLogSoftmax, {a.id()}, std::move(v)));
}

Var frobenius_sq(const Var& a) {
  Tape& t = same_tape(a);
  Matrix v = Matrix::Constant(1, 1, a.value().squaredNorm());
  return TapeAccess::push(t, make_node(OpKind::kFrobeniusSq, {a.id()}, std::move(v)));
}

Var block_frobenius_sq(const Var& a, Index block_rows) {
  Tape& t = same_tape(a);
  if (block_rows <= 0 || a.rows() % block_rows != 0) {
    fail(ErrorCode::kShapeMismatch, "block_frobenius_sq: " + shape_string(a.rows(), a.cols()) +
                                        " is not a stack of " + std::to_string(block_rows) +
                                        "-row blocks");
  }
  const Index blocks = a.rows() / block_rows;
  Matrix v(blocks, 1);
  for (Index b = 0; b < blocks; ++b) v(b, 0) = a.value().middleRows(b * block_rows, block_rows).squaredNorm();
  auto n = make_node(OpKind::kBlockFrobeniusSq, {a.id()}, std::move(v));
  n->param = block_rows;
  return TapeAccess::push(t, std::move(n));
}

Var cosine(const Var& a, const Var& b) {
  Tape& t = same_tape(a, b);
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_error("cosine", a, b);
  const double na = a.value().norm();
  const double nb = b.value().norm();
  if (na < 1e-12 || nb < 1e-12) {
    fail(ErrorCode::kZeroNormFeature, "cosine of a vector with norm below 1e-12");
  }
  const double c = a.value().cwiseProduct(b.value()).sum() / (na * nb);
  return TapeAccess::push(t, make_node(OpKind::kCosine, {a.id(), b.id()}, Matrix::Constant(1, 1, c)));
}

Var mean_over(const Var& a, Axis axis) {
  Tape& t = same_tape(a);
  const Matrix& x = a.value();
  Matrix v;
  switch (axis) {
    case Axis::kRows:
      v = x.colwise().mean();
      break;
    case Axis::kCols:
      v = x.rowwise().mean();
      break;
    case Axis::kAll:
      v = Matrix::Constant(1, 1, x.mean());
      break;
  }
  auto n = make_node(OpKind::kMeanOver, {a.id()}, std::move(v));
  n->axis = axis;
  return TapeAccess::push(t, std::move(n));
}

Var solve_through(const Var& a, const Var& b) {
  Tape& t = same_tape(a, b);
  if (a.rows() != b.rows()) shape_error("solve_through", a, b);
  auto llt = std::make_shared<const Eigen::LLT<Matrix>>(detail::cholesky(a.value()));
  Matrix v = llt->solve(b.value());
  auto n = make_node(OpKind::kSolveThrough, {a.id(), b.id()}, std::move(v));
  n->factor = std::move(llt);
  return TapeAccess::push(t, std::move(n));
}

Var vstack(std::span<const Var> parts) {
  if (parts.empty()) fail(ErrorCode::kInvalidArgument, "vstack of nothing");
  Tape& t = same_tape(parts.front());
  Index rows = 0;
  std::vector<int> ids;
  for (const Var& p : parts) {
    same_tape(parts.front(), p);
    if (p.cols() != parts.front().cols()) shape_error("vstack", parts.front(), p);
    rows += p.rows();
    ids.push_back(p.id());
  }
  Matrix v(rows, parts.front().cols());
  Index offset = 0;
  for (const Var& p : parts) {
    v.middleRows(offset, p.rows()) = p.value();
    offset += p.rows();
  }
  return TapeAccess::push(t, make_node(OpKind::kVStack, std::move(ids), std::move(v)));
}

Var hstack(std::span<const Var> parts) {
  if (parts.empty()) fail(ErrorCode::kInvalidArgument, "hstack of nothing");
  Tape& t = same_tape(parts.front());
  Index cols = 0;
  std::vector<int> ids;
  for (const Var& p : parts) {
    same_tape(parts.front(), p);
    if (p.rows() != parts.front().rows()) shape_error("hstack", parts.front(), p);
    cols += p.cols();
    ids.push_back(p.id());
  }
  Matrix v(parts.front().rows(), cols);
  Index offset = 0;
  for (const Var& p : parts) {
    v.middleCols(offset, p.cols()) = p.value();
    offset += p.cols();
  }
  return TapeAccess::push(t, make_node(OpKind::kHStack, std::move(ids), std::move(v)));
}

Var slice_rows(const Var& a, Index begin, Index count) {
  Tape& t = same_tape(a);
  if (begin < 0 || count <= 0 || begin + count > a.rows()) {
    fail(ErrorCode::kShapeMismatch, "slice_rows [" + std::to_string(begin) + ", " +
                                        std::to_string(begin + count) + ") of " +
                                        shape_string(a.rows(), a.cols()));
  }
  Matrix v = a.value().middleRows(begin, count);
  auto n = make_node(OpKind::kSliceRows, {a.id()}, std::move(v));
  n->param = begin;
  return TapeAccess::push(t, std::move(n));
}

Var select_per_row(const Var& a, std::span<const int> columns) {
  Tape& t = same_tape(a);
  if (static_cast<Index>(columns.size()) != a.rows()) {
    fail(ErrorCode::kShapeMismatch, "select_per_row: " + std::to_string(columns.size()) +
                                        " indices for " + shape_string(a.rows(), a.cols()));
  }
  Matrix v(a.rows(), 1);
  for (Index i = 0; i < a.rows(); ++i) {
    const int c = columns[static_cast<std::size_t>(i)];
    if (c < 0 || c >= a.cols()) {
      fail(ErrorCode::kShapeMismatch, "select_per_row: column " + std::to_string(c) +
                                          " out of range for " + shape_string(a.rows(), a.cols()));
    }
    v(i, 0) = a.value()(i, c);
  }
  auto n = make_node(OpKind::kSelectPerRow, {a.id()}, std::move(v));
  n->columns.assign(columns.begin(), columns.end());
  return TapeAccess::push(t, std::move(n));
}

}  // namespace dara::numerics
