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
#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "dara/data/bank.hpp"
#include "dara/data/binary_io.hpp"
#include "dara/error.hpp"
#include "dara/pipeline/model.hpp"

namespace dara::pipeline {

namespace {

namespace bin = data::binary;

enum Tag : std::uint32_t {
  kBasePrototype = 1,
  kReprojection = 2,
  kGateWeight = 3,
  kGateBias = 4,
  kLogGamma = 5,
  kGateMode = 6,
  kClasses = 7,
};

void write_matrix(std::ostream& out, const Matrix& m) {
  bin::write_u32(out, static_cast<std::uint32_t>(m.rows()));
  bin::write_u32(out, static_cast<std::uint32_t>(m.cols()));
  for (numerics::Index i = 0; i < m.size(); ++i) bin::write_f64(out, m.data()[i]);
}

struct Reader {
  std::istream& in;
  const std::filesystem::path& path;

  [[noreturn]] void truncated() const {
    fail(ErrorCode::kHeaderMismatch, path.string() + ": checkpoint is truncated");
  }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    if (!bin::read_u32(in, v)) truncated();
    return v;
  }
  Matrix matrix() {
    const std::uint32_t rows = u32();
    const std::uint32_t cols = u32();
    if (static_cast<std::uint64_t>(rows) * cols > (1ull << 28)) {
      fail(ErrorCode::kHeaderMismatch, path.string() + ": implausible matrix size");
    }
    Matrix m(rows, cols);
    for (numerics::Index i = 0; i < m.size(); ++i) {
      if (!bin::read_f64(in, m.data()[i])) truncated();
    }
    return m;
  }
};

void add_section(std::vector<std::pair<std::pair<std::uint32_t, std::uint32_t>, Matrix>>& s,
                 Tag tag, std::size_t index, Matrix m) {
  s.push_back({{tag, static_cast<std::uint32_t>(index)}, std::move(m)});
}

}  // namespace

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
  model.theta.validate();
  std::vector<std::pair<std::pair<std::uint32_t, std::uint32_t>, Matrix>> sections;
  for (std::size_t n = 0; n < model.base_prototypes.size(); ++n) {
    add_section(sections, kBasePrototype, n, model.base_prototypes[n]);
  }
  for (std::size_t n = 0; n < model.z.size(); ++n) add_section(sections, kReprojection, n, model.z[n]);
  if (model.gate) {
    add_section(sections, kGateWeight, 0, model.gate->w);
    add_section(sections, kGateBias, 0, Matrix::Constant(1, 1, model.gate->b));
    Matrix mode(1, 2);
    mode << (model.gate->mode == nda::GateMode::kLearnable ? 1.0 : 0.0), model.gate->alpha;
    add_section(sections, kGateMode, 0, mode);
  }
  add_section(sections, kLogGamma, 0, Matrix::Constant(1, 1, model.log_gamma));
  if (!model.classes.empty()) {
    Matrix c(1, static_cast<numerics::Index>(model.classes.size()));
    for (std::size_t i = 0; i < model.classes.size(); ++i) {
      c(0, static_cast<numerics::Index>(i)) = model.classes[i];
    }
    add_section(sections, kClasses, 0, c);
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::kIo, "cannot open " + path.string() + " for writing");
  out.write(kCheckpointMagic, sizeof kCheckpointMagic);
  bin::write_u32(out, 2);
  write_matrix(out, model.theta.w1);
  write_matrix(out, model.theta.b1);
  write_matrix(out, model.theta.w2);
  write_matrix(out, model.theta.b2);
  bin::write_u32(out, static_cast<std::uint32_t>(sections.size()));
  for (const auto& [key, m] : sections) {
    bin::write_u32(out, key.first);
    bin::write_u32(out, key.second);
    write_matrix(out, m);
  }
  out.flush();
  if (!out) fail(ErrorCode::kIo, "write failed for " + path.string());
}

Model load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open " + path.string());
  char magic[8] = {};
  if (!in.read(magic, 8) || !std::equal(magic, magic + 8, kCheckpointMagic)) {
    fail(ErrorCode::kBadMagic, path.string() + ": not a checkpoint (bad magic)");
  }
  Reader r{in, path};
  if (r.u32() != 2) fail(ErrorCode::kHeaderMismatch, path.string() + ": expected 2 layers");
  Model model;
  model.theta.w1 = r.matrix();
  model.theta.b1 = r.matrix();
  model.theta.w2 = r.matrix();
  model.theta.b2 = r.matrix();
  try {
    model.theta.validate();
  } catch (const Error& e) {
    fail(ErrorCode::kHeaderMismatch, path.string() + ": " + e.what());
  }
  const std::uint32_t count = r.u32();
  std::optional<nda::GateParams> gate;
  bool have_gamma = false;
  auto expect_index = [&](std::size_t have, std::uint32_t index) {
    if (index != have) fail(ErrorCode::kHeaderMismatch, path.string() + ": sections out of order");
  };
  auto scalar = [&](const Matrix& m) {
    if (m.size() != 1) fail(ErrorCode::kHeaderMismatch, path.string() + ": expected a scalar section");
    return m(0, 0);
  };
  for (std::uint32_t s = 0; s < count; ++s) {
    const std::uint32_t tag = r.u32();
    const std::uint32_t index = r.u32();
    Matrix m = r.matrix();
    switch (tag) {
      case kBasePrototype:
        expect_index(model.base_prototypes.size(), index);
        model.base_prototypes.push_back(std::move(m));
        break;
      case kReprojection:
        expect_index(model.z.size(), index);
        model.z.push_back(std::move(m));
        break;
      case kGateWeight:
        if (!gate) gate.emplace();
        gate->w = std::move(m);
        break;
      case kGateBias:
        if (!gate) gate.emplace();
        gate->b = scalar(m);
        break;
      case kGateMode:
        if (!gate) gate.emplace();
        if (m.size() != 2) fail(ErrorCode::kHeaderMismatch, path.string() + ": bad gate mode");
        gate->mode = m(0, 0) != 0.0 ? nda::GateMode::kLearnable : nda::GateMode::kFixed;
        gate->alpha = m(0, 1);
        break;
      case kLogGamma:
        model.log_gamma = scalar(m);
        have_gamma = true;
        break;
      case kClasses:
        for (numerics::Index i = 0; i < m.size(); ++i) {
          model.classes.push_back(static_cast<std::uint32_t>(m.data()[i]));
        }
        break;
      default:
        fail(ErrorCode::kHeaderMismatch, path.string() + ": unknown section tag " + std::to_string(tag));
    }
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    fail(ErrorCode::kHeaderMismatch, path.string() + ": trailing bytes after the last section");
  }
  if (!have_gamma) fail(ErrorCode::kHeaderMismatch, path.string() + ": missing temperature");
  const numerics::Index c = model.theta.w2.cols();
  for (const Matrix& m : model.base_prototypes) {
    if (m.cols() != c) fail(ErrorCode::kHeaderMismatch, path.string() + ": prototype channels");
  }
  for (const Matrix& m : model.z) {
    if (m.cols() != c) fail(ErrorCode::kHeaderMismatch, path.string() + ": reprojection channels");
  }
  if (gate) {
    try {
      gate->validate(c);
    } catch (const Error& e) {
      fail(ErrorCode::kHeaderMismatch, path.string() + ": " + e.what());
    }
  }
  if (!model.z.empty() && !model.classes.empty() && model.classes.size() != model.z.size()) {
    fail(ErrorCode::kHeaderMismatch, path.string() + ": class list does not match prototypes");
  }
  model.gate = gate;
  return model;
}

std::string inspect_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open " + path.string());
  char magic[8] = {};
  in.read(magic, 8);
  std::ostringstream out;
  if (in && std::equal(magic, magic + 8, data::kBankMagic)) {
    const data::BankHeader h = data::read_bank_header(path);
    out << "format = feature-bank\n"
        << "num_items = " << h.num_items << "\n"
        << "width = " << h.width << "\n"
        << "height = " << h.height << "\n"
        << "channels = " << h.channels << "\n"
        << "class_count = " << h.class_count << "\n";
    return out.str();
  }
  if (in && std::equal(magic, magic + 8, kCheckpointMagic)) {
    const Model m = load_checkpoint(path);
    out << "format = checkpoint\n"
        << "input_channels = " << m.theta.w1.rows() << "\n"
        << "hidden_channels = " << m.theta.w1.cols() << "\n"
        << "feature_channels = " << m.theta.w2.cols() << "\n"
        << "temperature = " << std::exp(m.log_gamma) << "\n"
        << "base_prototypes = " << m.base_prototypes.size() << "\n"
        << "finetuned = " << (m.finetuned() ? "true" : "false") << "\n";
    if (m.finetuned()) {
      out << "reprojection_rows = " << m.z.front().rows() << "\n"
          << "classes =";
      for (auto c : m.classes) out << ' ' << c;
      out << "\n";
    }
    if (m.gate) {
      out << "gate = " << (m.gate->mode == nda::GateMode::kLearnable ? "learnable" : "fixed")
          << "\n";
    }
    return out.str();
  }
  fail(ErrorCode::kBadMagic, path.string() + ": neither a feature bank nor a checkpoint");
}

}  // namespace dara::pipeline
