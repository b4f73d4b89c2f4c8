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
#include "dara/data/bank.hpp"

#include <fstream>

#include "dara/data/binary_io.hpp"
#include "dara/error.hpp"

namespace dara::data {

namespace {

constexpr std::uint64_t kHeaderBytes = 8 + 5 * 4;

std::uint64_t expected_file_size(const BankHeader& h) {
  const std::uint64_t n = h.num_items;
  const std::uint64_t per_item = static_cast<std::uint64_t>(h.width) * h.height * h.channels;
  return kHeaderBytes + 4 * n + 4 * n * per_item;
}

BankHeader read_header(std::istream& in, const std::filesystem::path& path) {
  char magic[8];
  if (!in.read(magic, 8)) fail(ErrorCode::kBadMagic, path.string() + ": file shorter than magic");
  if (std::memcmp(magic, kBankMagic, 8) != 0) {
    fail(ErrorCode::kBadMagic, path.string() + ": not a DARAFB01 feature bank");
  }
  BankHeader h;
  if (!binary::read_u32(in, h.num_items) || !binary::read_u32(in, h.width) ||
      !binary::read_u32(in, h.height) || !binary::read_u32(in, h.channels) ||
      !binary::read_u32(in, h.class_count)) {
    fail(ErrorCode::kHeaderMismatch, path.string() + ": truncated header");
  }
  if (h.width == 0 || h.height == 0 || h.channels == 0) {
    fail(ErrorCode::kHeaderMismatch, path.string() + ": W, H and C must be >= 1");
  }
  const auto actual = std::filesystem::file_size(path);
  const auto expected = expected_file_size(h);
  if (actual != expected) {
    fail(ErrorCode::kHeaderMismatch, path.string() + ": header declares " +
                                         std::to_string(expected) + " bytes, file has " +
                                         std::to_string(actual));
  }
  return h;
}

std::ifstream open_for_read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open " + path.string());
  return in;
}

}  // namespace

void FeatureBank::validate() const {
  if (width == 0 || height == 0 || channels == 0) {
    fail(ErrorCode::kInvalidArgument, "feature bank needs W, H, C >= 1");
  }
  if (items.size() != labels.size()) {
    fail(ErrorCode::kInvalidArgument, "feature bank has " + std::to_string(items.size()) +
                                          " items but " + std::to_string(labels.size()) +
                                          " labels");
  }
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (items[i].rows() != cells() || items[i].cols() != static_cast<numerics::Index>(channels)) {
      fail(ErrorCode::kShapeMismatch, "item " + std::to_string(i) + " has shape " +
                                          numerics::shape_string(items[i]) + ", bank expects " +
                                          numerics::shape_string(cells(), channels));
    }
    if (labels[i] >= class_count) {
      fail(ErrorCode::kLabelOutOfRange, "item " + std::to_string(i) + " has label " +
                                            std::to_string(labels[i]) + " >= class_count " +
                                            std::to_string(class_count));
    }
  }
}

std::vector<std::vector<std::size_t>> FeatureBank::indices_by_class() const {
  std::vector<std::vector<std::size_t>> out(class_count);
  for (std::size_t i = 0; i < labels.size(); ++i) out[labels[i]].push_back(i);
  return out;
}

void save_bank(const FeatureBank& bank, const std::filesystem::path& path) {
  bank.validate();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::kIo, "cannot open " + path.string() + " for writing");
  out.write(kBankMagic, 8);
  binary::write_u32(out, static_cast<std::uint32_t>(bank.items.size()));
  binary::write_u32(out, bank.width);
  binary::write_u32(out, bank.height);
  binary::write_u32(out, bank.channels);
  binary::write_u32(out, bank.class_count);
  for (std::uint32_t label : bank.labels) binary::write_u32(out, label);
  for (const Matrix& item : bank.items) {
    // Row-major (h*W + w, c) storage already matches the (h, w, c) order.
    for (numerics::Index k = 0; k < item.size(); ++k) {
      binary::write_f32(out, static_cast<float>(item.data()[k]));
    }
  }
  out.flush();
  if (!out) fail(ErrorCode::kIo, "write failed for " + path.string());
}

BankHeader read_bank_header(const std::filesystem::path& path) {
  auto in = open_for_read(path);
  return read_header(in, path);
}

FeatureBank load_bank(const std::filesystem::path& path) {
  auto in = open_for_read(path);
  const BankHeader h = read_header(in, path);
  FeatureBank bank;
  bank.width = h.width;
  bank.height = h.height;
  bank.channels = h.channels;
  bank.class_count = h.class_count;
  bank.labels.resize(h.num_items);
  for (auto& label : bank.labels) {
    if (!binary::read_u32(in, label)) fail(ErrorCode::kHeaderMismatch, path.string() + ": truncated labels");
    if (label >= h.class_count) {
      fail(ErrorCode::kLabelOutOfRange, path.string() + ": label " + std::to_string(label) +
                                            " >= class_count " + std::to_string(h.class_count));
    }
  }
  bank.items.reserve(h.num_items);
  for (std::uint32_t i = 0; i < h.num_items; ++i) {
    Matrix item(bank.cells(), static_cast<numerics::Index>(h.channels));
    for (numerics::Index k = 0; k < item.size(); ++k) {
      float v = 0.0F;
      if (!binary::read_f32(in, v)) fail(ErrorCode::kHeaderMismatch, path.string() + ": truncated payload");
      item.data()[k] = static_cast<double>(v);
    }
    if (!item.allFinite()) {
      fail(ErrorCode::kInvalidArgument, path.string() + ": item " + std::to_string(i) +
                                            " has non-finite values");
    }
    bank.items.push_back(std::move(item));
  }
  return bank;
}

}  // namespace dara::data
