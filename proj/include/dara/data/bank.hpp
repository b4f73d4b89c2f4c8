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
#include <filesystem>
#include <string>
#include <vector>

#include "dara/numerics/matrix.hpp"

namespace dara::data {

using numerics::Matrix;

/// Magic prefix of the feature-bank file.
inline constexpr char kBankMagic[8] = {'D', 'A', 'R', 'A', 'F', 'B', '0', '1'};

/// A labelled set of feature maps sharing one W x H x C geometry. Item maps
/// are stored as (W*H) x C matrices whose row index is h * W + w.
struct FeatureBank {
  std::uint32_t width = 1;
  std::uint32_t height = 1;
  std::uint32_t channels = 1;
  std::uint32_t class_count = 1;
  std::vector<Matrix> items;
  std::vector<std::uint32_t> labels;

  numerics::Index cells() const noexcept {
    return static_cast<numerics::Index>(width) * static_cast<numerics::Index>(height);
  }
  std::size_t size() const noexcept { return items.size(); }

  /// Throws kInvalidArgument / kShapeMismatch / kLabelOutOfRange.
  void validate() const;

  /// Item indices of each class in bank order.
  std::vector<std::vector<std::size_t>> indices_by_class() const;
};

struct BankHeader {
  std::uint32_t num_items = 0;
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::uint32_t channels = 0;
  std::uint32_t class_count = 0;
};

/// Writes the little-endian DARAFB01 file: magic, five u32 header fields,
/// num_items u32 labels, then f32 values ordered (item, h, w, c).
void save_bank(const FeatureBank& bank, const std::filesystem::path& path);

/// Reads and validates a bank. Values are widened from f32.
FeatureBank load_bank(const std::filesystem::path& path);

/// Reads only the header, checking magic and payload length.
BankHeader read_bank_header(const std::filesystem::path& path);

}  // namespace dara::data
