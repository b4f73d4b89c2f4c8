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
#include <optional>
#include <string>
#include <vector>

#include "dara/backbone.hpp"
#include "dara/nda.hpp"

namespace dara::pipeline {

using numerics::Matrix;

inline constexpr char kCheckpointMagic[8] = {'D', 'A', 'R', 'A', 'C', 'K', '0', '1'};

/// Everything a command hands to the next one.
struct Model {
  backbone::BackboneParams theta;
  double log_gamma = 0.0;
  /// One R x C matrix per source class (pretraining head).
  std::vector<Matrix> base_prototypes;

  // Present after target finetuning.
  std::vector<Matrix> z;
  std::optional<nda::GateParams> gate;
  std::vector<std::uint32_t> classes;

  bool finetuned() const noexcept { return !z.empty(); }
};

/// Layout: magic, u32 layer count, per layer (rows, cols, f64 payload) for
/// the weight and then the bias; then u32 section count and per section
/// (u32 tag, u32 index, u32 rows, u32 cols, f64 payload).
void save_checkpoint(const Model& model, const std::filesystem::path& path);

/// Throws kIo, kBadMagic or kHeaderMismatch (truncation, trailing bytes,
/// unknown tags, inconsistent shapes).
Model load_checkpoint(const std::filesystem::path& path);

/// Human-readable header of a feature bank or checkpoint, chosen by magic.
std::string inspect_file(const std::filesystem::path& path);

}  // namespace dara::pipeline
