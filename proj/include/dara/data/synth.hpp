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

#include "dara/data/bank.hpp"

namespace dara::data {

/// Desk-scale source/target benchmark with a per-channel affine domain shift
/// on the target and an extra additive offset on target query items.
struct SynthConfig {
  int source_classes = 12;
  int target_classes = 10;
  int source_items_per_class = 40;
  /// Target items per class drawn without the query offset (support role).
  int target_support_items = 10;
  /// Target items per class carrying the query offset (query role).
  int target_query_items = 30;
  int width = 5;
  int height = 5;
  int channels = 8;
  /// Scale of the Gaussian class-mean patterns.
  double separation = 1.0;
  /// Per-channel target scale is shift_scale or 1/shift_scale (random sign).
  double shift_scale = 1.0;
  /// Per-channel target offset is +shift_offset or -shift_offset.
  double shift_offset = 0.0;
  /// Magnitude of the per-channel offset added to target query items.
  double query_offset = 0.0;
  double noise = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Which target items carry the query offset, and the offset itself.
struct QueryShift {
  int support_items_per_class = 0;
  Matrix offset;  // 1 x C, added to every cell of a query-role item
};

struct SyntheticBanks {
  FeatureBank source;
  FeatureBank target;
  QueryShift query_shift;
};

/// Deterministic in `config.seed`. Values are rounded to single precision so
/// the in-memory banks equal what a save/load round trip produces. Target
/// items of each class are ordered support-role first, then query-role.
SyntheticBanks gen_synthetic(const SynthConfig& config);

}  // namespace dara::data
