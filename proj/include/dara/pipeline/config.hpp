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

#include "dara/data/episode.hpp"
#include "dara/data/keyvalue.hpp"
#include "dara/data/synth.hpp"

namespace dara::pipeline {

enum class PoolMode { kStacked, kPooled };
enum class NdaVariant { kLearnable, kMean, kBn, kIn, kSum };
enum class StatisticSource { kQueryAll, kSupportQueryOne, kSupportQueryFive };

struct TrainConfig {
  int hidden_channels = 16;
  int feature_channels = 8;

  int pretrain_epochs = 100;
  double pretrain_lr = 0.05;
  int batch_size = 32;

  /// Split evenly: the first half trains the backbone, the second half the
  /// reprojection prototypes.
  int finetune_epochs = 100;
  double stage1_lr = 0.01;
  double stage2_lr = 0.01;
  double beta = 1.0;

  bool use_recalibration = true;
  bool clamp_negative = false;
  bool use_reprojection_finetune = true;
  bool use_nda = true;
  NdaVariant nda_variant = NdaVariant::kLearnable;
  StatisticSource statistic_source = StatisticSource::kQueryAll;
  PoolMode pool_mode = PoolMode::kStacked;
  double eps = 1e-5;

  bool shared_finetune = false;
  int episodes = 600;
  int workers = 1;
  std::uint64_t seed = 0;
  data::EpisodeSpec episode;

  int stage1_epochs() const noexcept { return finetune_epochs / 2; }
  int stage2_epochs() const noexcept { return finetune_epochs - finetune_epochs / 2; }

  /// Throws kConfig naming the offending field.
  void validate() const;
};

/// Flat key/value configuration with a fixed schema. Every key has a default;
/// unknown keys and malformed values are rejected with the key named.
class Config {
 public:
  Config();

  /// Replaces one value after checking the key and parsing the value.
  void set(const std::string& key, const std::string& value);
  void merge(const data::KeyValues& values);
  const std::string& get(const std::string& key) const;
  bool is_known(const std::string& key) const;
  const data::KeyValues& values() const noexcept { return values_; }

  /// Value of a path key; throws kConfig naming the key when it is empty.
  std::filesystem::path require_path(const std::string& key) const;

  /// FNV-1a 64 of the sorted "key=value" lines of every non-path key except
  /// `workers`, as 16 lowercase hex digits.
  std::string digest() const;

  TrainConfig train() const;
  data::SynthConfig synth() const;

  static std::vector<std::string> keys();

 private:
  data::KeyValues values_;
};

/// Defaults, then `file` (if non-empty), then `overrides`; DARA_WORKERS is
/// used for `workers` when neither sets it.
Config load_config(const std::filesystem::path& file, const data::KeyValues& overrides);

}  // namespace dara::pipeline
