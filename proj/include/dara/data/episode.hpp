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

#include <cstddef>
#include <cstdint>
#include <vector>

#include "dara/data/bank.hpp"
#include "dara/data/rng.hpp"

namespace dara::data {

struct EpisodeSpec {
  int ways = 5;
  int shots = 5;
  int queries_per_class = 15;
  /// Pseudo-query items per class during finetuning. Must be < shots, except
  /// for 1-shot where it is 1 and the single item plays both roles.
  int pseudo_query_shots = 1;
  std::uint64_t seed = 0;
  /// When > 0, the first `support_pool` items of every class (in bank order)
  /// are support candidates and the rest are query candidates. Synthetic
  /// target banks use this to keep covariate-shifted items on the query side.
  int support_pool = 0;

  /// Throws kConfig when the fields violate the invariants above.
  void validate() const;
};

/// One N-way K-shot task. Episode class n corresponds to bank label
/// classes[n]; support and query hold bank item indices.
struct Episode {
  std::vector<std::uint32_t> classes;
  std::vector<std::vector<std::size_t>> support;  // [class][shot]
  std::vector<std::size_t> query;
  std::vector<int> query_labels;  // episode class index of each query

  int ways() const noexcept { return static_cast<int>(classes.size()); }
  int shots() const noexcept { return support.empty() ? 0 : static_cast<int>(support.front().size()); }
};

/// Positions (0..K-1) within each class's support list.
struct PseudoSplit {
  std::vector<std::vector<int>> support;
  std::vector<std::vector<int>> query;
};

/// Draws N distinct classes, then K support and M query items per class,
/// disjoint within a class. Throws kInsufficientItems naming a deficient class.
Episode sample_episode(const FeatureBank& bank, const EpisodeSpec& spec, Rng& rng);

/// Same as sample_episode but restricted to the given bank classes, in order.
Episode sample_episode_for_classes(const FeatureBank& bank, const EpisodeSpec& spec,
                                   const std::vector<std::uint32_t>& classes, Rng& rng);

/// Per class: pseudo_query_shots positions to the pseudo-query side and the
/// rest to pseudo-support. For K = 1 the single position is on both sides.
PseudoSplit pseudo_split(const EpisodeSpec& spec, Rng& rng);

}  // namespace dara::data
