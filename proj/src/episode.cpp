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
#include "dara/data/episode.hpp"

#include <numeric>
#include <string>

#include "dara/error.hpp"

namespace dara::data {

void EpisodeSpec::validate() const {
  if (ways < 2) fail(ErrorCode::kConfig, "ways must be >= 2");
  if (shots < 1) fail(ErrorCode::kConfig, "shots must be >= 1");
  if (queries_per_class < 1) fail(ErrorCode::kConfig, "queries_per_class must be >= 1");
  if (support_pool < 0) fail(ErrorCode::kConfig, "support_pool must be >= 0");
  if (shots == 1) {
    if (pseudo_query_shots != 1) {
      fail(ErrorCode::kConfig, "pseudo_query_shots must be 1 for 1-shot episodes");
    }
  } else if (pseudo_query_shots < 1 || pseudo_query_shots >= shots) {
    fail(ErrorCode::kConfig, "pseudo_query_shots must lie in [1, shots)");
  }
}

namespace {

std::vector<std::size_t> draw(std::vector<std::size_t> pool, std::size_t count, Rng& rng) {
  rng.shuffle(std::span<std::size_t>(pool));
  pool.resize(count);
  return pool;
}

void check_class(const std::vector<std::size_t>& items, const EpisodeSpec& spec,
                 std::uint32_t label) {
  const auto k = static_cast<std::size_t>(spec.shots);
  const auto m = static_cast<std::size_t>(spec.queries_per_class);
  const auto pool = static_cast<std::size_t>(spec.support_pool);
  bool ok = false;
  std::string need;
  if (spec.support_pool > 0) {
    ok = pool >= k && items.size() >= pool + m;
    need = std::to_string(k) + " of its first " + std::to_string(pool) + " items and " +
           std::to_string(m) + " after them";
  } else {
    ok = items.size() >= k + m;
    need = std::to_string(k + m);
  }
  if (!ok) {
    fail(ErrorCode::kInsufficientItems, "class " + std::to_string(label) + " has " +
                                            std::to_string(items.size()) + " items, episode needs " +
                                            need);
  }
}

Episode sample_for(const EpisodeSpec& spec,
                   const std::vector<std::uint32_t>& classes,
                   const std::vector<std::vector<std::size_t>>& by_class, Rng& rng) {
  Episode ep;
  ep.classes = classes;
  const auto k = static_cast<std::size_t>(spec.shots);
  const auto m = static_cast<std::size_t>(spec.queries_per_class);
  for (std::size_t n = 0; n < classes.size(); ++n) {
    const auto& items = by_class[classes[n]];
    std::vector<std::size_t> support;
    std::vector<std::size_t> query;
    if (spec.support_pool > 0) {
      const auto split = items.begin() + spec.support_pool;
      support = draw({items.begin(), split}, k, rng);
      query = draw({split, items.end()}, m, rng);
    } else {
      auto picked = draw(items, k + m, rng);
      support.assign(picked.begin(), picked.begin() + static_cast<std::ptrdiff_t>(k));
      query.assign(picked.begin() + static_cast<std::ptrdiff_t>(k), picked.end());
    }
    ep.support.push_back(std::move(support));
    for (std::size_t q : query) {
      ep.query.push_back(q);
      ep.query_labels.push_back(static_cast<int>(n));
    }
  }
  return ep;
}

}  // namespace

Episode sample_episode(const FeatureBank& bank, const EpisodeSpec& spec, Rng& rng) {
  spec.validate();
  if (bank.class_count < static_cast<std::uint32_t>(spec.ways)) {
    fail(ErrorCode::kInsufficientItems, "bank has " + std::to_string(bank.class_count) +
                                            " classes, episode needs " + std::to_string(spec.ways));
  }
  const auto by_class = bank.indices_by_class();
  for (std::uint32_t c = 0; c < bank.class_count; ++c) check_class(by_class[c], spec, c);

  std::vector<std::uint32_t> all(bank.class_count);
  std::iota(all.begin(), all.end(), 0U);
  rng.shuffle(std::span<std::uint32_t>(all));
  all.resize(static_cast<std::size_t>(spec.ways));
  return sample_for(spec, all, by_class, rng);
}

Episode sample_episode_for_classes(const FeatureBank& bank, const EpisodeSpec& spec,
                                   const std::vector<std::uint32_t>& classes, Rng& rng) {
  spec.validate();
  if (classes.size() != static_cast<std::size_t>(spec.ways)) {
    fail(ErrorCode::kConfig, "class list has " + std::to_string(classes.size()) +
                                 " entries, ways is " + std::to_string(spec.ways));
  }
  const auto by_class = bank.indices_by_class();
  for (std::uint32_t c : classes) {
    if (c >= bank.class_count) {
      fail(ErrorCode::kLabelOutOfRange, "class " + std::to_string(c) + " not in bank");
    }
    check_class(by_class[c], spec, c);
  }
  return sample_for(spec, classes, by_class, rng);
}

PseudoSplit pseudo_split(const EpisodeSpec& spec, Rng& rng) {
  spec.validate();
  PseudoSplit split;
  for (int n = 0; n < spec.ways; ++n) {
    if (spec.shots == 1) {
      split.support.push_back({0});
      split.query.push_back({0});
      continue;
    }
    std::vector<int> order(static_cast<std::size_t>(spec.shots));
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(std::span<int>(order));
    const auto q = static_cast<std::ptrdiff_t>(spec.pseudo_query_shots);
    split.query.emplace_back(order.begin(), order.begin() + q);
    split.support.emplace_back(order.begin() + q, order.end());
  }
  return split;
}

}  // namespace dara::data
