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
#include <random>
#include <span>
#include <utility>

namespace dara::data {

/// Stream tags for derive_seed(). Every random decision in the engine draws
/// from a stream identified by (seed, tag, index), so results do not depend on
/// evaluation order or worker count.
enum class Stream : std::uint64_t {
  kSynthSource = 1,
  kSynthTarget = 2,
  kBackboneInit = 3,
  kPrototypeInit = 4,
  kPretrainShuffle = 5,
  kEpisode = 6,
  kFinetune = 7,
  kGateInit = 8,
};

/// splitmix64 finalizer.
std::uint64_t mix64(std::uint64_t x) noexcept;

/// Seed of stream `tag` at position `index` under the global `seed`.
std::uint64_t derive_seed(std::uint64_t seed, Stream tag, std::uint64_t index = 0) noexcept;

/// Portable generator: std::mt19937_64 (whose output sequence is fixed by the
/// standard) plus hand-written conversions, because the std distributions
/// differ between standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Standard normal by Box-Muller (both values used).
  double normal();
  /// Uniform integer in [0, n), unbiased.
  std::size_t below(std::size_t n);

  template <class T>
  void shuffle(std::span<T> values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      using std::swap;
      swap(values[i - 1], values[below(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace dara::data
