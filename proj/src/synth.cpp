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
#include "dara/data/synth.hpp"

#include <cmath>
#include <string>

#include "dara/data/rng.hpp"
#include "dara/error.hpp"

namespace dara::data {

void SynthConfig::validate() const {
  auto positive = [](int v, const char* key) {
    if (v < 1) fail(ErrorCode::kConfig, std::string("key '") + key + "' must be >= 1");
  };
  positive(source_classes, "source_classes");
  positive(target_classes, "target_classes");
  positive(source_items_per_class, "source_items_per_class");
  positive(target_support_items, "target_support_items");
  positive(target_query_items, "target_query_items");
  positive(width, "width");
  positive(height, "height");
  positive(channels, "channels");
  if (!(noise > 0.0)) fail(ErrorCode::kConfig, "key 'noise' must be > 0");
  if (!(shift_scale > 0.0)) fail(ErrorCode::kConfig, "key 'shift_scale' must be > 0");
  if (!(separation >= 0.0)) fail(ErrorCode::kConfig, "key 'separation' must be >= 0");
}

namespace {

Matrix gaussian(Rng& rng, numerics::Index rows, numerics::Index cols, double sigma) {
  Matrix m(rows, cols);
  for (numerics::Index i = 0; i < m.size(); ++i) m.data()[i] = sigma * rng.normal();
  return m;
}

Matrix to_single(Matrix m) {
  for (numerics::Index i = 0; i < m.size(); ++i) {
    m.data()[i] = static_cast<double>(static_cast<float>(m.data()[i]));
  }
  return m;
}

double random_sign(Rng& rng) { return rng.uniform() < 0.5 ? -1.0 : 1.0; }

FeatureBank empty_bank(const SynthConfig& c, int classes) {
  FeatureBank b;
  b.width = static_cast<std::uint32_t>(c.width);
  b.height = static_cast<std::uint32_t>(c.height);
  b.channels = static_cast<std::uint32_t>(c.channels);
  b.class_count = static_cast<std::uint32_t>(classes);
  return b;
}

}  // namespace

SyntheticBanks gen_synthetic(const SynthConfig& config) {
  config.validate();
  const numerics::Index cells = static_cast<numerics::Index>(config.width) * config.height;
  const numerics::Index channels = config.channels;
  SyntheticBanks out;

  {
    Rng rng(derive_seed(config.seed, Stream::kSynthSource));
    out.source = empty_bank(config, config.source_classes);
    for (int k = 0; k < config.source_classes; ++k) {
      const Matrix mean = gaussian(rng, cells, channels, config.separation);
      for (int i = 0; i < config.source_items_per_class; ++i) {
        out.source.items.push_back(to_single(mean + gaussian(rng, cells, channels, config.noise)));
        out.source.labels.push_back(static_cast<std::uint32_t>(k));
      }
    }
  }

  Rng rng(derive_seed(config.seed, Stream::kSynthTarget));
  Matrix scale(1, channels);
  Matrix offset(1, channels);
  Matrix query_offset(1, channels);
  for (numerics::Index c = 0; c < channels; ++c) {
    scale(0, c) = std::pow(config.shift_scale, random_sign(rng));
    offset(0, c) = config.shift_offset * random_sign(rng);
    query_offset(0, c) = config.query_offset * random_sign(rng);
  }
  out.query_shift.support_items_per_class = config.target_support_items;
  out.query_shift.offset = query_offset;

  out.target = empty_bank(config, config.target_classes);
  const int per_class = config.target_support_items + config.target_query_items;
  for (int k = 0; k < config.target_classes; ++k) {
    const Matrix mean = gaussian(rng, cells, channels, config.separation);
    for (int i = 0; i < per_class; ++i) {
      Matrix x = mean + gaussian(rng, cells, channels, config.noise);
      x = (x.array().rowwise() * scale.row(0).array()).matrix();
      x.rowwise() += offset.row(0);
      if (i >= config.target_support_items) x.rowwise() += query_offset.row(0);
      out.target.items.push_back(to_single(std::move(x)));
      out.target.labels.push_back(static_cast<std::uint32_t>(k));
    }
  }
  return out;
}

}  // namespace dara::data
