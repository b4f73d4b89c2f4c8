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
#include "dara/pipeline/config.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>

#include "dara/error.hpp"

namespace dara::pipeline {

namespace {

enum class Kind { kInt, kU64, kReal, kBool, kChoice, kPath };

struct KeySpec {
  const char* name;
  Kind kind;
  const char* fallback;
  double min = 0.0;  // inclusive lower bound for numeric kinds
  std::vector<const char*> choices = {};
};

const std::vector<KeySpec>& schema() {
  static const std::vector<KeySpec> s = {
      {"seed", Kind::kU64, "0"},
      {"workers", Kind::kInt, "1", 1},
      // synthetic benchmark
      {"source_classes", Kind::kInt, "12", 1},
      {"target_classes", Kind::kInt, "10", 1},
      {"source_items_per_class", Kind::kInt, "40", 1},
      {"target_support_items", Kind::kInt, "10", 1},
      {"target_query_items", Kind::kInt, "30", 1},
      {"width", Kind::kInt, "5", 1},
      {"height", Kind::kInt, "5", 1},
      {"raw_channels", Kind::kInt, "8", 1},
      {"separation", Kind::kReal, "1.0", 0},
      {"shift_scale", Kind::kReal, "1.0", 1e-12},
      {"shift_offset", Kind::kReal, "0.0", 0},
      {"query_offset", Kind::kReal, "0.0", 0},
      {"noise", Kind::kReal, "1.0", 1e-12},
      // backbone
      {"hidden_channels", Kind::kInt, "16", 1},
      {"feature_channels", Kind::kInt, "8", 1},
      // training
      {"pretrain_epochs", Kind::kInt, "100", 1},
      {"pretrain_lr", Kind::kReal, "0.05", 0},
      {"batch_size", Kind::kInt, "32", 1},
      {"finetune_epochs", Kind::kInt, "100", 1},
      {"stage1_lr", Kind::kReal, "0.01", 0},
      {"stage2_lr", Kind::kReal, "0.01", 0},
      {"beta", Kind::kReal, "1.0", 0},
      // episodes
      {"ways", Kind::kInt, "5", 2},
      {"shots", Kind::kInt, "5", 1},
      {"queries_per_class", Kind::kInt, "15", 1},
      {"pseudo_query_shots", Kind::kInt, "1", 1},
      {"episodes", Kind::kInt, "600", 1},
      // components
      {"use_recalibration", Kind::kBool, "true"},
      {"clamp_negative", Kind::kBool, "false"},
      {"use_reprojection_finetune", Kind::kBool, "true"},
      {"use_nda", Kind::kBool, "true"},
      {"nda_variant", Kind::kChoice, "learnable", 0, {"learnable", "mean", "bn", "in", "sum"}},
      {"statistic_source", Kind::kChoice, "q-all", 0, {"q-all", "s+q-1", "s+q-1x5"}},
      {"pool_mode", Kind::kChoice, "stacked", 0, {"stacked", "pooled"}},
      {"eps", Kind::kReal, "1e-5", 1e-300},
      {"shared_finetune", Kind::kBool, "false"},
      // files
      {"source_bank", Kind::kPath, ""},
      {"target_bank", Kind::kPath, ""},
      {"checkpoint", Kind::kPath, ""},
      {"output", Kind::kPath, ""},
      {"report", Kind::kPath, ""},
      {"episode_csv", Kind::kPath, ""},
      {"histogram", Kind::kPath, ""},
  };
  return s;
}

const KeySpec* find(const std::string& key) {
  for (const KeySpec& k : schema()) {
    if (key == k.name) return &k;
  }
  return nullptr;
}

void check_value(const KeySpec& spec, const std::string& value) {
  const std::string key = spec.name;
  auto below = [&](double v) {
    if (v < spec.min) {
      fail(ErrorCode::kConfig, "key '" + key + "': value " + value + " is below the minimum");
    }
  };
  switch (spec.kind) {
    case Kind::kInt:
      below(static_cast<double>(data::parse_int(key, value)));
      break;
    case Kind::kU64:
      data::parse_u64(key, value);
      break;
    case Kind::kReal:
      below(data::parse_double(key, value));
      break;
    case Kind::kBool:
      data::parse_bool(key, value);
      break;
    case Kind::kChoice: {
      for (const char* c : spec.choices) {
        if (value == c) return;
      }
      std::string options;
      for (const char* c : spec.choices) options += std::string(options.empty() ? "" : ", ") + c;
      fail(ErrorCode::kConfig, "key '" + key + "': '" + value + "' is not one of " + options);
    }
    case Kind::kPath:
      break;
  }
}

int as_int(const Config& c, const char* key) {
  return static_cast<int>(data::parse_int(key, c.get(key)));
}
double as_real(const Config& c, const char* key) { return data::parse_double(key, c.get(key)); }
bool as_bool(const Config& c, const char* key) { return data::parse_bool(key, c.get(key)); }

}  // namespace

void TrainConfig::validate() const {
  auto need = [](bool ok, const char* key, const char* what) {
    if (!ok) fail(ErrorCode::kConfig, std::string("key '") + key + "': " + what);
  };
  need(hidden_channels >= 1, "hidden_channels", "must be >= 1");
  need(feature_channels >= 1, "feature_channels", "must be >= 1");
  need(pretrain_epochs >= 1, "pretrain_epochs", "must be >= 1");
  need(finetune_epochs >= 1, "finetune_epochs", "must be >= 1");
  need(batch_size >= 1, "batch_size", "must be >= 1");
  need(pretrain_lr >= 0.0 && std::isfinite(pretrain_lr), "pretrain_lr", "must be finite and >= 0");
  need(stage1_lr >= 0.0 && std::isfinite(stage1_lr), "stage1_lr", "must be finite and >= 0");
  need(stage2_lr >= 0.0 && std::isfinite(stage2_lr), "stage2_lr", "must be finite and >= 0");
  need(beta > 0.0, "beta", "must be > 0");
  need(eps > 0.0, "eps", "must be > 0");
  need(episodes >= 1, "episodes", "must be >= 1");
  need(workers >= 1, "workers", "must be >= 1");
  episode.validate();
}

Config::Config() {
  for (const KeySpec& k : schema()) values_[k.name] = k.fallback;
}

bool Config::is_known(const std::string& key) const { return find(key) != nullptr; }

void Config::set(const std::string& key, const std::string& value) {
  const KeySpec* spec = find(key);
  if (spec == nullptr) fail(ErrorCode::kConfig, "unknown key '" + key + "'");
  check_value(*spec, value);
  values_[key] = value;
}

void Config::merge(const data::KeyValues& values) {
  for (const auto& [k, v] : values) set(k, v);
}

const std::string& Config::get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) fail(ErrorCode::kConfig, "unknown key '" + key + "'");
  return it->second;
}

std::filesystem::path Config::require_path(const std::string& key) const {
  const std::string& v = get(key);
  if (v.empty()) fail(ErrorCode::kConfig, "missing required key '" + key + "'");
  return v;
}

std::string Config::digest() const {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const auto& [k, v] : values_) {  // std::map: sorted by key
    const KeySpec* spec = find(k);
    if (spec->kind == Kind::kPath || k == "workers") continue;
    const std::string line = k + "=" + v + "\n";
    for (unsigned char ch : line) {
      h ^= ch;
      h *= 0x100000001b3ull;
    }
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

TrainConfig Config::train() const {
  TrainConfig t;
  t.hidden_channels = as_int(*this, "hidden_channels");
  t.feature_channels = as_int(*this, "feature_channels");
  t.pretrain_epochs = as_int(*this, "pretrain_epochs");
  t.pretrain_lr = as_real(*this, "pretrain_lr");
  t.batch_size = as_int(*this, "batch_size");
  t.finetune_epochs = as_int(*this, "finetune_epochs");
  t.stage1_lr = as_real(*this, "stage1_lr");
  t.stage2_lr = as_real(*this, "stage2_lr");
  t.beta = as_real(*this, "beta");
  t.use_recalibration = as_bool(*this, "use_recalibration");
  t.clamp_negative = as_bool(*this, "clamp_negative");
  t.use_reprojection_finetune = as_bool(*this, "use_reprojection_finetune");
  t.use_nda = as_bool(*this, "use_nda");
  const std::string& variant = get("nda_variant");
  t.nda_variant = variant == "mean" ? NdaVariant::kMean
                  : variant == "bn" ? NdaVariant::kBn
                  : variant == "in" ? NdaVariant::kIn
                  : variant == "sum" ? NdaVariant::kSum
                                     : NdaVariant::kLearnable;
  const std::string& source = get("statistic_source");
  t.statistic_source = source == "s+q-1"     ? StatisticSource::kSupportQueryOne
                       : source == "s+q-1x5" ? StatisticSource::kSupportQueryFive
                                             : StatisticSource::kQueryAll;
  t.pool_mode = get("pool_mode") == "pooled" ? PoolMode::kPooled : PoolMode::kStacked;
  t.eps = as_real(*this, "eps");
  t.shared_finetune = as_bool(*this, "shared_finetune");
  t.episodes = as_int(*this, "episodes");
  t.workers = as_int(*this, "workers");
  t.seed = data::parse_u64("seed", get("seed"));
  t.episode.ways = as_int(*this, "ways");
  t.episode.shots = as_int(*this, "shots");
  t.episode.queries_per_class = as_int(*this, "queries_per_class");
  t.episode.pseudo_query_shots = as_int(*this, "pseudo_query_shots");
  t.episode.support_pool = as_int(*this, "target_support_items");
  t.episode.seed = t.seed;
  t.validate();
  return t;
}

data::SynthConfig Config::synth() const {
  data::SynthConfig s;
  s.source_classes = as_int(*this, "source_classes");
  s.target_classes = as_int(*this, "target_classes");
  s.source_items_per_class = as_int(*this, "source_items_per_class");
  s.target_support_items = as_int(*this, "target_support_items");
  s.target_query_items = as_int(*this, "target_query_items");
  s.width = as_int(*this, "width");
  s.height = as_int(*this, "height");
  s.channels = as_int(*this, "raw_channels");
  s.separation = as_real(*this, "separation");
  s.shift_scale = as_real(*this, "shift_scale");
  s.shift_offset = as_real(*this, "shift_offset");
  s.query_offset = as_real(*this, "query_offset");
  s.noise = as_real(*this, "noise");
  s.seed = data::parse_u64("seed", get("seed"));
  s.validate();
  return s;
}

std::vector<std::string> Config::keys() {
  std::vector<std::string> out;
  for (const KeySpec& k : schema()) out.emplace_back(k.name);
  return out;
}

Config load_config(const std::filesystem::path& file, const data::KeyValues& overrides) {
  Config c;
  data::KeyValues from_file;
  if (!file.empty()) from_file = data::read_key_values(file);
  c.merge(from_file);
  c.merge(overrides);
  if (!from_file.contains("workers") && !overrides.contains("workers")) {
    if (const char* env = std::getenv("DARA_WORKERS"); env != nullptr && *env != '\0') {
      c.set("workers", env);
    }
  }
  return c;
}

}  // namespace dara::pipeline
