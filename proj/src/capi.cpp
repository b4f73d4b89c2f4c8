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
#include "dara/dara.h"

#include <cstdlib>
#include <cstring>
#include <new>
#include <string>

#include "dara/data/bank.hpp"
#include "dara/data/synth.hpp"
#include "dara/error.hpp"
#include "dara/pipeline/model.hpp"
#include "dara/pipeline/pipeline.hpp"

struct dara_config {
  dara::pipeline::Config config;
};

namespace {

thread_local std::string last_error;

dara_status status_of(dara::ErrorCode code) {
  using dara::ErrorCode;
  switch (code) {
    case ErrorCode::kConfig:
      return DARA_ERR_CONFIG;
    case ErrorCode::kIo:
      return DARA_ERR_IO;
    case ErrorCode::kBadMagic:
    case ErrorCode::kHeaderMismatch:
      return DARA_ERR_FORMAT;
    case ErrorCode::kNotPositiveDefinite:
    case ErrorCode::kZeroNormFeature:
    case ErrorCode::kDivergence:
      return DARA_ERR_NUMERIC;
    default:
      return DARA_ERR_INVALID;
  }
}

template <typename F>
dara_status guarded(F&& body) {
  try {
    body();
    last_error.clear();
    return DARA_OK;
  } catch (const dara::Error& e) {
    last_error = e.what();
    return status_of(e.code());
  } catch (const std::bad_alloc&) {
    last_error = "out of memory";
  } catch (const std::exception& e) {
    last_error = e.what();
  } catch (...) {
    last_error = "unknown failure";
  }
  return DARA_ERR_INTERNAL;
}

dara_status null_argument(const char* what) {
  last_error = std::string("null argument: ") + what;
  return DARA_ERR_INVALID;
}

}  // namespace

extern "C" {

const char* dara_last_error(void) { return last_error.c_str(); }

const char* dara_status_name(dara_status status) {
  switch (status) {
    case DARA_OK: return "ok";
    case DARA_ERR_CONFIG: return "config";
    case DARA_ERR_IO: return "io";
    case DARA_ERR_FORMAT: return "format";
    case DARA_ERR_INVALID: return "invalid";
    case DARA_ERR_NUMERIC: return "numeric";
    case DARA_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

dara_status dara_config_load(const char* path, dara_config** out) {
  if (out == nullptr) return null_argument("out");
  *out = nullptr;
  return guarded([&] {
    auto* handle = new dara_config{
        dara::pipeline::load_config(path == nullptr ? "" : path, {})};
    *out = handle;
  });
}

void dara_config_free(dara_config* config) { delete config; }

dara_status dara_config_set(dara_config* config, const char* key, const char* value) {
  if (config == nullptr || key == nullptr || value == nullptr) return null_argument("config/key/value");
  return guarded([&] { config->config.set(key, value); });
}

dara_status dara_config_get(const dara_config* config, const char* key, const char** value) {
  if (config == nullptr || key == nullptr || value == nullptr) return null_argument("config/key/value");
  return guarded([&] { *value = config->config.get(key).c_str(); });
}

dara_status dara_config_digest(const dara_config* config, char* buf, size_t size) {
  if (config == nullptr || buf == nullptr) return null_argument("config/buf");
  return guarded([&] {
    const std::string d = config->config.digest();
    if (size < d.size() + 1) dara::fail(dara::ErrorCode::kInvalidArgument, "digest buffer too small");
    std::memcpy(buf, d.c_str(), d.size() + 1);
  });
}

dara_status dara_synth(const dara_config* config) {
  if (config == nullptr) return null_argument("config");
  return guarded([&] {
    const auto& c = config->config;
    const auto source = c.require_path("source_bank");
    const auto target = c.require_path("target_bank");
    const auto banks = dara::data::gen_synthetic(c.synth());
    dara::data::save_bank(banks.source, source);
    dara::data::save_bank(banks.target, target);
  });
}

dara_status dara_pretrain(const dara_config* config) {
  if (config == nullptr) return null_argument("config");
  return guarded([&] {
    const auto& c = config->config;
    const auto source = c.require_path("source_bank");
    const auto out = c.require_path("checkpoint");
    const auto train = c.train();
    const auto result = dara::pipeline::pretrain_source(dara::data::load_bank(source), train);
    dara::pipeline::save_checkpoint(result.model, out);
  });
}

dara_status dara_finetune(const dara_config* config) {
  if (config == nullptr) return null_argument("config");
  return guarded([&] {
    const auto& c = config->config;
    const auto in = c.require_path("checkpoint");
    const auto target = c.require_path("target_bank");
    const auto out = c.require_path("output");
    const auto train = c.train();
    const auto model = dara::pipeline::finetune_shared(dara::pipeline::load_checkpoint(in),
                                                       dara::data::load_bank(target), train);
    dara::pipeline::save_checkpoint(model, out);
  });
}

dara_status dara_evaluate(const dara_config* config, double* mean, double* ci95) {
  if (config == nullptr) return null_argument("config");
  return guarded([&] {
    const auto& c = config->config;
    const auto in = c.require_path("checkpoint");
    const auto target = c.require_path("target_bank");
    const auto report_path = c.require_path("report");
    const auto train = c.train();
    const auto report = dara::pipeline::evaluate(dara::pipeline::load_checkpoint(in),
                                                 dara::data::load_bank(target), train, c.digest());
    dara::pipeline::write_report(report, report_path);
    if (!c.get("episode_csv").empty()) dara::pipeline::write_episode_csv(report, c.get("episode_csv"));
    if (mean != nullptr) *mean = report.mean;
    if (ci95 != nullptr) *ci95 = report.ci95;
  });
}

dara_status dara_histogram(const dara_config* config) {
  if (config == nullptr) return null_argument("config");
  return guarded([&] {
    const auto& c = config->config;
    const auto in = c.require_path("checkpoint");
    const auto target = c.require_path("target_bank");
    const auto out = c.require_path("histogram");
    const auto train = c.train();
    const auto rows = dara::pipeline::distance_histogram(dara::pipeline::load_checkpoint(in),
                                                         dara::data::load_bank(target), train);
    dara::pipeline::write_histogram_csv(rows, out);
  });
}

dara_status dara_inspect(const char* path, char** text) {
  if (path == nullptr || text == nullptr) return null_argument("path/text");
  *text = nullptr;
  return guarded([&] {
    const std::string s = dara::pipeline::inspect_file(path);
    char* buf = static_cast<char*>(std::malloc(s.size() + 1));
    if (buf == nullptr) throw std::bad_alloc();
    std::memcpy(buf, s.c_str(), s.size() + 1);
    *text = buf;
  });
}

void dara_string_free(char* text) { std::free(text); }

}  // extern "C"
