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
#ifndef DARA_DARA_H_
#define DARA_DARA_H_

#include <stddef.h>

#if defined(_WIN32)
#define DARA_API __declspec(dllexport)
#elif defined(__GNUC__)
#define DARA_API __attribute__((visibility("default")))
#else
#define DARA_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum dara_status {
  DARA_OK = 0,
  DARA_ERR_CONFIG = 1,     /* unknown key, bad value, missing required path */
  DARA_ERR_IO = 2,         /* file could not be opened, read or written */
  DARA_ERR_FORMAT = 3,     /* bad magic, truncated or inconsistent file */
  DARA_ERR_INVALID = 4,    /* shapes, labels, too few items, bad arguments */
  DARA_ERR_NUMERIC = 5,    /* divergence, singular system, zero-norm feature */
  DARA_ERR_INTERNAL = 6
} dara_status;

/* Message of the last failure on the calling thread; never NULL. */
DARA_API const char* dara_last_error(void);
DARA_API const char* dara_status_name(dara_status status);

typedef struct dara_config dara_config;

/* Defaults, then `path` (may be NULL or empty), then DARA_WORKERS when the
 * file does not set `workers`. */
DARA_API dara_status dara_config_load(const char* path, dara_config** out);
DARA_API void dara_config_free(dara_config* config);
DARA_API dara_status dara_config_set(dara_config* config, const char* key, const char* value);
/* Pointer stays valid until the next set on the same key or free. */
DARA_API dara_status dara_config_get(const dara_config* config, const char* key,
                                     const char** value);
/* Writes 16 hex digits plus NUL; `buf` must hold 17 bytes. */
DARA_API dara_status dara_config_digest(const dara_config* config, char* buf, size_t size);

/* Each command reads and writes only the path keys it names. */

/* -> source_bank, target_bank */
DARA_API dara_status dara_synth(const dara_config* config);
/* source_bank -> checkpoint */
DARA_API dara_status dara_pretrain(const dara_config* config);
/* checkpoint, target_bank -> output (checkpoint with Z and gate) */
DARA_API dara_status dara_finetune(const dara_config* config);
/* checkpoint, target_bank -> report [, episode_csv]; mean/ci95 may be NULL */
DARA_API dara_status dara_evaluate(const dara_config* config, double* mean, double* ci95);
/* checkpoint, target_bank -> histogram */
DARA_API dara_status dara_histogram(const dara_config* config);

/* Human-readable header of a bank or checkpoint; release with dara_string_free. */
DARA_API dara_status dara_inspect(const char* path, char** text);
DARA_API void dara_string_free(char* text);

#ifdef __cplusplus
}
#endif

#endif  /* DARA_DARA_H_ */
