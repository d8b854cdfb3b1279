/* Copyright 2026 The pvo Authors.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

/* C API of the polar occupancy library. All functions return a status code:
 *   0  success
 *   1  internal error (numerics, unexpected state)
 *   2  usage/validation error (bad config, bad paths, malformed data)
 * On failure pvo_last_error() describes the problem (thread-local). Handles
 * are opaque; strings returned through out-parameters are heap-allocated and
 * must be released with pvo_string_free().
 */
#ifndef PVO_PVO_H_
#define PVO_PVO_H_

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#define PVO_OK 0
#define PVO_ERR_INTERNAL 1
#define PVO_ERR_USAGE 2

const char* pvo_version(void);
const char* pvo_last_error(void);
void pvo_string_free(char* s);

/* ---- configuration ---- */

typedef struct pvo_config pvo_config;

int pvo_config_create_preset(const char* name, pvo_config** out);
int pvo_config_create_from_file(const char* path, pvo_config** out);
int pvo_config_create_from_json(const char* json_text, pvo_config** out);
void pvo_config_destroy(pvo_config* cfg);
int pvo_config_set_seed(pvo_config* cfg, uint64_t seed);
int pvo_config_set_threads(pvo_config* cfg, int threads);
int pvo_config_to_json(const pvo_config* cfg, char** out_json);

/* ---- dense arrays (flat binary container "PVOARR1") ---- */

typedef struct pvo_array pvo_array;

int pvo_array_create(const uint32_t* shape, uint32_t rank, pvo_array** out);
int pvo_array_load(const char* path, pvo_array** out);
int pvo_array_save(const pvo_array* a, const char* path);
void pvo_array_destroy(pvo_array* a);
uint32_t pvo_array_rank(const pvo_array* a);
uint32_t pvo_array_extent(const pvo_array* a, uint32_t axis);
int64_t pvo_array_numel(const pvo_array* a);
double* pvo_array_data(pvo_array* a);

/* ---- commands (mirror the CLI surface) ---- */

/* Writes n_scenes scene/cloud/truth/camera file quadruples plus a manifest. */
int pvo_cmd_synth(const pvo_config* cfg, int n_scenes, const char* out_dir);

/* Forward + metrics over a dataset directory; params_path may be NULL for
 * seeded initialization. Writes a metrics report JSON. */
int pvo_cmd_run(const pvo_config* cfg, const char* data_dir,
                const char* params_path, const char* out_report);

/* Trains on a dataset directory; writes log.jsonl, checkpoint.ckpt and a
 * manifest into out_dir. */
int pvo_cmd_train(const pvo_config* cfg, const char* data_dir,
                  const char* out_dir);

/* Runs the five component-toggle rows; writes ablation.md / ablation.json. */
int pvo_cmd_ablate(const pvo_config* cfg, const char* train_dir,
                   const char* val_dir, const char* out_dir);

/* Full-pipeline gradient check on the tiny preset; writes a report JSON.
 * Returns 1 when the check itself fails its tolerance. */
int pvo_cmd_gradcheck(const pvo_config* cfg, const char* out_report);

/* Occupancy histograms of the dataset's clouds on the polar grid and on the
 * equal-voxel-count Cartesian grid. */
int pvo_cmd_stats(const pvo_config* cfg, const char* data_dir, int bands,
                  const char* out_report);

/* Resamples a feature volume file from the config's input grid onto the
 * Cartesian output grid. */
int pvo_cmd_resample(const pvo_config* cfg, const char* in_array,
                     const char* out_array);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* PVO_PVO_H_ */
