/* Copyright 2026 The ttprompt Authors
 * SPDX-License-Identifier: Apache-2.0
 *
 * C interface to the ttprompt library. Every function returns a status;
 * on failure ttp_last_error() describes the error for the calling thread.
 * Strings handed out through char** parameters are owned by the caller and
 * released with ttp_free_string().
 */
#ifndef TTPROMPT_TTPROMPT_H_
#define TTPROMPT_TTPROMPT_H_

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define TTP_API __declspec(dllexport)
#else
#define TTP_API __attribute__((visibility("default")))
#endif

typedef enum ttp_status {
  TTP_OK = 0,
  TTP_ERR_CONFIG = 1,
  TTP_ERR_SHAPE = 2,
  TTP_ERR_VALIDATION = 3,
  TTP_ERR_CAPACITY = 4,
  TTP_ERR_NUMERIC = 5,
  TTP_ERR_IO = 6,
  TTP_ERR_INTERNAL = 7,
  TTP_ERR_ARGUMENT = 8 /* null handle or pointer, or a call out of order */
} ttp_status;

typedef struct ttp_experiment ttp_experiment;

TTP_API const char* ttp_version(void);
/* Message of the last failed call on this thread; "" after a success. */
TTP_API const char* ttp_last_error(void);
TTP_API const char* ttp_status_name(ttp_status status);
TTP_API void ttp_free_string(char* text);

/* Canonical config (defaults filled, fixed key order) from config JSON. */
TTP_API ttp_status ttp_config_canonical(const char* config_json, char** out_json);
/* Applies "key=value" (nested keys as "synthetic.seed") to a config JSON
 * document. The value is parsed as JSON and falls back to a string. */
TTP_API ttp_status ttp_config_override(const char* config_json, const char* assignment,
                                       char** out_json);

/* Writes a synthetic dataset. spec_json holds the synthetic spec keys
 * (samples, views, dims, classes, labels_per_sample, cluster_separation,
 * noise, seed). csv != 0 writes features as comma-separated text. */
TTP_API ttp_status ttp_gen_data(const char* spec_json, const char* out_dir, int csv);

TTP_API ttp_status ttp_experiment_create(const char* config_json, ttp_experiment** out);
TTP_API ttp_status ttp_experiment_run(ttp_experiment* experiment);
/* Deterministic report; requires a finished run. */
TTP_API ttp_status ttp_experiment_report_json(const ttp_experiment* experiment, char** out_json);
/* Wall-clock seconds per seed and session. */
TTP_API ttp_status ttp_experiment_timing_json(const ttp_experiment* experiment, char** out_json);
/* Saves the model of the first seed's run. */
TTP_API ttp_status ttp_experiment_save_checkpoint(const ttp_experiment* experiment,
                                                  const char* path);
TTP_API void ttp_experiment_destroy(ttp_experiment* experiment);

/* Rebuilds the data from the checkpoint's config and seed, and evaluates
 * every session prefix on the test split. */
TTP_API ttp_status ttp_evaluate_checkpoint(const char* path, char** out_json);

TTP_API ttp_status ttp_param_table(const char* config_json, char** out_json);
/* *passed is set to 1 when every block is within tolerance. */
TTP_API ttp_status ttp_gradcheck(const char* config_json, char** out_json, int* passed);
TTP_API ttp_status ttp_sweep(const char* config_json, char** out_json);

#ifdef __cplusplus
}
#endif

#endif /* TTPROMPT_TTPROMPT_H_ */
