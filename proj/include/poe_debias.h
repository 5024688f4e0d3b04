/* C API for the poe_debias shared library.
 *
 * All functions return POE_OK (0) on success. On failure they return a
 * nonzero status and leave a human-readable message retrievable through
 * poe_last_error() on the calling thread. Strings returned through output
 * parameters are heap-allocated and must be released with poe_string_free().
 * Status values double as CLI exit codes: 2 for configuration problems,
 * 3 for runtime failures.
 */
#ifndef POE_DEBIAS_H
#define POE_DEBIAS_H

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum poe_status {
  POE_OK = 0,
  POE_ERROR_CONFIG = 2,
  POE_ERROR_RUNTIME = 3
} poe_status;

const char* poe_version(void);

/* Message for the most recent failure on this thread; empty string if none. */
const char* poe_last_error(void);

void poe_string_free(char* s);

/* ---- dataset handle ---------------------------------------------------- */

typedef struct poe_dataset poe_dataset;

/* Generates the dataset described by the gen.* section of a config file. */
poe_status poe_dataset_generate(const char* config_path, poe_dataset** out);
poe_status poe_dataset_load(const char* path, poe_dataset** out);
poe_status poe_dataset_save(const poe_dataset* ds, const char* path);
/* Bias alignment/presence rates plus Bayes ceiling estimates, as JSON. */
poe_status poe_dataset_stats(const poe_dataset* ds, char** json_out);
size_t poe_dataset_train_size(const poe_dataset* ds);
size_t poe_dataset_eval_size(const poe_dataset* ds);
void poe_dataset_free(poe_dataset* ds);

/* ---- experiment operations --------------------------------------------- */

/* Writes a dataset file and returns its statistics as JSON. */
poe_status poe_cmd_gen(const char* config_path, const char* out_path,
                       char** stats_json_out);

/* Two-stage pipeline: trains the weak learner and the CE / PoE / PoE+CE
 * main variants, writing models, dynamics and metrics.json into out_dir. */
poe_status poe_cmd_run(const char* config_path, const char* out_dir,
                       char** metrics_json_out);

/* Sweeps the config's declared axis. num_seeds 0 means "use the config";
 * jobs 0 means 1. */
poe_status poe_cmd_sweep(const char* config_path, const char* out_dir,
                         size_t num_seeds, size_t jobs,
                         char** summary_json_out);

/* Post-hoc analyses over a run directory produced by poe_cmd_run.
 * config_path may be NULL. */
poe_status poe_cmd_analyze(const char* config_path, const char* run_dir,
                           char** summary_json_out);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* POE_DEBIAS_H */
