/*
 * Public C interface to the few-shot text classification library.
 *
 * Every object is an opaque handle created and destroyed through this API.
 * Functions return MGIMN_OK on success or a status code; the message for the
 * most recent failure on the calling thread is available via
 * mgimn_last_error().
 */
#ifndef MGIMN_H
#define MGIMN_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum mgimn_status {
  MGIMN_OK = 0,
  MGIMN_ERR_CONFIG = 1,
  MGIMN_ERR_DATA = 2,
  MGIMN_ERR_SHAPE = 3,
  MGIMN_ERR_STATE = 4,
  MGIMN_ERR_SAMPLING = 5,
  MGIMN_ERR_PARSE = 6,
  MGIMN_ERR_IO = 7,
  MGIMN_ERR_CHECK = 8,
  MGIMN_ERR_UNKNOWN = 99
} mgimn_status;

typedef struct mgimn_config mgimn_config;
typedef struct mgimn_dataset mgimn_dataset;
typedef struct mgimn_model mgimn_model;
typedef struct mgimn_report mgimn_report;

const char* mgimn_version(void);
const char* mgimn_last_error(void);

/* ------------------------------------------------------------------ */
/* Run configuration: flat string key/value pairs.                     */

mgimn_status mgimn_config_create(mgimn_config** out);
mgimn_status mgimn_config_load(const char* path, mgimn_config** out);
mgimn_status mgimn_config_set(mgimn_config* cfg, const char* key,
                              const char* value);
void mgimn_config_free(mgimn_config* cfg);

/* ------------------------------------------------------------------ */
/* Datasets: JSON-lines files of {"text": ..., "label": ...} records.  */

/* Classes with fewer than min_per_class instances are rejected; pass 0 (or a
 * negative value) to skip the check. Training needs K + 1 per class. */
mgimn_status mgimn_dataset_load(const char* path, int64_t min_per_class,
                                mgimn_dataset** out);
/* Synthesizes a dataset from the config's synth_* keys. */
mgimn_status mgimn_dataset_generate(const mgimn_config* cfg,
                                    mgimn_dataset** out);
mgimn_status mgimn_dataset_save(const mgimn_dataset* ds, const char* path);
int64_t mgimn_dataset_num_classes(const mgimn_dataset* ds);
int64_t mgimn_dataset_num_instances(const mgimn_dataset* ds);
void mgimn_dataset_free(mgimn_dataset* ds);

/* ------------------------------------------------------------------ */
/* Models.                                                             */

/* Fresh model; the vocabulary is built from the dataset. */
mgimn_status mgimn_model_create(const mgimn_config* cfg,
                                const mgimn_dataset* ds, mgimn_model** out);
/* Rebuilds the model shell from the config plus the saved vocabulary,
 * then loads tensor values from the checkpoint. */
mgimn_status mgimn_model_load(const mgimn_config* cfg, const char* ckpt_path,
                              const char* vocab_path, mgimn_model** out);
mgimn_status mgimn_model_save(const mgimn_model* model, const char* ckpt_path);
int64_t mgimn_model_param_count(const mgimn_model* model);
void mgimn_model_free(mgimn_model* model);

/* ------------------------------------------------------------------ */
/* Commands.                                                           */

/* Episode training; writes model.ckpt, vocab.txt, split.json and
 * metrics.csv under out_dir and leaves the model at its final state. */
mgimn_status mgimn_train(mgimn_model* model, const mgimn_dataset* ds,
                         const mgimn_config* cfg, const char* out_dir);

typedef struct mgimn_eval_result {
  double accuracy;        /* rtc: end-to-end two-stage accuracy */
  double full_accuracy;   /* rtc only */
  double stage1_recall;   /* rtc only */
  double ms_full;         /* rtc only */
  double ms_rtc;          /* rtc only */
  double ms_stage2;       /* rtc only */
  int64_t episodes;
  int64_t queries;
} mgimn_eval_result;

/* setting: "fsl", "gfsl" or "rtc". out_dir may be NULL. */
mgimn_status mgimn_evaluate(const mgimn_model* model, const mgimn_dataset* ds,
                            const mgimn_config* cfg, const char* setting,
                            const char* out_dir, mgimn_eval_result* out);

/* Sweep over sweep_splits x sweep_inits (split seed, init seed) members;
 * writes per-member runs and sweep.csv under out_dir. */
typedef struct mgimn_sweep_result {
  double mean;
  double stddev;
  int64_t members;
} mgimn_sweep_result;
mgimn_status mgimn_sweep(const mgimn_dataset* ds, const mgimn_config* cfg,
                         const char* out_dir, mgimn_sweep_result* out);

/* Finite-difference gradient verification of all three model kinds on a
 * fixed tiny episode. MGIMN_OK with *passed == 0 means the check ran and
 * found mismatches. */
mgimn_status mgimn_grad_check(const mgimn_config* cfg, mgimn_report** out,
                              int* passed);
int64_t mgimn_report_rows(const mgimn_report* report);
const char* mgimn_report_row_name(const mgimn_report* report, int64_t i);
double mgimn_report_row_error(const mgimn_report* report, int64_t i);
double mgimn_report_tolerance(const mgimn_report* report);
const char* mgimn_report_diagnostic(const mgimn_report* report);
void mgimn_report_free(mgimn_report* report);

#ifdef __cplusplus
}
#endif

#endif /* MGIMN_H */
