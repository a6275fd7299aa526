/* C interface to the afgan library. All functions are safe to call from C;
 * failures return a status code and leave a message in afgan_last_error(). */
#ifndef AFGAN_AFGAN_H
#define AFGAN_AFGAN_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define AFGAN_API __declspec(dllexport)
#else
#define AFGAN_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum afgan_status {
  AFGAN_OK = 0,
  AFGAN_ERR_CONFIG = 1,       /* invalid configuration or arguments */
  AFGAN_ERR_DATA = 2,         /* unreadable input data, I/O failure */
  AFGAN_ERR_NUMERIC = 3,      /* non-finite loss or gradient */
  AFGAN_ERR_ADAPTER = 4,      /* classifier protocol violation */
  AFGAN_ERR_CHECK_FAILED = 5, /* a gradient check exceeded its tolerance */
  AFGAN_ERR_FORMAT = 6,       /* malformed or incompatible checkpoint */
  AFGAN_ERR_INTERNAL = 7
} afgan_status;

typedef struct afgan_config afgan_config;
typedef struct afgan_report afgan_report;

typedef void (*afgan_log_fn)(const char* line, void* user);
typedef void (*afgan_check_fn)(const char* name, double max_rel_error, double tolerance, int passed, void* user);

AFGAN_API const char* afgan_version(void);

/* Message for the most recent failure on this thread; "" after success. */
AFGAN_API const char* afgan_last_error(void);

/* Progress lines (training epochs, skipped images). NULL disables. */
AFGAN_API void afgan_set_log(afgan_log_fn fn, void* user);

/* Upper bound on worker threads; the library currently runs single-threaded,
 * so any value >= 1 is accepted and 1 is the deterministic setting. */
AFGAN_API afgan_status afgan_set_threads(int threads);

/* preset: "full", "desk" or NULL (same as "full"). */
AFGAN_API afgan_status afgan_config_new(const char* preset, afgan_config** out);
AFGAN_API void afgan_config_free(afgan_config* cfg);
/* Applies a key=value file on top of the current values. */
AFGAN_API afgan_status afgan_config_load(afgan_config* cfg, const char* path);
AFGAN_API afgan_status afgan_config_set(afgan_config* cfg, const char* key, const char* value);
AFGAN_API afgan_status afgan_config_validate(const afgan_config* cfg);
/* Canonical key=value text. Writes at most cap bytes including the NUL and
 * stores the full length (without NUL) in *needed when non-NULL. */
AFGAN_API afgan_status afgan_config_text(const afgan_config* cfg, char* buf, size_t cap, size_t* needed);

/* Trains on the images under data_dir and writes run artifacts to out_dir.
 * resume_checkpoint may be NULL. */
AFGAN_API afgan_status afgan_train(const afgan_config* cfg, const char* data_dir, const char* out_dir,
                                   const char* resume_checkpoint);

/* sets directories of count images each from the checkpoint's generator. */
AFGAN_API afgan_status afgan_generate(const char* checkpoint, int sets, int count, uint64_t seed,
                                      const char* out_dir);

/* Scores each set_* directory under images_dir with the classifier command,
 * writes report_path (when non-NULL) and returns the report in *out. */
AFGAN_API afgan_status afgan_evaluate(const char* images_dir, const char* classifier_cmd, double threshold,
                                      double timeout_seconds, const char* report_path, afgan_report** out);
AFGAN_API void afgan_report_free(afgan_report* report);
AFGAN_API size_t afgan_report_sets(const afgan_report* report);
AFGAN_API afgan_status afgan_report_row(const afgan_report* report, size_t index, int* accepted, int* total,
                                        double* accuracy);
AFGAN_API double afgan_report_mean(const afgan_report* report);

/* Runs the finite-difference suite; fn (may be NULL) receives every check.
 * Returns AFGAN_ERR_CHECK_FAILED when any check fails. */
AFGAN_API afgan_status afgan_gradcheck(double tolerance, afgan_check_fn fn, void* user);

/* Per-layer parameter table for the configured model size. */
AFGAN_API afgan_status afgan_param_report(const afgan_config* cfg, char* buf, size_t cap, size_t* needed);

#ifdef __cplusplus
}
#endif

#endif
