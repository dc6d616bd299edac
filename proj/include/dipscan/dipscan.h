/* C interface to the dipscan library.
 *
 * Every function returns a dipscan_status; on failure a message is available
 * from dipscan_last_error() on the calling thread. Matrices cross the
 * interface as dense row-major arrays of double. Strings returned by the
 * library are owned by the object they came from and stay valid until that
 * object is freed.
 */
#ifndef DIPSCAN_DIPSCAN_H
#define DIPSCAN_DIPSCAN_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define DIPSCAN_API __declspec(dllexport)
#else
#define DIPSCAN_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum dipscan_status {
  DIPSCAN_OK = 0,
  DIPSCAN_INVALID_ARGUMENT = 1,
  DIPSCAN_DIMENSION_MISMATCH = 2,
  DIPSCAN_NOT_SYMMETRIC = 3,
  DIPSCAN_NOT_POSITIVE_SEMIDEFINITE = 4,
  DIPSCAN_OUTSIDE_METRIC_RANGE = 5,
  DIPSCAN_SINGULAR_METRIC = 6,
  DIPSCAN_UPDATE_SINGULAR = 7,
  DIPSCAN_DEGENERATE_CANDIDATE = 8,
  DIPSCAN_ZERO_DATA = 9,
  DIPSCAN_SOURCE_NOT_IDENTIFIABLE = 10,
  DIPSCAN_INSUFFICIENT_SAMPLES = 11,
  DIPSCAN_ELORETA_INDEFINITE = 12,
  DIPSCAN_ELORETA_NOT_CONVERGED = 13,
  DIPSCAN_NULL_CONSTRAINT = 14,
  DIPSCAN_NO_SOURCE = 15,
  DIPSCAN_DOMAIN = 16,
  DIPSCAN_BALANCED_CASE = 17,
  DIPSCAN_WHITENING_METRIC = 18,
  DIPSCAN_NO_WITNESS = 19,
  DIPSCAN_CONFIG = 20,
  DIPSCAN_IO = 21,
  DIPSCAN_INTERNAL = 99
} dipscan_status;

typedef enum dipscan_format {
  DIPSCAN_FORMAT_DEFAULT = 0, /* whatever the config says */
  DIPSCAN_FORMAT_CSV = 1,
  DIPSCAN_FORMAT_JSON = 2,
  DIPSCAN_FORMAT_BOTH = 3
} dipscan_format;

typedef struct dipscan_config dipscan_config;
typedef struct dipscan_result dipscan_result;
typedef struct dipscan_metric dipscan_metric;

DIPSCAN_API const char* dipscan_version(void);
DIPSCAN_API const char* dipscan_status_name(dipscan_status status);
/* Message of the last failed call on this thread, "" if none. */
DIPSCAN_API const char* dipscan_last_error(void);

/* --- experiments ------------------------------------------------------- */

DIPSCAN_API size_t dipscan_experiment_count(void);
DIPSCAN_API dipscan_status dipscan_experiment_info(size_t index, const char** name, const char** description);

/* --- configuration ----------------------------------------------------- */

DIPSCAN_API dipscan_status dipscan_config_load(const char* path, dipscan_config** out);
DIPSCAN_API dipscan_status dipscan_config_parse(const char* text, dipscan_config** out);
/* Override a key; overrides win over every value in the file. */
DIPSCAN_API dipscan_status dipscan_config_set(dipscan_config* config, const char* key, const char* value);
/* Resolves every selected experiment, reporting the first invalid field. */
DIPSCAN_API dipscan_status dipscan_config_validate(const dipscan_config* config);
/* Experiments the config selects: the `experiment` key, else every section. */
DIPSCAN_API dipscan_status dipscan_config_selected_count(const dipscan_config* config, size_t* count);
DIPSCAN_API dipscan_status dipscan_config_selected_name(const dipscan_config* config, size_t index, const char** name);
DIPSCAN_API void dipscan_config_free(dipscan_config* config);

/* --- running ------------------------------------------------------------ */

/* experiment may be NULL for the first selected experiment. */
DIPSCAN_API dipscan_status dipscan_run(const dipscan_config* config, const char* experiment, dipscan_result** out);

DIPSCAN_API int dipscan_result_pass(const dipscan_result* result);
DIPSCAN_API uint64_t dipscan_result_seed(const dipscan_result* result);
DIPSCAN_API size_t dipscan_result_instances(const dipscan_result* result);
DIPSCAN_API double dipscan_result_max_deviation(const dipscan_result* result);
DIPSCAN_API double dipscan_result_tolerance(const dipscan_result* result);
DIPSCAN_API size_t dipscan_result_failing_seed_count(const dipscan_result* result);
DIPSCAN_API uint64_t dipscan_result_failing_seed(const dipscan_result* result, size_t index);
DIPSCAN_API const char* dipscan_result_experiment(const dipscan_result* result);
DIPSCAN_API const char* dipscan_result_summary(const dipscan_result* result);
DIPSCAN_API const char* dipscan_result_json(const dipscan_result* result);
DIPSCAN_API const char* dipscan_result_csv(const dipscan_result* result);
/* Writes <experiment>-<seed>.csv/.json. NULL out_dir uses the config's out_dir.
 * The number of files written is stored in *written when written is not NULL. */
DIPSCAN_API dipscan_status dipscan_result_write(const dipscan_result* result, const char* out_dir,
                                                dipscan_format format, size_t* written);
DIPSCAN_API void dipscan_result_free(dipscan_result* result);

/* --- numerics ------------------------------------------------------------ */

/* Metric from a symmetric positive semidefinite n x n matrix. */
DIPSCAN_API dipscan_status dipscan_metric_create(const double* matrix, size_t n, dipscan_metric** out);
DIPSCAN_API size_t dipscan_metric_dim(const dipscan_metric* metric);
DIPSCAN_API size_t dipscan_metric_rank(const dipscan_metric* metric);
DIPSCAN_API void dipscan_metric_free(dipscan_metric* metric);

/* Goodness of fit of the n x k candidate `leadfield` to data d (length n). */
DIPSCAN_API dipscan_status dipscan_gof(const dipscan_metric* metric, const double* leadfield, size_t n, size_t k,
                                       const double* data, double* gof);
/* Squared norm of the sLORETA reconstruction for the same inputs. */
DIPSCAN_API dipscan_status dipscan_sloreta_power(const dipscan_metric* metric, const double* leadfield, size_t n,
                                                 size_t k, const double* data, double* power);
/* Weighted least-squares moment (length k). */
DIPSCAN_API dipscan_status dipscan_fit_moment(const dipscan_metric* metric, const double* leadfield, size_t n,
                                              size_t k, const double* data, double* moment);

#ifdef __cplusplus
}
#endif

#endif /* DIPSCAN_DIPSCAN_H */
