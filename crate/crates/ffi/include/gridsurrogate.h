#ifndef GRIDSURROGATE_H
#define GRIDSURROGATE_H

#include <stdint.h>
#include <stddef.h>

#define GS_SCENARIO_HOMOGENEOUS 0

#define GS_SCENARIO_HETEROGENEOUS 1

/**
 * Result of every fallible call. Values 2 to 8 match the exit codes of the
 * `gridsurrogate` command line.
 */
typedef enum GsStatus {
  GS_OK = 0,
  GS_INVALID_ARGUMENT = 1,
  GS_MANIFEST_ERROR = 2,
  GS_IO_ERROR = 3,
  GS_MISSING_ARTIFACT = 4,
  GS_FORMAT_ERROR = 5,
  GS_SIMULATION_ERROR = 6,
  GS_MODEL_ERROR = 7,
  GS_EVALUATION_ERROR = 8,
  GS_PANIC = 9,
} GsStatus;

/**
 * Platform description (opaque).
 */
typedef struct GsPlatform GsPlatform;

/**
 * Row-major prediction matrix, one row per job (opaque).
 */
typedef struct GsPrediction GsPrediction;

/**
 * One simulated workload with its trace (opaque).
 */
typedef struct GsSimulation GsSimulation;

/**
 * Trained surrogate loaded from a checkpoint (opaque).
 */
typedef struct GsSurrogate GsSurrogate;

/**
 * Per-job observables of a trace row. Times are seconds.
 */
typedef struct GsTraceRecord {
  uint64_t simulation_id;
  uint64_t job_index;
  double submission_time;
  double start_time;
  double end_time;
  double compute_time;
  double input_files_transfer_time;
  double output_files_transfer_time;
  uint64_t input_bytes;
  uint64_t output_bytes;
} GsTraceRecord;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. The pointer is
 * valid until the next failing call on the same thread.
 */
const char *gs_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *gs_version(void);

/**
 * Built-in platform preset of a scenario.
 *
 * # Safety
 * `out` must be a valid pointer to a handle slot.
 */
enum GsStatus gs_platform_builtin(int32_t scenario_id, struct GsPlatform **out);

/**
 * Parses a platform description from JSON text.
 *
 * # Safety
 * `json` must be a NUL-terminated string, `out` a valid handle slot.
 */
enum GsStatus gs_platform_from_json(const char *json, struct GsPlatform **out);

/**
 * # Safety
 * `platform` must come from a `gs_platform_*` constructor and not be used
 * afterwards. NULL is ignored.
 */
void gs_platform_free(struct GsPlatform *platform);

/**
 * Generates a workload of `n_jobs` jobs and simulates it. Negative
 * `n_jobs` is rejected with `GS_INVALID_ARGUMENT`.
 *
 * # Safety
 * `platform` must be a live handle, `out` a valid handle slot.
 */
enum GsStatus gs_simulate(const struct GsPlatform *platform,
                          int32_t scenario_id,
                          int64_t n_jobs,
                          uint64_t simulation_id,
                          uint64_t seed,
                          struct GsSimulation **out);

/**
 * Number of jobs (and trace rows) in a simulation; 0 for NULL.
 *
 * # Safety
 * `sim` must be a live handle or NULL.
 */
uintptr_t gs_simulation_len(const struct GsSimulation *sim);

/**
 * Copies trace row `index` into `out`.
 *
 * # Safety
 * `sim` must be a live handle and `out` point to writable memory.
 */
enum GsStatus gs_simulation_record(const struct GsSimulation *sim,
                                   uintptr_t index,
                                   struct GsTraceRecord *out);

/**
 * Writes the workload and trace as CSV files. Either path may be NULL to
 * skip that file.
 *
 * # Safety
 * `sim` must be a live handle; paths NULL or NUL-terminated.
 */
enum GsStatus gs_simulation_write_csv(const struct GsSimulation *sim,
                                      const char *workload_path,
                                      const char *trace_path);

/**
 * # Safety
 * `sim` must come from [`gs_simulate`] and not be used afterwards. NULL is
 * ignored.
 */
void gs_simulation_free(struct GsSimulation *sim);

/**
 * Loads a checkpoint written by `gridsurrogate train`.
 *
 * # Safety
 * `path` must be NUL-terminated, `out` a valid handle slot.
 */
enum GsStatus gs_surrogate_load(const char *path, struct GsSurrogate **out);

/**
 * Predicts the observables of every job of `sim` from its workload alone.
 * The simulation's trace is not consulted.
 *
 * # Safety
 * Both handles must be live, `out` a valid handle slot.
 */
enum GsStatus gs_surrogate_predict(const struct GsSurrogate *surrogate,
                                   const struct GsSimulation *sim,
                                   struct GsPrediction **out);

/**
 * # Safety
 * `surrogate` must come from [`gs_surrogate_load`] and not be used
 * afterwards. NULL is ignored.
 */
void gs_surrogate_free(struct GsSurrogate *surrogate);

/**
 * # Safety
 * `pred` must be a live handle or NULL.
 */
uintptr_t gs_prediction_rows(const struct GsPrediction *pred);

/**
 * Observables per row, in the order compute_time,
 * input_files_transfer_time, output_files_transfer_time, start_time,
 * end_time.
 *
 * # Safety
 * `pred` must be a live handle or NULL.
 */
uintptr_t gs_prediction_cols(const struct GsPrediction *pred);

/**
 * Row-major values, `rows * cols` long, owned by the handle.
 *
 * # Safety
 * `pred` must be a live handle or NULL.
 */
const double *gs_prediction_data(const struct GsPrediction *pred);

/**
 * # Safety
 * `pred` must come from [`gs_surrogate_predict`] and not be used
 * afterwards. NULL is ignored.
 */
void gs_prediction_free(struct GsPrediction *pred);

/**
 * Runs the command line with `argv[0..argc]` and returns its exit code.
 *
 * # Safety
 * `argv` must hold `argc` NUL-terminated strings.
 */
int32_t gs_run_cli(int32_t argc, const char *const *argv);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GRIDSURROGATE_H */
