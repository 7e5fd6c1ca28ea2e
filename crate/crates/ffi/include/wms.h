#ifndef WMS_H
#define WMS_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

/**
 * Result code of every fallible call. `WMS_STATUS_OK` is zero.
 */
typedef enum WmsStatus {
  WMS_STATUS_OK = 0,
  WMS_STATUS_NULL_POINTER = 1,
  WMS_STATUS_INVALID_ARGUMENT = 2,
  WMS_STATUS_DIMENSION_MISMATCH = 3,
  WMS_STATUS_NOT_POSITIVE_SEMIDEFINITE = 4,
  WMS_STATUS_SINGULAR = 5,
  WMS_STATUS_NOT_CONVERGED = 6,
  WMS_STATUS_NOT_STABILIZABLE = 7,
  WMS_STATUS_NOT_DETECTABLE = 8,
  WMS_STATUS_UNSTABLE_CLOSED_LOOP = 9,
  WMS_STATUS_NO_WATERMARK_PATH = 10,
  WMS_STATUS_SINGULAR_EXCITATION = 11,
  WMS_STATUS_NUMERICAL_BLOWUP = 12,
  WMS_STATUS_WINDOW_ERROR = 13,
  WMS_STATUS_IO = 14,
  WMS_STATUS_PANIC = 15,
} WmsStatus;

/**
 * Plant with controller, observer and watermark covariance.
 */
typedef struct WmsModel WmsModel;

/**
 * Plant description `(A, B, C, Σ_W, Σ_Z)`.
 */
typedef struct WmsPlant WmsPlant;

/**
 * Detector output for one trace.
 */
typedef struct WmsReport WmsReport;

/**
 * Simulated trajectory.
 */
typedef struct WmsTrace WmsTrace;

/**
 * Replay-style attack with isotropic noise covariances.
 */
typedef struct WmsAttack {
  double alpha;
  double sigma_o;
  double sigma_s;
} WmsAttack;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf` (NUL-terminated,
 * truncated to `len`). Returns the full message length in bytes.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t wms_last_error_message(char *buf, size_t len);

/**
 * Builds a plant from row-major `A` (p×p), `B` (p×q), `C` (m×p),
 * `Σ_W` (p×p) and `Σ_Z` (m×m).
 *
 * # Safety
 * Matrix pointers must reference arrays of the stated sizes; `out` must be
 * writable.
 */
enum WmsStatus wms_plant_new(size_t p,
                             size_t q,
                             size_t m,
                             const double *a,
                             const double *b,
                             const double *c,
                             const double *sigma_w,
                             const double *sigma_z,
                             struct WmsPlant **out);

/**
 * The built-in vehicle plant, optionally with the wind state.
 *
 * # Safety
 * `out` must be writable.
 */
enum WmsStatus wms_plant_vehicle(bool include_wind, struct WmsPlant **out);

/**
 * The built-in double-integrator plant.
 *
 * # Safety
 * `out` must be writable.
 */
enum WmsStatus wms_plant_double_integrator(struct WmsPlant **out);

/**
 * Writes the state, input and output dimensions.
 *
 * # Safety
 * `plant` must come from this library; out pointers may be null.
 */
enum WmsStatus wms_plant_dims(const struct WmsPlant *plant, size_t *p, size_t *q, size_t *m);

/**
 * # Safety
 * `plant` must be null or come from this library and not be used again.
 */
void wms_plant_free(struct WmsPlant *plant);

/**
 * Synthesizes default LQR / Kalman gains for `plant` and assembles the
 * closed loop with watermark covariance `watermark_var · I`.
 *
 * # Safety
 * `plant` must come from this library; `out` must be writable.
 */
enum WmsStatus wms_model_new(const struct WmsPlant *plant,
                             double watermark_var,
                             struct WmsModel **out);

/**
 * Assembles a closed loop from explicit gains `K` (q×p), `L` (p×m) and
 * `Σ_E` (q×q), all row-major.
 *
 * # Safety
 * `plant` must come from this library; matrix pointers must reference
 * arrays of the stated sizes; `out` must be writable.
 */
enum WmsStatus wms_model_with_gains(const struct WmsPlant *plant,
                                    const double *k,
                                    const double *l,
                                    const double *sigma_e,
                                    struct WmsModel **out);

/**
 * Watermark lag `k'` of the model.
 *
 * # Safety
 * `model` must come from this library; `out` must be writable.
 */
enum WmsStatus wms_model_kprime(const struct WmsModel *model, size_t *out);

/**
 * # Safety
 * `model` must be null or come from this library and not be used again.
 */
void wms_model_free(struct WmsModel *model);

/**
 * Simulates `horizon` steps of `world` under the detector `model`.
 * `attack` may be null for an honest run.
 *
 * # Safety
 * `world` and `model` must come from this library; `attack` must be null or
 * valid; `out` must be writable.
 */
enum WmsStatus wms_simulate(const struct WmsPlant *world,
                            const struct WmsModel *model,
                            const struct WmsAttack *attack,
                            size_t horizon,
                            uint64_t seed,
                            struct WmsTrace **out);

/**
 * Number of simulated steps.
 *
 * # Safety
 * `trace` must be null or come from this library.
 */
size_t wms_trace_len(const struct WmsTrace *trace);

/**
 * Copies residual `n` (length m) into `out`.
 *
 * # Safety
 * `trace` must come from this library; `out` must hold `m` doubles.
 */
enum WmsStatus wms_trace_residual(const struct WmsTrace *trace, size_t n, double *out);

/**
 * Writes the trace as CSV to `path`.
 *
 * # Safety
 * `trace` must come from this library; `path` must be a NUL-terminated string.
 */
enum WmsStatus wms_trace_write_csv(const struct WmsTrace *trace, const char *path);

/**
 * # Safety
 * `trace` must be null or come from this library and not be used again.
 */
void wms_trace_free(struct WmsTrace *trace);

/**
 * Calibrates the NLL threshold from `runs` honest windows.
 * `ell = 0` selects the default window length.
 *
 * # Safety
 * `model` must come from this library; `tau` must be writable.
 */
enum WmsStatus wms_calibrate(const struct WmsModel *model,
                             size_t ell,
                             double alpha_fa,
                             size_t runs,
                             uint64_t seed,
                             double *tau);

/**
 * Runs every detector statistic on `trace`.
 *
 * # Safety
 * `trace` and `model` must come from this library; `out` must be writable.
 */
enum WmsStatus wms_analyze(const struct WmsTrace *trace,
                           const struct WmsModel *model,
                           size_t ell,
                           double tau,
                           double alpha_fa,
                           struct WmsReport **out);

/**
 * Fraction of windows rejected; NaN for a null report.
 *
 * # Safety
 * `report` must be null or come from this library.
 */
double wms_report_reject_rate(const struct WmsReport *report);

/**
 * Final covariance-deviation statistic; NaN for a null report.
 *
 * # Safety
 * `report` must be null or come from this library.
 */
double wms_report_final_d1(const struct WmsReport *report);

/**
 * Final watermark-correlation statistic; NaN for a null report.
 *
 * # Safety
 * `report` must be null or come from this library.
 */
double wms_report_final_d2(const struct WmsReport *report);

/**
 * Number of tested windows.
 *
 * # Safety
 * `report` must be null or come from this library.
 */
size_t wms_report_window_count(const struct WmsReport *report);

/**
 * Writes the report as CSV to `path`.
 *
 * # Safety
 * `report` must come from this library; `path` must be a NUL-terminated string.
 */
enum WmsStatus wms_report_write_csv(const struct WmsReport *report, const char *path);

/**
 * # Safety
 * `report` must be null or come from this library and not be used again.
 */
void wms_report_free(struct WmsReport *report);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* WMS_H */
