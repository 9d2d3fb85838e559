#ifndef BCP_NBI_H
#define BCP_NBI_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes returned by every fallible function.
typedef enum BcpStatus {
  BCP_STATUS_OK = 0,
  BCP_STATUS_NULL_POINTER = 1,
  BCP_STATUS_LENGTH_MISMATCH = 2,
  BCP_STATUS_DOMAIN = 3,
  BCP_STATUS_INVALID_ARGUMENT = 4,
  BCP_STATUS_INSUFFICIENT_DATA = 5,
  BCP_STATUS_PANIC = 99,
} BcpStatus;

// Opaque calibration set.
typedef struct BcpCalibration BcpCalibration;

// Outcome of [`bcp_predict`].
typedef struct BcpSetResult {
  // Number of labels in the prediction set (a prefix of the ordering).
  size_t c_max;
  // Probability of the first excluded label; NaN when the set is full.
  double lambda_star;
  // Clamped BCP miscoverage estimate.
  double alpha_bcp;
  // Unclamped e-value behind `alpha_bcp`.
  double e_value;
  // Excluded probability mass.
  double alpha_nme;
} BcpSetResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Builds a calibration set from `n` row-major probability vectors of length
// `num_labels` and their true labels. Rows are normalized with the library's
// probability floor. On success `*out` owns a new handle.
//
// # Safety
// `probs` must point to `n * num_labels` doubles, `labels` to `n` values and
// `out` must be writable.
enum BcpStatus bcp_calibration_new(const double *probs,
                                   const size_t *labels,
                                   size_t n,
                                   size_t num_labels,
                                   double beta,
                                   struct BcpCalibration **out);

// Releases a handle. Null is ignored.
//
// # Safety
// `handle` must come from [`bcp_calibration_new`] and not be used afterwards.
void bcp_calibration_free(struct BcpCalibration *handle);

// Number of calibration examples, or 0 for a null handle.
//
// # Safety
// `handle` must be null or a live handle.
size_t bcp_calibration_len(const struct BcpCalibration *handle);

// Builds the budgeted prediction set for one test distribution and estimates
// its miscoverage.
//
// `ordering_out`, when not null, receives all `num_labels` label indices in
// descending-probability order; the first `c_max` form the set.
//
// # Safety
// `probs` and `costs` must point to `num_labels` doubles, `ordering_out` must
// be null or hold `num_labels` slots and `out` must be writable.
enum BcpStatus bcp_predict(const struct BcpCalibration *handle,
                           const double *probs,
                           size_t num_labels,
                           const double *costs,
                           double budget,
                           size_t *ordering_out,
                           struct BcpSetResult *out);

// Nonconformity score `p^(-beta)`.
//
// # Safety
// `out` must be writable.
enum BcpStatus bcp_nc_score(double p, double beta, double *out);

// E-value of `score` against the handle's calibration scores.
//
// # Safety
// `handle` must be a live handle and `out` writable.
enum BcpStatus bcp_e_value(const struct BcpCalibration *handle, double score, double *out);

// Message for the last failure on this thread, or null. The pointer stays
// valid until the next failing call on the same thread.
const char *bcp_last_error(void);

// Library version as a static NUL-terminated string.
const char *bcp_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BCP_NBI_H */
