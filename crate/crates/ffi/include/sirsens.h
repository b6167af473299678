#ifndef SIRSENS_H
#define SIRSENS_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum SirsStatus {
  SIRS_STATUS_OK = 0,
  SIRS_STATUS_NULL_POINTER = 1,
  SIRS_STATUS_INVALID_ARGUMENT = 2,
  SIRS_STATUS_IO = 3,
  SIRS_STATUS_NUMERICAL = 4,
  // The tipping bracket does not straddle `theta0`.
  SIRS_STATUS_NO_SIGN_CHANGE = 5,
  // The base prior is zero at a draw, or the alternative is zero at all of them.
  SIRS_STATUS_SUPPORT = 6,
  SIRS_STATUS_PANIC = 7,
} SirsStatus;

typedef enum SirsFamily {
  // `p1` = mean, `p2` = sd.
  SIRS_FAMILY_NORMAL = 0,
  // `p1` = scale.
  SIRS_FAMILY_HALF_NORMAL = 1,
  // `p1` = rate.
  SIRS_FAMILY_EXPONENTIAL = 2,
  // `p1` = a, `p2` = b.
  SIRS_FAMILY_BETA = 3,
  // `p1` = shape, `p2` = scale.
  SIRS_FAMILY_WEIBULL = 4,
  // `p1` = lo, `p2` = hi.
  SIRS_FAMILY_UNIFORM = 5,
} SirsFamily;

// How the tipping variable `psi` indexes the alternative prior.
typedef enum SirsPsiFamily {
  // `HalfNormal(psi)`; `fixed` unused.
  SIRS_PSI_FAMILY_HALF_NORMAL_SCALE = 0,
  // `Beta(psi, fixed)`.
  SIRS_PSI_FAMILY_BETA_A = 1,
  // `Beta(fixed, psi)`.
  SIRS_PSI_FAMILY_BETA_B = 2,
  // `Normal(psi, fixed)`.
  SIRS_PSI_FAMILY_NORMAL_MEAN = 3,
  // `Normal(fixed, psi)`.
  SIRS_PSI_FAMILY_NORMAL_SD = 4,
} SirsPsiFamily;

typedef enum SirsBound {
  // Quantile `1 - alpha/2`.
  SIRS_BOUND_UPPER = 0,
  // Quantile `alpha/2`.
  SIRS_BOUND_LOWER = 1,
} SirsBound;

// Draws of named parameters, grouped by chain.
typedef struct SirsDraws SirsDraws;

// Normalized importance weights for one prior swap.
typedef struct SirsWeights SirsWeights;

// A prior on one parameter. Unused parameters are ignored.
typedef struct SirsPrior {
  enum SirsFamily family;
  double p1;
  double p2;
} SirsPrior;

typedef struct SirsSummary {
  double mean;
  double sd;
  double ess;
} SirsSummary;

// Inputs to [`sirs_bisect_tipping`]. Start from
// [`sirs_tipping_spec_default`] and set the fields that matter.
typedef struct SirsTippingSpec {
  // Sensitivity parameter; a draw column.
  const char *param;
  // Prior the draws were obtained under.
  struct SirsPrior base;
  enum SirsPsiFamily family;
  double family_fixed;
  // Column whose credible bound is tracked.
  const char *target;
  double alpha;
  double theta0;
  enum SirsBound bound;
  double lo;
  double hi;
  double tol;
  size_t max_iter;
} SirsTippingSpec;

typedef struct SirsTippingResult {
  double psi_star;
  // Bracket at exit.
  double lo;
  double hi;
  // Midpoint evaluations performed.
  size_t n_iter;
  bool converged;
  double min_ess;
  // Warnings raised; see the Rust API for their text.
  size_t n_warnings;
} SirsTippingResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *sirs_version(void);

// Message of the last failed call on this thread, or null if none has
// failed. Valid until the next failing call on this thread.
const char *sirs_last_error(void);

// Builds draws from `n_cols` names and a column-major block of
// `n_rows * n_cols` values. Rows are grouped by chain, so `n_rows` must be
// a multiple of `n_chains`.
//
// # Safety
// `names` must point to `n_cols` NUL-terminated strings and `values` to
// `n_rows * n_cols` doubles. `out` must be writable.
enum SirsStatus sirs_draws_new(const char *const *names,
                               size_t n_cols,
                               const double *values,
                               size_t n_rows,
                               size_t n_chains,
                               struct SirsDraws **out);

// Reads a draws CSV written by the `sirsens` command-line tool, together
// with its JSON manifest.
//
// # Safety
// `path` must be a NUL-terminated string and `out` writable.
enum SirsStatus sirs_draws_load(const char *path, struct SirsDraws **out);

// Number of draws, or 0 for a null handle.
//
// # Safety
// `draws` must be null or a live handle.
size_t sirs_draws_n_rows(const struct SirsDraws *draws);

// Number of columns, or 0 for a null handle.
//
// # Safety
// `draws` must be null or a live handle.
size_t sirs_draws_n_cols(const struct SirsDraws *draws);

// Copies column `name` into `buf`, which must hold exactly
// `sirs_draws_n_rows(draws)` doubles.
//
// # Safety
// `draws` must be a live handle, `name` NUL-terminated, and `buf` valid
// for `len` writes.
enum SirsStatus sirs_draws_column(const struct SirsDraws *draws,
                                  const char *name,
                                  double *buf,
                                  size_t len);

// # Safety
// `draws` must be null or a handle not yet freed.
void sirs_draws_free(struct SirsDraws *draws);

// Importance weights that turn draws under `base` on column `param` into
// draws under `alt`.
//
// # Safety
// `draws` must be a live handle, `param` NUL-terminated, `base` and `alt`
// readable and `out` writable.
enum SirsStatus sirs_weights_compute(const struct SirsDraws *draws,
                                     const char *param,
                                     const struct SirsPrior *base,
                                     const struct SirsPrior *alt,
                                     struct SirsWeights **out);

// Number of weights, or 0 for a null handle.
//
// # Safety
// `w` must be null or a live handle.
size_t sirs_weights_len(const struct SirsWeights *w);

// Importance effective sample size, or NaN for a null handle.
//
// # Safety
// `w` must be null or a live handle.
double sirs_weights_ess(const struct SirsWeights *w);

// Copies the normalized weights into `buf` of exactly `len` doubles.
//
// # Safety
// `w` must be a live handle and `buf` valid for `len` writes.
enum SirsStatus sirs_weights_copy(const struct SirsWeights *w, double *buf, size_t len);

// # Safety
// `w` must be null or a handle not yet freed.
void sirs_weights_free(struct SirsWeights *w);

// Mean, sd and quantiles of column `param`, weighted by `weights` or
// uniformly when `weights` is null. `probs` must be ascending in (0, 1);
// `quantiles` receives one value per probability.
//
// # Safety
// `draws` must be a live handle and `weights` null or a live handle built
// from the same draws. `probs` and `quantiles` must be valid for `n_probs`
// elements and `out` writable.
enum SirsStatus sirs_weighted_summary(const struct SirsDraws *draws,
                                      const struct SirsWeights *weights,
                                      const char *param,
                                      const double *probs,
                                      size_t n_probs,
                                      struct SirsSummary *out,
                                      double *quantiles);

// Defaults: 95% upper bound against `theta0 = 0`, default tolerance and
// iteration cap, half-normal scale family. Pointers are null and the
// bracket is empty.
//
// # Safety
// `out` must be writable.
enum SirsStatus sirs_tipping_spec_default(struct SirsTippingSpec *out);

// Bisection on `psi` for the point where the tracked credible bound of
// `target` equals `theta0`.
//
// # Safety
// `draws` must be a live handle, `spec` readable with valid string fields,
// and `out` writable.
enum SirsStatus sirs_bisect_tipping(const struct SirsDraws *draws,
                                    const struct SirsTippingSpec *spec,
                                    struct SirsTippingResult *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SIRSENS_H */
