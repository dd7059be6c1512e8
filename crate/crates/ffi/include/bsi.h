#ifndef BSI_H
#define BSI_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum BsiStatus {
  BSI_STATUS_OK = 0,
  BSI_STATUS_NULL_POINTER = 1,
  BSI_STATUS_INVALID_INPUT = 2,
  BSI_STATUS_NUMERICAL_FAILURE = 3,
  BSI_STATUS_DOMAIN_ERROR = 4,
  BSI_STATUS_IO = 5,
  BSI_STATUS_CORRUPT_CHECKPOINT = 6,
  BSI_STATUS_UNSUPPORTED_VERSION = 7,
  BSI_STATUS_INVALID_CONFIG = 8,
  BSI_STATUS_BUFFER_TOO_SMALL = 9,
  BSI_STATUS_PANIC = 10,
} BsiStatus;

/**
 * Opaque model handle.
 */
typedef struct BsiModel BsiModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Length in bytes of the calling thread's last error message, excluding
 * the terminating NUL.
 */
size_t bsi_last_error_length(void);

/**
 * Copies the last error message into `buf` (NUL-terminated, truncated to
 * `cap − 1` bytes). Returns the full message length.
 *
 * # Safety
 * `buf` must be valid for `cap` bytes or null with `cap == 0`.
 */
size_t bsi_last_error_message(char *buf, size_t cap);

/**
 * Random basis-form model. `activation`: 0 tanh, 1 gelu, 2 identity.
 *
 * # Safety
 * `layer_sizes` must hold `num_sizes` values; `out` must be writable.
 */
enum BsiStatus bsi_model_random(const size_t *layer_sizes,
                                size_t num_sizes,
                                uint32_t activation,
                                size_t aux_rank,
                                uint64_t seed,
                                struct BsiModel **out);

/**
 * Loads a checkpoint.
 *
 * # Safety
 * `path` must be NUL-terminated; `out` must be writable.
 */
enum BsiStatus bsi_model_load(const char *path, struct BsiModel **out);

/**
 * Saves a checkpoint without a recorded seed.
 *
 * # Safety
 * `model` must be a live handle; `path` NUL-terminated.
 */
enum BsiStatus bsi_model_save(const struct BsiModel *model, const char *path);

/**
 * Releases a handle. Null is ignored.
 *
 * # Safety
 * `model` must come from this library and not be used afterwards.
 */
void bsi_model_free(struct BsiModel *model);

/**
 * # Safety
 * `model` live, `out` writable.
 */
enum BsiStatus bsi_model_num_layers(const struct BsiModel *model, size_t *out);

/**
 * Trainable parameter count of the basis form (active bases plus
 * auxiliary factors).
 *
 * # Safety
 * `model` live, `out` writable.
 */
enum BsiStatus bsi_model_param_count(const struct BsiModel *model, size_t *out);

/**
 * Shape and rank of one layer. Any out-pointer may be null to skip it.
 *
 * # Safety
 * `model` live; non-null outs writable.
 */
enum BsiStatus bsi_model_layer_dims(const struct BsiModel *model,
                                    size_t layer,
                                    size_t *out_dim,
                                    size_t *in_dim,
                                    size_t *rank,
                                    size_t *active);

/**
 * Copies the singular values of `layer` (pruned entries are 0).
 *
 * # Safety
 * `model` live; `out` holds `cap` doubles.
 */
enum BsiStatus bsi_model_sigma(const struct BsiModel *model, size_t layer, double *out, size_t cap);

/**
 * Prunes bases of one layer.
 *
 * # Safety
 * `model` live and not shared; `indices` holds `count` values.
 */
enum BsiStatus bsi_model_prune(struct BsiModel *model,
                               size_t layer,
                               const size_t *indices,
                               size_t count);

/**
 * Logits for `rows` inputs stored row-major (`rows × cols`). `out` must
 * hold `rows × output_dim` doubles.
 *
 * # Safety
 * Buffers must be valid for the stated lengths.
 */
enum BsiStatus bsi_model_forward(const struct BsiModel *model,
                                 const double *inputs,
                                 size_t rows,
                                 size_t cols,
                                 double *out,
                                 size_t out_len);

/**
 * Rademacher diagonal estimate of a row-major `n × n` matrix with `s`
 * probes drawn from `seed`.
 *
 * # Safety
 * `matrix` holds `n²` doubles; `out` holds `n`.
 */
enum BsiStatus bsi_hutchinson_diag(const double *matrix,
                                   size_t n,
                                   size_t s,
                                   uint64_t seed,
                                   double *out);

/**
 * # Safety
 * `out` writable.
 */
enum BsiStatus bsi_choose_epsilon(double sigma_max,
                                  uint32_t fraction_bits,
                                  double rel_tol,
                                  double eps_max,
                                  double *out);

/**
 * `−σ·g + ½σ²·h`.
 */
double bsi_importance_score(double sigma, double grad_mean, double hess_mean);

double bsi_harmonic(size_t n, double s);

/**
 * # Safety
 * `out` writable.
 */
enum BsiStatus bsi_zeta(double s, double *out);

/**
 * # Safety
 * `out` writable.
 */
enum BsiStatus bsi_variance_bound(double lambda1_abs, double alpha, size_t s, double *out);

/**
 * Raw (unclamped) probe-count requirement for a relative approximation.
 *
 * # Safety
 * `out` writable.
 */
enum BsiStatus bsi_sample_complexity(double lambda1_abs,
                                     double alpha,
                                     size_t n,
                                     double trace,
                                     double eps,
                                     double delta,
                                     double *out);

/**
 * # Safety
 * `out` writable.
 */
enum BsiStatus bsi_sample_complexity_psd(size_t n,
                                         double alpha,
                                         double eps,
                                         double delta,
                                         double *out);

/**
 * # Safety
 * `out` writable.
 */
enum BsiStatus bsi_loss_change_bound(double g, double h, double s, double rho, double *out);

/**
 * # Safety
 * `out` writable.
 */
enum BsiStatus bsi_loss_change_bound_rel(double g,
                                         double h_hat,
                                         double s,
                                         double rho,
                                         double eps_rel,
                                         double *out);

/**
 * Closed-form output-layer Hessian diagonal entry. `u` and `logits` have
 * `classes` entries; `v` and `x` have `dim`.
 *
 * # Safety
 * Buffers valid for the stated lengths; `out` writable.
 */
enum BsiStatus bsi_lm_head_hessian_diag(const double *u,
                                        const double *logits,
                                        size_t classes,
                                        const double *v,
                                        const double *x,
                                        size_t dim,
                                        double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BSI_H */
