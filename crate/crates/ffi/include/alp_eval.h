#ifndef ALP_EVAL_H
#define ALP_EVAL_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

// Result code of every fallible call.
typedef enum AlpStatus {
  ALP_STATUS_OK = 0,
  ALP_STATUS_NULL_POINTER = 1,
  ALP_STATUS_INVALID_ARGUMENT = 2,
  ALP_STATUS_DIMENSION_MISMATCH = 3,
  ALP_STATUS_IO = 4,
  // Malformed or mismatching file contents.
  ALP_STATUS_FORMAT = 5,
  ALP_STATUS_PANIC = 6,
} AlpStatus;

// Opaque dataset handle.
typedef struct AlpDataset AlpDataset;

// Opaque model handle.
typedef struct AlpModel AlpModel;

// Summary of one PGD attack.
typedef struct AlpAttackOutcome {
  bool success;
  uintptr_t steps_taken;
  // -1 when the attack never succeeded.
  int64_t first_success_step;
  double final_objective;
} AlpAttackOutcome;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread; empty after a success.
// The pointer stays valid until the next call into this library.
const char *alp_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *alp_version(void);

// Fresh ReLU network with `n_hidden` hidden layers of the given widths.
enum AlpStatus alp_model_init(uintptr_t input_dim,
                              const uintptr_t *hidden_widths,
                              uintptr_t n_hidden,
                              uintptr_t num_classes,
                              uint64_t seed,
                              struct AlpModel **out);

enum AlpStatus alp_model_load(const char *path, struct AlpModel **out);

enum AlpStatus alp_model_save(const struct AlpModel *model, const char *path);

// Releases a model; null is ignored.
void alp_model_free(struct AlpModel *model);

// Input dimension, or 0 for a null handle.
uintptr_t alp_model_input_dim(const struct AlpModel *model);

// Number of classes, or 0 for a null handle.
uintptr_t alp_model_num_classes(const struct AlpModel *model);

// Writes the `num_classes` logits of input `x` to `logits_out`.
enum AlpStatus alp_model_forward(const struct AlpModel *model,
                                 const double *x,
                                 uintptr_t x_len,
                                 double *logits_out,
                                 uintptr_t logits_len);

enum AlpStatus alp_model_predict(const struct AlpModel *model,
                                 const double *x,
                                 uintptr_t x_len,
                                 uintptr_t *label_out);

// Cross-entropy of `x` against `label`.
enum AlpStatus alp_model_loss(const struct AlpModel *model,
                              const double *x,
                              uintptr_t x_len,
                              uintptr_t label,
                              double *loss_out);

// Gradient of the cross-entropy against `label` with respect to `x`.
enum AlpStatus alp_model_grad_input(const struct AlpModel *model,
                                    const double *x,
                                    uintptr_t x_len,
                                    uintptr_t label,
                                    double *grad_out,
                                    uintptr_t grad_len);

// L∞ PGD from `x` (entries in `[0, 1]`) with true class `label`.
//
// `target < 0` runs the untargeted attack; otherwise the attack pushes
// towards class `target`. Step size `alpha <= 0` selects `epsilon / 10`.
// Early stopping uses the library defaults.
enum AlpStatus alp_pgd(const struct AlpModel *model,
                       const double *x,
                       uintptr_t x_len,
                       uintptr_t label,
                       int64_t target,
                       double epsilon,
                       double alpha,
                       uintptr_t max_steps,
                       uint64_t seed,
                       double *x_adv_out,
                       struct AlpAttackOutcome *outcome_out);

enum AlpStatus alp_dataset_blobs(uintptr_t n_per_class,
                                 uintptr_t dim,
                                 uintptr_t num_classes,
                                 double spread,
                                 uint64_t seed,
                                 struct AlpDataset **out);

enum AlpStatus alp_dataset_spirals(uintptr_t n_per_class,
                                   double noise,
                                   uint64_t seed,
                                   struct AlpDataset **out);

// Number of examples, or 0 for a null handle.
uintptr_t alp_dataset_len(const struct AlpDataset *ds);

uintptr_t alp_dataset_input_dim(const struct AlpDataset *ds);

// Copies example `index` into `x_out` (length `input_dim`) and `label_out`.
enum AlpStatus alp_dataset_get(const struct AlpDataset *ds,
                               uintptr_t index,
                               double *x_out,
                               uintptr_t x_len,
                               uintptr_t *label_out);

void alp_dataset_free(struct AlpDataset *ds);

enum AlpStatus alp_clean_accuracy(const struct AlpModel *model,
                                  const struct AlpDataset *ds,
                                  double *accuracy_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ALP_EVAL_H */
