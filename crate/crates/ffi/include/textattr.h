#ifndef TEXTATTR_H
#define TEXTATTR_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result codes. Nonzero codes match the CLI exit codes where one exists.
 */
typedef enum TaStatus {
  TA_STATUS_OK = 0,
  TA_STATUS_CONFIG = 2,
  TA_STATUS_INPUT = 3,
  TA_STATUS_GATEWAY = 4,
  TA_STATUS_CONTRACT = 5,
  /*
   A required pointer argument was null or a string was not UTF-8.
   */
  TA_STATUS_INVALID_ARGUMENT = 6,
  /*
   A Rust panic was caught at the boundary.
   */
  TA_STATUS_INTERNAL = 7,
} TaStatus;

/*
 Opaque explainer: a run configuration plus a gateway whose cache and
 counters persist across calls.
 */
typedef struct TaExplainer TaExplainer;

/*
 Gateway call counters.
 */
typedef struct TaLedger {
  uint64_t generate_calls;
  uint64_t logprob_calls;
  uint64_t cache_hits;
} TaLedger;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failed call on this thread, or null. Valid until the
 next call into this library on the same thread.
 */
const char *ta_last_error(void);

/*
 Library version as a static string.
 */
const char *ta_version(void);

/*
 Creates an explainer from a run configuration in JSON (null for the
 defaults). API key, cache directory and scorer URL come from the
 environment.

 # Safety
 `config_json` must be null or a NUL-terminated string; `out` must be valid.
 */
enum TaStatus ta_explainer_new(const char *config_json, struct TaExplainer **out);

/*
 # Safety
 `explainer` must be null or come from [`ta_explainer_new`], and is not
 used afterwards.
 */
void ta_explainer_free(struct TaExplainer *explainer);

/*
 Attributes the model output for a document given as JSON
 (`{"text": ...}` plus optional fields). `parse_json` may be null.
 Writes the explanation JSON to `out`.

 # Safety
 Pointers must be valid; strings NUL-terminated.
 */
enum TaStatus ta_explain(struct TaExplainer *explainer,
                         const char *document_json,
                         const char *parse_json,
                         char **out);

/*
 As [`ta_explain`], with scores from the model's own ranking.

 # Safety
 Pointers must be valid; strings NUL-terminated.
 */
enum TaStatus ta_self_explain(struct TaExplainer *explainer,
                              const char *document_json,
                              const char *parse_json,
                              char **out);

/*
 Evaluates a JSON array of explanations and writes the report JSON.

 # Safety
 Pointers must be valid; strings NUL-terminated.
 */
enum TaStatus ta_evaluate(struct TaExplainer *explainer, const char *explanations_json, char **out);

/*
 Counters accumulated by the explainer's gateway.

 # Safety
 Pointers must be valid.
 */
enum TaStatus ta_explainer_ledger(const struct TaExplainer *explainer, struct TaLedger *out);

/*
 # Safety
 `s` must be null or a string returned by this library.
 */
void ta_string_free(char *s);

/*
 Affine map of `n` scores onto [-1, 1]; `out` holds `n` values.

 # Safety
 `scores` and `out` must point to `n` doubles.
 */
enum TaStatus ta_normalize_scores(const double *scores, size_t n, double *out);

/*
 Spearman rank correlation of two length-`n` vectors.

 # Safety
 `a` and `b` must point to `n` doubles; `out` must be valid.
 */
enum TaStatus ta_spearman(const double *a, const double *b, size_t n, double *out);

/*
 Area under a perturbation curve given as `n` (fraction, drop) points,
 scaled by `100 / cutoff`.

 # Safety
 `xs` and `ys` must point to `n` doubles; `out` must be valid.
 */
enum TaStatus ta_aupc(const double *xs, const double *ys, size_t n, double cutoff, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TEXTATTR_H */
