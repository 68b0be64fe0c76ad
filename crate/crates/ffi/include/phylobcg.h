#ifndef PHYLOBCG_H
#define PHYLOBCG_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PbcgStatus {
  PBCG_STATUS_OK = 0,
  PBCG_STATUS_NULL_POINTER = 1,
  PBCG_STATUS_INVALID_INPUT = 2,
  PBCG_STATUS_PARSE = 3,
  PBCG_STATUS_NOT_POSITIVE_DEFINITE = 4,
  PBCG_STATUS_DEGENERATE = 5,
  PBCG_STATUS_IO = 6,
  PBCG_STATUS_BUFFER_TOO_SMALL = 7,
  PBCG_STATUS_SAMPLER = 8,
  PBCG_STATUS_PANIC = 9,
} PbcgStatus;

typedef enum PbcgVariant {
  PBCG_VARIANT_PHYLO = 0,
  PBCG_VARIANT_ORACLE = 1,
  PBCG_VARIANT_DIST = 2,
  PBCG_VARIANT_FLAT = 3,
} PbcgVariant;

// Posterior summary of a fitted model.
typedef struct PbcgFit PbcgFit;

// Parsed tree, rescaled to unit root-to-tip depth.
typedef struct PbcgTree PbcgTree;

typedef struct PbcgFdrResult {
  double cutoff;
  double fdr;
  size_t selected;
  // 1 when the target was reached, 0 when the strictest selection is returned instead.
  uint8_t achieved;
} PbcgFdrResult;

// Sampler settings; fill with [`pbcg_fit_options_default`] first.
typedef struct PbcgFitOptions {
  enum PbcgVariant variant;
  size_t iterations;
  size_t burn_in;
  size_t thin;
  size_t chains;
  uint64_t seed;
  double a_sigma;
  double b_sigma;
  double a_v0;
  double b_v0;
  double h;
  double lambda;
  size_t latent_dim;
  // Required for the oracle variant, ignored otherwise.
  size_t oracle_edge_count;
} PbcgFitOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failure on this thread, or null. Valid until the next
// failing call on the same thread.
const char *pbcg_last_error(void);

// Library version as a static NUL-terminated string.
const char *pbcg_version(void);

// Parse a Newick string and rescale it to unit depth.
//
// # Safety
// `newick` must be a NUL-terminated string and `out` a valid pointer.
enum PbcgStatus pbcg_tree_parse(const char *newick, struct PbcgTree **out);

// # Safety
// `tree` must come from [`pbcg_tree_parse`] or be null.
void pbcg_tree_free(struct PbcgTree *tree);

// # Safety
// `tree` and `out` must be valid pointers.
enum PbcgStatus pbcg_tree_num_terminals(const struct PbcgTree *tree, size_t *out);

// Label of terminal `index`, owned by the tree handle.
//
// # Safety
// `tree` and `out` must be valid pointers.
enum PbcgStatus pbcg_tree_label(const struct PbcgTree *tree, size_t index, const char **out);

// Tree correlation matrix `H` (`p x p`) in terminal order.
//
// # Safety
// `out` must hold `len` doubles.
enum PbcgStatus pbcg_tree_correlation(const struct PbcgTree *tree, double *out, size_t len);

// Patristic distance matrix (`p x p`) in terminal order.
//
// # Safety
// `out` must hold `len` doubles.
enum PbcgStatus pbcg_tree_distance(const struct PbcgTree *tree, double *out, size_t len);

// Smallest cutoff whose posterior expected FDR is at most `alpha`.
//
// # Safety
// `pi_hat` must hold `len` doubles and `out` must be valid.
enum PbcgStatus pbcg_fdr_cutoff(const double *pi_hat,
                                size_t len,
                                double alpha,
                                struct PbcgFdrResult *out);

// Defaults: phylo variant, 5500 iterations with 500 burn-in, one chain.
//
// # Safety
// `out` must be a valid pointer.
enum PbcgStatus pbcg_fit_options_default(struct PbcgFitOptions *out);

// Fit the model to an `n x p` row-major count matrix.
//
// `labels` names the `p` columns and may be null when no tree is given; with
// a tree every label must be one of its terminals.
//
// # Safety
// `counts` must hold `n * p` doubles, `labels` (if not null) `p` strings,
// `tree` must be null or a live tree handle, and `out` must be valid.
enum PbcgStatus pbcg_fit(const double *counts,
                         size_t n,
                         size_t p,
                         const char *const *labels,
                         const struct PbcgTree *tree,
                         const struct PbcgFitOptions *options,
                         struct PbcgFit **out);

// # Safety
// `fit` must come from [`pbcg_fit`] or be null.
void pbcg_fit_free(struct PbcgFit *fit);

// # Safety
// `fit` and `out` must be valid pointers.
enum PbcgStatus pbcg_fit_num_taxa(const struct PbcgFit *fit, size_t *out);

// Label of fitted taxon `index`, owned by the fit handle.
//
// # Safety
// `fit` and `out` must be valid pointers.
enum PbcgStatus pbcg_fit_label(const struct PbcgFit *fit, size_t index, const char **out);

// Posterior edge inclusion probabilities (`p x p`).
//
// # Safety
// `out` must hold `len` doubles.
enum PbcgStatus pbcg_fit_pi_hat(const struct PbcgFit *fit, double *out, size_t len);

// Partial correlations of the posterior mean concentration matrix (`p x p`).
//
// # Safety
// `out` must hold `len` doubles.
enum PbcgStatus pbcg_fit_partial_correlations(const struct PbcgFit *fit, double *out, size_t len);

// Select edges at posterior expected FDR `alpha`, writing a `p x p` 0/1
// adjacency and the cutoff.
//
// # Safety
// `adjacency` must hold `len` bytes and `result` must be valid.
enum PbcgStatus pbcg_fit_select(const struct PbcgFit *fit,
                                double alpha,
                                uint8_t *adjacency,
                                size_t len,
                                struct PbcgFdrResult *result);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PHYLOBCG_H */
