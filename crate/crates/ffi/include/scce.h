#ifndef SCCE_H
#define SCCE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stddef.h>
#include <stdint.h>

typedef enum ScceStatus {
  SCCE_STATUS_OK = 0,
  SCCE_STATUS_NULL_POINTER = 1,
  SCCE_STATUS_INVALID_ARGUMENT = 2,
  SCCE_STATUS_INVALID_MODEL = 3,
  SCCE_STATUS_INVALID_NETWORK = 4,
  SCCE_STATUS_NUMERICAL = 5,
  SCCE_STATUS_BUFFER_TOO_SMALL = 6,
  SCCE_STATUS_IO = 7,
  SCCE_STATUS_PANIC = 8,
} ScceStatus;

// Embedding used by [`scce_embed`].
typedef enum ScceMethod {
  // Bias-adjusted sum of squared adjacency matrices.
  SCCE_METHOD_AGGREGATE = 0,
  // Multiple adjacency spectral embedding baseline.
  SCCE_METHOD_MASE = 1,
} ScceMethod;

// Estimated common eigenspace.
typedef struct ScceEmbedding ScceEmbedding;

// Block model specification.
typedef struct ScceModel ScceModel;

// Multi-layer binary network.
typedef struct ScceNetwork ScceNetwork;

// Per-layer score matrices with their plug-in covariances.
typedef struct ScceScores ScceScores;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failure on the calling thread, or an empty string.
// Valid until the next failing call on the same thread.
const char *scce_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *scce_version(void);

// Block model from explicit parts. `membership` has `n` entries in
// `0..k`; `connectivity` holds `num_layers` row-major `k x k` matrices;
// `psi` is null for a plain SBM or has `n` entries.
//
// # Safety
// Pointers must be valid for the stated lengths; `out` must be writable.
enum ScceStatus scce_model_new(size_t k,
                               size_t n,
                               const size_t *membership,
                               size_t num_layers,
                               const double *connectivity,
                               double rho,
                               const double *psi,
                               struct ScceModel **out);

// Two-regime K = 3 design: layers `0..L/2` use connectivity with spectrum
// `first`, the rest `second`, over the fixed simulation basis. Community
// sizes follow `proportions` (3 entries).
//
// # Safety
// `proportions`, `first` and `second` must point to 3 values; `psi` is null
// or points to `n` values; `out` must be writable.
enum ScceStatus scce_model_two_regime(size_t n,
                                      size_t num_layers,
                                      double rho,
                                      const double *proportions,
                                      const double *first,
                                      const double *second,
                                      const double *psi,
                                      struct ScceModel **out);

// Community sizes for `n` nodes split by `proportions`, written to `sizes`
// (`k` entries), and the matching contiguous membership to `membership`
// (`n` entries) when non-null.
//
// # Safety
// `proportions` and `sizes` must hold `k` values; `membership` is null or
// holds `n` values.
enum ScceStatus scce_community_sizes(size_t n,
                                     size_t k,
                                     const double *proportions,
                                     size_t *sizes,
                                     size_t *membership);

// # Safety
// `model` is null or a handle from this library that has not been freed.
void scce_model_free(struct ScceModel *model);

// Samples one network; identical `(model, seed)` give identical networks.
//
// # Safety
// `model` must be a live handle; `out` must be writable.
enum ScceStatus scce_network_sample(const struct ScceModel *model,
                                    uint64_t seed,
                                    struct ScceNetwork **out);

// Network from `num_edges` `(layer, i, j)` triples stored flat in `edges`.
//
// # Safety
// `edges` must hold `3 * num_edges` values; `out` must be writable.
enum ScceStatus scce_network_from_edges(size_t n,
                                        size_t num_layers,
                                        const size_t *edges,
                                        size_t num_edges,
                                        struct ScceNetwork **out);

// # Safety
// `network` must be a live handle; `n` and `num_layers` must be writable.
enum ScceStatus scce_network_dims(const struct ScceNetwork *network, size_t *n, size_t *num_layers);

// Number of edges in one layer.
//
// # Safety
// `network` must be a live handle; `edges` must be writable.
enum ScceStatus scce_network_edge_count(const struct ScceNetwork *network,
                                        size_t layer,
                                        size_t *edges);

// # Safety
// `network` is null or a live handle.
void scce_network_free(struct ScceNetwork *network);

// # Safety
// `network` must be a live handle; `out` must be writable.
enum ScceStatus scce_embed(const struct ScceNetwork *network,
                           size_t k,
                           enum ScceMethod method,
                           struct ScceEmbedding **out);

// # Safety
// `embedding` must be a live handle; `n` and `k` must be writable.
enum ScceStatus scce_embedding_dims(const struct ScceEmbedding *embedding, size_t *n, size_t *k);

// Row-major `n x k` basis.
//
// # Safety
// `embedding` must be a live handle; `buf` must hold `len` values.
enum ScceStatus scce_embedding_basis(const struct ScceEmbedding *embedding,
                                     double *buf,
                                     size_t len);

// # Safety
// `embedding` is null or a live handle.
void scce_embedding_free(struct ScceEmbedding *embedding);

// Score matrices `Uhat^T A_l Uhat` and plug-in covariances for every layer.
//
// # Safety
// `network` and `embedding` must be live handles; `out` must be writable.
enum ScceStatus scce_estimate(const struct ScceNetwork *network,
                              const struct ScceEmbedding *embedding,
                              struct ScceScores **out);

// Layer count, `K`, and covariance side `K (K + 1) / 2`.
//
// # Safety
// `scores` must be a live handle; the outputs must be writable.
enum ScceStatus scce_scores_dims(const struct ScceScores *scores,
                                 size_t *num_layers,
                                 size_t *k,
                                 size_t *cov_dim);

// Row-major `K x K` score matrix of `layer`.
//
// # Safety
// `scores` must be a live handle; `buf` must hold `len` values.
enum ScceStatus scce_scores_matrix(const struct ScceScores *scores,
                                   size_t layer,
                                   double *buf,
                                   size_t len);

// Row-major plug-in covariance of the upper-triangular vectorization of
// layer `layer`.
//
// # Safety
// `scores` must be a live handle; `buf` must hold `len` values.
enum ScceStatus scce_scores_covariance(const struct ScceScores *scores,
                                       size_t layer,
                                       double *buf,
                                       size_t len);

// Level `1 - alpha` interval for entry `(s, t)` (1-based, `s <= t`).
//
// # Safety
// `scores` must be a live handle; `lower` and `upper` must be writable.
enum ScceStatus scce_confidence_interval(const struct ScceScores *scores,
                                         size_t layer,
                                         size_t s,
                                         size_t t,
                                         double alpha,
                                         double *lower,
                                         double *upper);

// Homogeneity test of layers `k` and `l` with `null_samples` Gaussian draws.
//
// # Safety
// `scores` must be a live handle; `statistic` and `p_value` must be writable.
enum ScceStatus scce_pair_test(const struct ScceScores *scores,
                               size_t k,
                               size_t l,
                               size_t null_samples,
                               uint64_t seed,
                               double *statistic,
                               double *p_value);

// Holm step-down over all pairs. `p_values` lists the `L (L - 1) / 2`
// p-values in lexicographic pair order `(0,1), (0,2), ..., (L-2,L-1)`;
// `decisions` receives a row-major `L x L` matrix with 1 for rejection.
//
// # Safety
// `p_values` must hold `L (L - 1) / 2` values and `decisions` `L * L` bytes.
enum ScceStatus scce_holm(size_t num_layers,
                          const double *p_values,
                          double alpha,
                          uint8_t *decisions);

// # Safety
// `scores` is null or a live handle.
void scce_scores_free(struct ScceScores *scores);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SCCE_H */
