#ifndef INTERTEXT_H
#define INTERTEXT_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum it_status {
  IT_STATUS_OK = 0,
  IT_STATUS_NULL_ARGUMENT = 1,
  IT_STATUS_INVALID_UTF8 = 2,
  IT_STATUS_INVALID_ARGUMENT = 3,
  IT_STATUS_IO = 4,
  IT_STATUS_FORMAT = 5,
  IT_STATUS_UNKNOWN_DOC = 6,
  /**
   * Input data rejected by an analysis (too short, unstandardized, ...).
   */
  IT_STATUS_DATA = 7,
  IT_STATUS_PANIC = 8,
} it_status;

typedef struct it_corpus it_corpus;

typedef struct it_curve it_curve;

typedef struct it_embeddings it_embeddings;

typedef struct it_similarity it_similarity;

/**
 * Parameters of an offset curve. See [`it_curve_params_default`].
 */
typedef struct it_curve_params {
  int32_t window;
  size_t repeats;
  size_t min_per_year;
  size_t max_per_year;
  uint64_t seed;
} it_curve_params;

/**
 * One offset of a curve. `mean` and `se` are NaN where no pair contributed.
 */
typedef struct it_curve_point_t {
  int32_t offset;
  double mean;
  double se;
  size_t n_pairs;
  size_t repeats_with_data;
} it_curve_point_t;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next call on this thread.
 */
const char *it_last_error(void);

/**
 * Library version, static storage.
 */
const char *it_version(void);

/**
 * Loads a corpus written by `intertext ingest`.
 */
enum it_status it_corpus_load(const char *path, struct it_corpus **out);

/**
 * Reads a metadata table and its text directory. Row errors are skipped;
 * `dedup` keeps only the earliest edition of each work.
 */
enum it_status it_corpus_ingest(const char *metadata,
                                const char *texts,
                                bool dedup,
                                struct it_corpus **out);

/**
 * Number of documents; 0 for a null handle.
 */
size_t it_corpus_len(const struct it_corpus *c);

void it_corpus_free(struct it_corpus *c);

/**
 * Builds a raw (unstandardized) matrix from `n` ids and `n * dim`
 * row-major values.
 */
enum it_status it_embeddings_new(const char *const *ids,
                                 size_t n,
                                 size_t dim,
                                 const double *values,
                                 struct it_embeddings **out);

/**
 * Loads an embedding file. With `standardized` the values are taken as
 * already standardized.
 */
enum it_status it_embeddings_load(const char *path, bool standardized, struct it_embeddings **out);

/**
 * Column z-scores of `m` as a new handle. `dead_columns`, when not null,
 * receives the number of zero-variance columns.
 */
enum it_status it_embeddings_standardize(const struct it_embeddings *m,
                                         struct it_embeddings **out,
                                         size_t *dead_columns);

size_t it_embeddings_len(const struct it_embeddings *m);

size_t it_embeddings_dim(const struct it_embeddings *m);

void it_embeddings_free(struct it_embeddings *m);

/**
 * Cosine similarity over standardized embeddings. With a corpus, pairs
 * sharing an author are masked; a null corpus gives an unmasked matrix.
 */
enum it_status it_similarity_build(const struct it_embeddings *m,
                                   const struct it_corpus *corpus,
                                   struct it_similarity **out);

enum it_status it_similarity_load(const char *path, struct it_similarity **out);

enum it_status it_similarity_save(const struct it_similarity *s, const char *path);

size_t it_similarity_len(const struct it_similarity *s);

/**
 * Row index of `doc_id`.
 */
enum it_status it_similarity_index_of(const struct it_similarity *s,
                                      const char *doc_id,
                                      size_t *index);

/**
 * Entry `(i, j)`. Masked entries report `masked = true` and value 0.
 */
enum it_status it_similarity_get(const struct it_similarity *s,
                                 size_t i,
                                 size_t j,
                                 double *value,
                                 bool *masked);

/**
 * Up to `k` nearest unmasked neighbors of `doc_id`, best first. The caller
 * provides room for `k` entries in `indices` and `values`; `count`
 * receives the number written.
 */
enum it_status it_similarity_neighbors(const struct it_similarity *s,
                                       const char *doc_id,
                                       size_t k,
                                       size_t *indices,
                                       double *values,
                                       size_t *count);

void it_similarity_free(struct it_similarity *s);

/**
 * Library defaults: window 30, 10 repeats, 25 to 50 documents per year, seed 42.
 */
struct it_curve_params it_curve_params_default(void);

/**
 * Mean similarity by publication offset for the documents matching
 * `query` (a label expression such as `"canon AND NOT adventure"`), or
 * for every document in the matrix when `query` is null.
 */
enum it_status it_curve_compute(const struct it_similarity *s,
                                const struct it_corpus *corpus,
                                const char *query,
                                const struct it_curve_params *params,
                                struct it_curve **out);

/**
 * Number of offsets, `2 * window + 1`.
 */
size_t it_curve_len(const struct it_curve *c);

enum it_status it_curve_point(const struct it_curve *c,
                              size_t index,
                              struct it_curve_point_t *point);

/**
 * Offset with the highest mean. Fails with `Data` when no offset has data.
 */
enum it_status it_curve_argmax(const struct it_curve *c, int32_t *offset);

/**
 * Writes the curve as CSV `offset,mean,se,n_pairs`.
 */
enum it_status it_curve_write_csv(const struct it_curve *c, const char *path);

void it_curve_free(struct it_curve *c);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* INTERTEXT_H */
