/* Exercises the public header from C: handles, status codes, messages. */
#include <math.h>
#include <stdio.h>
#include <string.h>

#include "intertext.h"

static int failures = 0;

#define CHECK(cond)                                                   \
    do {                                                              \
        if (!(cond)) {                                                \
            fprintf(stderr, "%s:%d: %s (%s)\n", __FILE__, __LINE__,   \
                    #cond, it_last_error());                          \
            failures++;                                               \
        }                                                             \
    } while (0)

int main(int argc, char **argv) {
    if (argc != 3) {
        fprintf(stderr, "usage: smoke METADATA TEXTS\n");
        return 2;
    }
    CHECK(strlen(it_version()) > 0);

    it_corpus *corpus = NULL;
    CHECK(it_corpus_ingest(argv[1], argv[2], true, &corpus) == IT_STATUS_OK);
    CHECK(it_corpus_len(corpus) == 11);

    const char *ids[] = {"f01", "f02", "f03", "f04"};
    const double values[] = {1, 0, 0.9, 0.1, 0, 1, 1, 0.2};
    it_embeddings *raw = NULL, *std = NULL;
    size_t dead = 99;
    CHECK(it_embeddings_new(ids, 4, 2, values, &raw) == IT_STATUS_OK);
    CHECK(it_embeddings_len(raw) == 4 && it_embeddings_dim(raw) == 2);
    CHECK(it_embeddings_standardize(raw, &std, &dead) == IT_STATUS_OK);
    CHECK(dead == 0);

    it_similarity *sim = NULL;
    CHECK(it_similarity_build(raw, corpus, &sim) == IT_STATUS_DATA);
    CHECK(sim == NULL);
    CHECK(it_similarity_build(std, corpus, &sim) == IT_STATUS_OK);

    /* f01 and f04 share an author. */
    double v = -2;
    bool masked = false;
    CHECK(it_similarity_get(sim, 0, 3, &v, &masked) == IT_STATUS_OK);
    CHECK(masked && v == 0.0);
    CHECK(it_similarity_get(sim, 0, 1, &v, &masked) == IT_STATUS_OK);
    CHECK(!masked && v > 0.0 && v <= 1.0);

    size_t idx[3];
    double sims[3];
    size_t count = 0;
    CHECK(it_similarity_neighbors(sim, "f01", 3, idx, sims, &count) == IT_STATUS_OK);
    CHECK(count == 2 && idx[0] == 1 && idx[1] == 2 && sims[0] >= sims[1]);
    CHECK(it_similarity_neighbors(sim, "nope", 3, idx, sims, &count) == IT_STATUS_UNKNOWN_DOC);
    CHECK(strstr(it_last_error(), "nope") != NULL);

    it_curve_params params = it_curve_params_default();
    params.window = 2;
    params.repeats = 2;
    params.min_per_year = 1;
    params.max_per_year = 2;
    it_curve *curve = NULL;
    CHECK(it_curve_compute(sim, corpus, NULL, &params, &curve) == IT_STATUS_OK);
    CHECK(it_curve_len(curve) == 5);
    it_curve_point_t pt;
    CHECK(it_curve_point(curve, 2, &pt) == IT_STATUS_OK);
    CHECK(pt.offset == 0);
    CHECK(it_curve_point(curve, 5, &pt) == IT_STATUS_INVALID_ARGUMENT);

    CHECK(it_corpus_load(NULL, &corpus) == IT_STATUS_NULL_ARGUMENT);
    CHECK(strcmp(it_last_error(), "path is null") == 0);

    it_curve_free(curve);
    it_similarity_free(sim);
    it_embeddings_free(std);
    it_embeddings_free(raw);
    it_corpus_free(corpus);
    it_corpus_free(NULL);

    if (failures == 0) {
        printf("ok\n");
    }
    return failures == 0 ? 0 : 1;
}
