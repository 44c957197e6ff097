#ifndef RISKMINE_H
#define RISKMINE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RmStatus {
  RM_STATUS_OK = 0,
  RM_STATUS_NULL_ARGUMENT = 1,
  RM_STATUS_INVALID_UTF8 = 2,
  RM_STATUS_PARSE = 3,
  RM_STATUS_INVALID_INPUT = 4,
  RM_STATUS_NOT_FOUND = 5,
  RM_STATUS_PANIC = 6,
} RmStatus;

typedef struct RmGazetteer RmGazetteer;

typedef struct RmModel RmModel;

typedef struct RmTaxonomy RmTaxonomy;

typedef struct RmUniverse RmUniverse;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the most recent failed call on this thread, or NULL. The
// pointer stays valid until the next call into this library on the same
// thread.
const char *rm_last_error(void);

void rm_string_free(char *s);

// Static library version string.
const char *rm_version(void);

// Mines a taxonomy from a JSON-lines corpus with the default patterns.
enum RmStatus rm_taxonomy_mine(const char *corpus_jsonl,
                               size_t min_support,
                               bool attach_orphans,
                               struct RmTaxonomy **out);

// Loads `child TAB parent TAB support` lines.
enum RmStatus rm_taxonomy_from_tsv(const char *tsv, struct RmTaxonomy **out);

enum RmStatus rm_taxonomy_to_tsv(const struct RmTaxonomy *taxonomy, char **out);

// Node count including the root; 0 for NULL.
size_t rm_taxonomy_node_count(const struct RmTaxonomy *taxonomy);

size_t rm_taxonomy_edge_count(const struct RmTaxonomy *taxonomy);

void rm_taxonomy_free(struct RmTaxonomy *taxonomy);

// Builds a gazetteer from an entity TSV and every non-root taxonomy node.
enum RmStatus rm_gazetteer_new(const char *entities_tsv,
                               const struct RmTaxonomy *taxonomy,
                               struct RmGazetteer **out);

void rm_gazetteer_free(struct RmGazetteer *gazetteer);

// Tags a JSON-lines corpus; writes candidate pairs as JSON lines.
enum RmStatus rm_tag(const struct RmGazetteer *gazetteer,
                     const char *corpus_jsonl,
                     char **out_jsonl);

// Trains a model with default hyperparameters on labeled JSON lines.
// `taxonomy` may be NULL.
enum RmStatus rm_model_train(const char *examples_jsonl,
                             const struct RmTaxonomy *taxonomy,
                             struct RmModel **out);

// Loads a model file. `taxonomy` may be NULL and must match the one the
// model was trained with.
enum RmStatus rm_model_read(const char *model_text,
                            const struct RmTaxonomy *taxonomy,
                            struct RmModel **out);

enum RmStatus rm_model_write(const struct RmModel *model, char **out);

// Model version; 0 for NULL.
uint64_t rm_model_version(const struct RmModel *model);

void rm_model_free(struct RmModel *model);

// Scores candidate JSON lines; writes classified mentions as JSON lines.
enum RmStatus rm_classify(const struct RmModel *model,
                          const char *candidates_jsonl,
                          char **out_jsonl);

// Aggregates mention JSON lines into register JSON lines. With a NULL
// `entity_id` every entity is aggregated.
enum RmStatus rm_aggregate(const char *mentions_jsonl, const char *entity_id, char **out_jsonl);

// Management plan CSV for one entity. `taxonomy` may be NULL, which
// disables the ancestor fallback.
enum RmStatus rm_plan(const char *registers_jsonl,
                      const char *entity_id,
                      const char *rules_tsv,
                      const struct RmTaxonomy *taxonomy,
                      char **out_csv);

// Pairwise overlap of one portfolio's holdings as a JSON object.
enum RmStatus rm_overlap(const char *portfolios,
                         const char *portfolio_id,
                         const char *registers_jsonl,
                         char **out_json);

// Propagates registers upstream-to-downstream over a supply-chain TSV;
// writes one JSON line per propagated entry.
enum RmStatus rm_propagate(const char *graph_tsv,
                           const char *registers_jsonl,
                           size_t max_hops,
                           char **out_jsonl);

enum RmStatus rm_universe_new(double alpha, struct RmUniverse **out);

enum RmStatus rm_universe_observe(struct RmUniverse *universe, uint64_t t, const char *outcome);

// Writes the smoothed probability of `outcome` at time `t`. An outcome not
// yet observed has no probability: `*defined` is set to false and
// `*probability` to NaN.
enum RmStatus rm_universe_estimate(const struct RmUniverse *universe,
                                   uint64_t t,
                                   const char *outcome,
                                   bool *defined,
                                   double *probability);

// Number of distinct outcomes observed at or before `t`; 0 for NULL.
size_t rm_universe_size(const struct RmUniverse *universe, uint64_t t);

void rm_universe_free(struct RmUniverse *universe);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RISKMINE_H */
