#ifndef TAUGRAPH_H
#define TAUGRAPH_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes. 1 to 3 match the command-line exit codes.
typedef enum TgStatus {
  TG_STATUS_OK = 0,
  // Bad usage or configuration.
  TG_STATUS_CONFIG = 1,
  // Unreadable or invalid input data.
  TG_STATUS_DATA = 2,
  // Non-finite loss or a clustering that failed to converge.
  TG_STATUS_NUMERIC = 3,
  // Null pointer, bad UTF-8 or an out-of-range argument.
  TG_STATUS_INVALID_ARGUMENT = 4,
  TG_STATUS_BUFFER_TOO_SMALL = 5,
  // A Rust panic was caught at the boundary.
  TG_STATUS_INTERNAL = 6,
} TgStatus;

typedef struct TgForest TgForest;

typedef struct TgGnn TgGnn;

typedef struct TgGraph TgGraph;

// Settings for pipeline commands writing into one output directory.
typedef struct TgRun TgRun;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or null. Valid until
// the next call on the same thread.
const char *tg_last_error(void);

// Library version as a static string.
const char *tg_version(void);

// New run writing into `out_dir`.
enum TgStatus tg_run_new(const char *out_dir, struct TgRun **run_out);

void tg_run_free(struct TgRun *run);

enum TgStatus tg_run_set_seed(struct TgRun *run, uint64_t seed);

// TOML config file applied before any overrides.
enum TgStatus tg_run_set_config(struct TgRun *run, const char *path);

// Adds a `key=value` override, as the command line's `--set`.
enum TgStatus tg_run_set(struct TgRun *run, const char *assignment);

// Slide directory read by `build-graph`; null restores the default.
enum TgStatus tg_run_set_input(struct TgRun *run, const char *dir);

// Executes one command by its command-line name, e.g. `"build-graph"`.
enum TgStatus tg_run_execute(const struct TgRun *run, const char *command);

// Loads a graph file written by `build-graph`.
enum TgStatus tg_graph_load(const char *path, struct TgGraph **graph_out);

void tg_graph_free(struct TgGraph *graph);

// Node count, or 0 for a null handle.
size_t tg_graph_n_nodes(const struct TgGraph *graph);

// Edge count, or 0 for a null handle.
size_t tg_graph_n_edges(const struct TgGraph *graph);

// Endpoints as `u0, v0, u1, v1, ...`; `len_out` receives twice the edge count.
enum TgStatus tg_graph_edges(const struct TgGraph *graph, size_t *out, size_t cap, size_t *len_out);

// Edge lengths in micrometers, in edge order.
enum TgStatus tg_graph_edge_lengths(const struct TgGraph *graph,
                                    double *out,
                                    size_t cap,
                                    size_t *len_out);

// Normalized betweenness per node.
enum TgStatus tg_graph_betweenness(const struct TgGraph *graph,
                                   double *out,
                                   size_t cap,
                                   size_t *len_out);

// Closeness per node.
enum TgStatus tg_graph_closeness(const struct TgGraph *graph,
                                 double *out,
                                 size_t cap,
                                 size_t *len_out);

// Delaunay edges of `n` points as `u0, v0, u1, v1, ...` with `u < v`.
enum TgStatus tg_delaunay(const double *xs,
                          const double *ys,
                          size_t n,
                          size_t *out,
                          size_t cap,
                          size_t *len_out);

// Loads a GNN checkpoint written by `train-gnn`.
enum TgStatus tg_gnn_load(const char *path, struct TgGnn **model_out);

void tg_gnn_free(struct TgGnn *model);

// Probability that the graph's slide is rpAD.
enum TgStatus tg_gnn_predict(const struct TgGnn *model, const struct TgGraph *graph, double *p_out);

// Row-major node embeddings, 12 values per node.
enum TgStatus tg_gnn_embed(const struct TgGnn *model,
                           const struct TgGraph *graph,
                           double *out,
                           size_t cap,
                           size_t *len_out);

// Loads a forest written by `train-rf`.
enum TgStatus tg_rf_load(const char *path, struct TgForest **model_out);

void tg_rf_free(struct TgForest *model);

// Feature count the forest expects, or 0 for a null handle.
size_t tg_rf_n_features(const struct TgForest *model);

// rpAD probability for each of `n_rows` row-major rows of `n_features`.
enum TgStatus tg_rf_predict(const struct TgForest *model,
                            const double *rows,
                            size_t n_rows,
                            size_t n_features,
                            double *out,
                            size_t cap,
                            size_t *len_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TAUGRAPH_H */
