#ifndef MODALIGN_MODALIGN_H
#define MODALIGN_MODALIGN_H

/* C interface to the modalign library. Every fallible call returns a
 * ma_status; on failure ma_last_error() holds a message for the calling
 * thread. Strings returned through char** are owned by the caller and must be
 * released with ma_string_free. */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#if defined(MODALIGN_BUILDING_LIBRARY)
#define MA_API __declspec(dllexport)
#else
#define MA_API __declspec(dllimport)
#endif
#else
#define MA_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ma_status {
  MA_OK = 0,
  MA_ERR_INVALID_ARGUMENT = 1,
  MA_ERR_DIMENSION_MISMATCH = 2,
  MA_ERR_ZERO_VECTOR = 3,
  MA_ERR_NON_FINITE = 4,
  MA_ERR_EMPTY_KEYS = 5,
  MA_ERR_COUNT_MISMATCH = 6,
  MA_ERR_DUPLICATE_ID = 7,
  MA_ERR_MALFORMED_RECORD = 8,
  MA_ERR_UNKNOWN_SAMPLE = 9,
  MA_ERR_MISSING_CATEGORY = 10,
  MA_ERR_NON_POSITIVE_TEMPERATURE = 11,
  MA_ERR_DEGENERATE_BATCH = 12,
  MA_ERR_UNKNOWN_LABEL = 13,
  MA_ERR_MISSING_RELEVANCE = 14,
  MA_ERR_EMPTY_CENTER_SET = 15,
  MA_ERR_INSUFFICIENT_SAMPLES = 16,
  MA_ERR_IO = 17,
  MA_ERR_FORMAT = 18,
  MA_ERR_NUMERICAL = 19,
  MA_ERR_NULL_ARGUMENT = 100,
  MA_ERR_INTERNAL = 101
} ma_status;

typedef enum ma_source_filter {
  MA_SOURCE_BOTH = 0,
  MA_SOURCE_LLM_CATEGORY = 1,
  MA_SOURCE_MLLM_DATA = 2
} ma_source_filter;

typedef enum ma_scoring_mode { MA_MODE_CENTER_MAX = 0, MA_MODE_PROMPT_MEAN = 1 } ma_scoring_mode;

typedef enum ma_optimizer { MA_OPTIMIZER_SGD = 0, MA_OPTIMIZER_ADAM = 1 } ma_optimizer;

typedef struct ma_matrix ma_matrix;
typedef struct ma_kb ma_kb;
typedef struct ma_centers ma_centers;
typedef struct ma_adapter ma_adapter;

MA_API const char* ma_version(void);
MA_API const char* ma_last_error(void);
MA_API const char* ma_status_name(ma_status status);
MA_API void ma_string_free(char* s);

/* Embedding matrices (row-major, stored as double, UBEM on disk). */
MA_API ma_status ma_matrix_create(size_t rows, size_t dim, const double* data, ma_matrix** out);
MA_API ma_status ma_matrix_read(const char* path, ma_matrix** out);
MA_API ma_status ma_matrix_write(const ma_matrix* m, const char* path);
MA_API size_t ma_matrix_rows(const ma_matrix* m);
MA_API size_t ma_matrix_dim(const ma_matrix* m);
MA_API const double* ma_matrix_data(const ma_matrix* m);
/* Labels: NULL when the matrix is unlabelled or row is out of range. */
MA_API const char* ma_matrix_label(const ma_matrix* m, size_t row);
MA_API ma_status ma_matrix_set_labels(ma_matrix* m, const char* const* labels, size_t count);
MA_API void ma_matrix_free(ma_matrix* m);

/* Knowledge base. */
MA_API ma_status ma_kb_build(const char* records_path, const char* embeddings_path, ma_kb** out);
MA_API ma_status ma_kb_load(const char* dir, ma_kb** out);
MA_API ma_status ma_kb_save(const ma_kb* kb, const char* dir);
MA_API size_t ma_kb_size(const ma_kb* kb);
MA_API size_t ma_kb_dim(const ma_kb* kb);
MA_API ma_status ma_kb_stats_json(const ma_kb* kb, char** out_json);
MA_API void ma_kb_free(ma_kb* kb);

/* Embedding centers. Prompt matrices carry one row per category, labelled by
 * category name. */
MA_API ma_status ma_centers_localize(const ma_kb* kb, const ma_matrix* prompts, size_t k,
                                     ma_source_filter filter, ma_centers** out);
/* Writes one center-set file per k into out_dir (centers_k<k>.centers) and
 * returns a JSON summary. */
MA_API ma_status ma_centers_sweep(const ma_kb* kb, const ma_matrix* prompts, const size_t* ks,
                                  size_t k_count, ma_source_filter filter, const char* out_dir,
                                  char** out_json);
MA_API ma_status ma_centers_read(const char* path, ma_centers** out);
MA_API ma_status ma_centers_write(const ma_centers* centers, const char* path);
MA_API ma_status ma_centers_summary_json(const ma_centers* centers, char** out_json);
MA_API void ma_centers_free(ma_centers* centers);

/* Training. */
typedef struct ma_train_config {
  double temperature;
  double learning_rate;
  size_t batch_size;
  size_t epochs;
  uint64_t seed;
  ma_optimizer optimizer;
  int symmetric_loss;
} ma_train_config;

MA_API void ma_train_config_default(ma_train_config* config);
MA_API ma_status ma_train_config_load(const char* path, ma_train_config* config);

/* Trains an adapter on labelled visual rows. pairs_path lists the sample ids
 * to use; NULL uses every row. out_report_json may be NULL. */
MA_API ma_status ma_train(const ma_kb* kb, const ma_matrix* visual, const char* pairs_path,
                          const char* modality, const ma_train_config* config,
                          ma_adapter** out_adapter, char** out_report_json);
MA_API ma_status ma_adapter_read(const char* path, ma_adapter** out);
MA_API ma_status ma_adapter_write(const ma_adapter* adapter, const char* path);
MA_API ma_status ma_adapter_apply(const ma_adapter* adapter, const ma_matrix* visual,
                                  ma_matrix** out);
MA_API void ma_adapter_free(ma_adapter* adapter);

/* Finite-difference check of the loss gradient on a random problem. */
MA_API ma_status ma_gradcheck(size_t dim, size_t batch, uint64_t seed,
                              const ma_train_config* config, double* out_max_rel_error,
                              int* out_pass);

/* Zero-shot classification. For MA_MODE_PROMPT_MEAN, `templates` supplies the
 * prompt set (labelled by category); NULL uses the center members. */
MA_API ma_status ma_eval_zeroshot(const ma_centers* centers, const ma_matrix* queries,
                                  const char* labels_path, ma_scoring_mode mode,
                                  const ma_matrix* templates, char** out_report_json);
MA_API ma_status ma_eval_retrieval(const ma_matrix* queries, const ma_matrix* gallery,
                                   const char* relevance_path, const size_t* ks, size_t k_count,
                                   char** out_report_json);

/* Synthetic data. */
typedef struct ma_synth_spec {
  size_t categories;
  size_t modalities;
  size_t samples_per_class_per_modality;
  size_t dim;
  double class_separation;
  double modality_offset;
  double noise_sigma;
  size_t descriptions_per_class;
  uint64_t seed;
  size_t aspects_per_class;
  double aspect_spread;
  size_t templates_per_class;
} ma_synth_spec;

MA_API void ma_synth_spec_default(ma_synth_spec* spec);
/* Writes the bundle and a pipeline.json into out_dir. config may be NULL. */
MA_API ma_status ma_synth_generate(const ma_synth_spec* spec, const ma_train_config* config,
                                   size_t k, const char* out_dir);

/* Runs the whole pipeline from a JSON config. dump_projection < 0 keeps the
 * config's setting. out_summary_json may be NULL. */
MA_API ma_status ma_pipeline_run(const char* config_path, const char* out_dir, int dump_projection,
                                 char** out_summary_json);

/* Alignment diagnostics over n modalities; labels_paths are label JSONL files
 * keyed by the matrices' row ids. */
MA_API ma_status ma_diagnostics(const ma_matrix* const* matrices, const char* const* labels_paths,
                                size_t count, char** out_report_json);

#ifdef __cplusplus
}
#endif

#endif /* MODALIGN_MODALIGN_H */
