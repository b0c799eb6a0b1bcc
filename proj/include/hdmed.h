/* hdmed: out-of-core mixture learning, compression and matching for large
 * signal dictionaries.
 *
 * Every function returns hdmed_status; on failure hdmed_last_error() holds
 * a human-readable message for the calling thread. Handles are opaque and
 * owned by the caller through the matching *_close / *_free call.
 */
#ifndef HDMED_H
#define HDMED_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define HDMED_API __declspec(dllexport)
#else
#define HDMED_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum hdmed_status {
  HDMED_OK = 0,
  HDMED_ERR_ARGUMENT = 1, /* bad inputs or handle misuse */
  HDMED_ERR_IO = 2,       /* file system failures */
  HDMED_ERR_FORMAT = 3,   /* malformed or mismatched data files */
  HDMED_ERR_NUMERIC = 4   /* degenerate statistics, failed factorizations */
} hdmed_status;

typedef struct hdmed_dict hdmed_dict;
typedef struct hdmed_model hdmed_model;
typedef struct hdmed_compressed hdmed_compressed;

HDMED_API const char* hdmed_version(void);
HDMED_API const char* hdmed_status_name(hdmed_status s);
/* Message for the most recent failure on this thread; empty when none. */
HDMED_API const char* hdmed_last_error(void);

/* File kinds recognized by hdmed_probe_file. */
typedef enum hdmed_file_kind {
  HDMED_FILE_UNKNOWN = 0,
  HDMED_FILE_DICT = 1,       /* binary dictionary */
  HDMED_FILE_MODEL = 2,      /* serialized mixture */
  HDMED_FILE_COMPRESSED = 3, /* clustered latent archive */
  HDMED_FILE_CSV = 4         /* textual table */
} hdmed_file_kind;

HDMED_API hdmed_status hdmed_probe_file(const char* path, hdmed_file_kind* kind);

/* ------------------------------------------------------------------ */
/* Dictionaries                                                        */
/* ------------------------------------------------------------------ */

typedef struct hdmed_param_range {
  double lo;
  double hi;
  uint64_t count; /* grid points along this parameter */
} hdmed_param_range;

typedef struct hdmed_synth_spec {
  uint32_t signal_dim;
  uint32_t param_count;
  const hdmed_param_range* params; /* param_count entries */
  double noise_sd;
  uint64_t seed;
  int use_f64; /* 0: 32-bit storage, 1: 64-bit */
} hdmed_synth_spec;

/* Writes the full parameter grid of damped oscillator superpositions. */
HDMED_API hdmed_status hdmed_generate_dictionary(const hdmed_synth_spec* spec,
                                                 const char* path);

/* Converts a textual dictionary (y_0..y_{M-1},t_0..t_{L-1}) to binary. */
HDMED_API hdmed_status hdmed_import_csv(const char* csv_path, const char* out_path,
                                        int use_f64);

HDMED_API hdmed_status hdmed_dict_open(const char* path, hdmed_dict** out);
HDMED_API void hdmed_dict_close(hdmed_dict* d);

typedef struct hdmed_dict_info {
  uint64_t rows;
  uint32_t signal_dim;
  uint32_t param_dim;
  int is_f64;
} hdmed_dict_info;

HDMED_API hdmed_status hdmed_dict_info_get(const hdmed_dict* d, hdmed_dict_info* out);

/* Row-major copies of [first, first + count). signals must hold
 * count * signal_dim doubles; params (may be NULL) count * param_dim. */
HDMED_API hdmed_status hdmed_dict_read(const hdmed_dict* d, uint64_t first,
                                       uint64_t count, double* signals, double* params);

/* ------------------------------------------------------------------ */
/* Fitting                                                             */
/* ------------------------------------------------------------------ */

typedef struct hdmed_fit_options {
  uint32_t components;
  int heavy_tailed; /* 0: light tails, 1: heavy tails with learned dof */
  uint32_t batch_size;
  uint32_t passes;
  double kappa;    /* step size decay exponent, (0.5, 1] */
  uint32_t offset; /* step size shift, >= 1 */
  uint64_t seed;
  uint32_t init_rows;       /* subsample feeding the spectral start */
  uint32_t init_iterations; /* dense EM sweeps on the subsample */
  uint32_t max_rank;        /* 0: signal_dim - 1 */
  double kneedle_sensitivity;
  double nu_init;
  int recover_on_collapse;
  int threads; /* <= 0: all hardware threads */
  double heldout_fraction;
  uint32_t heldout_cap;
  uint32_t report_every;
} hdmed_fit_options;

HDMED_API void hdmed_fit_options_init(hdmed_fit_options* opt);

typedef struct hdmed_fit_summary {
  uint64_t heldout_rows;
  uint64_t trained_rows;
  int floor_events;
  int shrink_events;
  int collapse_recoveries;
  double final_heldout_loglik; /* per observation; NaN without a held-out set */
} hdmed_fit_summary;

/* Streams the dictionary and fits the mixture. report_csv_path (optional)
 * receives one row per step: step,gamma,heldout_loglik,min_mass. */
HDMED_API hdmed_status hdmed_fit(const hdmed_dict* d, const hdmed_fit_options* opt,
                                 const char* report_csv_path,
                                 hdmed_fit_summary* summary, hdmed_model** out);

/* ------------------------------------------------------------------ */
/* Models                                                              */
/* ------------------------------------------------------------------ */

HDMED_API hdmed_status hdmed_model_load(const char* path, hdmed_model** out);
HDMED_API hdmed_status hdmed_model_save(const hdmed_model* m, const char* path);
HDMED_API void hdmed_model_free(hdmed_model* m);

typedef struct hdmed_model_info {
  uint32_t components;
  uint32_t signal_dim;
  int heavy_tailed;
  int64_t free_parameters;
} hdmed_model_info;

HDMED_API hdmed_status hdmed_model_info_get(const hdmed_model* m, hdmed_model_info* out);

typedef struct hdmed_component_info {
  double weight;
  uint32_t rank;
  double b;  /* trailing scale */
  double nu; /* degrees of freedom; 0 for light tails */
} hdmed_component_info;

HDMED_API hdmed_status hdmed_model_component(const hdmed_model* m, uint32_t k,
                                             hdmed_component_info* out);

HDMED_API hdmed_status hdmed_log_likelihood(const hdmed_model* m, const hdmed_dict* d,
                                            int threads, double* out);
HDMED_API hdmed_status hdmed_bic(const hdmed_model* m, const hdmed_dict* d, int threads,
                                 double* out);

/* Routes each signal to its best component, compresses and decompresses it
 * there. rmse and mean_signal_norm may each be NULL. */
HDMED_API hdmed_status hdmed_reconstruction_error(const hdmed_model* m,
                                                  const hdmed_dict* d, int threads,
                                                  double* rmse, double* mean_signal_norm);

/* Elbow of a non-increasing curve; writes the 0-based index or -1 when the
 * curve has no knee. */
HDMED_API hdmed_status hdmed_kneedle(const double* values, size_t count,
                                     double sensitivity, int64_t* knee);

/* ------------------------------------------------------------------ */
/* Compression                                                         */
/* ------------------------------------------------------------------ */

HDMED_API hdmed_status hdmed_compress(const hdmed_dict* d, const hdmed_model* m,
                                      int normalize, int use_f64, int threads,
                                      const char* out_path);

HDMED_API hdmed_status hdmed_compressed_open(const char* path, hdmed_compressed** out);
HDMED_API void hdmed_compressed_close(hdmed_compressed* c);

typedef struct hdmed_compressed_info {
  uint64_t rows;
  uint32_t signal_dim;
  uint32_t param_dim;
  uint32_t components;
  uint64_t stored_values; /* latent coordinates kept */
  double compression_ratio;
  int normalized;
  int is_f64;
} hdmed_compressed_info;

HDMED_API hdmed_status hdmed_compressed_info_get(const hdmed_compressed* c,
                                                 hdmed_compressed_info* out);
HDMED_API hdmed_status hdmed_compressed_cluster(const hdmed_compressed* c, uint32_t k,
                                                uint64_t* rows, uint32_t* rank);
/* Copy of the embedded mixture; caller frees it. */
HDMED_API hdmed_status hdmed_compressed_model(const hdmed_compressed* c,
                                              hdmed_model** out);

/* ------------------------------------------------------------------ */
/* Matching                                                            */
/* ------------------------------------------------------------------ */

typedef struct hdmed_match_options {
  uint32_t top_clusters; /* routed clusters compared per query */
  int normalize;         /* exhaustive matching only */
  int threads;
} hdmed_match_options;

HDMED_API void hdmed_match_options_init(hdmed_match_options* opt);

typedef struct hdmed_match_stats {
  uint64_t multiply_adds;
  uint64_t fallbacks;
} hdmed_match_stats;

/* Nearest dictionary entry per query signal; results go to out_csv with
 * columns query_id,cluster,dict_index,distance,t_0..t_{L-1}. stats may be
 * NULL. Queries are the signal rows of a dictionary handle. */
HDMED_API hdmed_status hdmed_match(const hdmed_compressed* c, const hdmed_dict* queries,
                                   const hdmed_match_options* opt, const char* out_csv,
                                   hdmed_match_stats* stats);

/* Exhaustive reference scan; cluster is reported as -1. */
HDMED_API hdmed_status hdmed_full_match(const hdmed_dict* d, const hdmed_dict* queries,
                                        const hdmed_match_options* opt,
                                        const char* out_csv, hdmed_match_stats* stats);

/* Mean absolute error per parameter between a match file and a reference:
 * either another match file (aligned by query id) or a dictionary whose row
 * i holds the truth for query i. mae must hold *param_count doubles; on
 * return *param_count is the actual width. */
HDMED_API hdmed_status hdmed_match_mae(const char* matches_csv, const char* reference_path,
                                       double* mae, uint32_t* param_count);

/* Fraction of queries whose matched dictionary index agrees. */
HDMED_API hdmed_status hdmed_match_agreement(const char* matches_csv_a,
                                             const char* matches_csv_b, double* fraction);

#ifdef __cplusplus
}
#endif

#endif /* HDMED_H */
