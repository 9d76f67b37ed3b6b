/* hsitl — hyperspectral band reduction, spectral CNN transfer learning and
 * experiment statistics behind a plain C interface.
 *
 * All functions returning hsitl_status set a thread-local message
 * retrievable with hsitl_last_error() on failure. Objects returned through
 * out-pointers are owned by the caller and released with the matching
 * *_free function.
 */
#ifndef HSITL_H
#define HSITL_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define HSITL_API __declspec(dllexport)
#else
#define HSITL_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum hsitl_status {
    HSITL_OK = 0,
    HSITL_ERR_CONFIG = 1, /* invalid configuration, options or requests */
    HSITL_ERR_DATA = 2    /* unreadable, malformed or mismatched data */
} hsitl_status;

typedef struct hsitl_cube hsitl_cube;     /* H x W x B spectral raster */
typedef struct hsitl_labels hsitl_labels; /* per-pixel class ids, 0 = unlabeled */
typedef struct hsitl_model hsitl_model;   /* trained network checkpoint */

HSITL_API const char* hsitl_version(void);
HSITL_API const char* hsitl_last_error(void);

/* ---- spectral cubes (HSIC container) ---- */
HSITL_API hsitl_status hsitl_cube_load(const char* path, hsitl_cube** out);
HSITL_API hsitl_status hsitl_cube_create(uint32_t height, uint32_t width, uint32_t bands,
                                         const float* data, hsitl_cube** out);
HSITL_API hsitl_status hsitl_cube_save(const hsitl_cube* cube, const char* path);
HSITL_API void hsitl_cube_free(hsitl_cube* cube);
HSITL_API void hsitl_cube_dims(const hsitl_cube* cube, uint32_t* height, uint32_t* width,
                               uint32_t* bands);
/* Pixel-interleaved values, (y, x, band) order; valid until the cube is freed. */
HSITL_API const float* hsitl_cube_data(const hsitl_cube* cube);

/* Window averaging: ceil(bands/lambda) output bands, final window may be
 * partial. */
HSITL_API hsitl_status hsitl_cube_reduce_window(const hsitl_cube* cube, uint32_t lambda,
                                                hsitl_cube** out);
/* Near-equal windows landing on an exact output band count. */
HSITL_API hsitl_status hsitl_cube_reduce_to_count(const hsitl_cube* cube, uint32_t bands,
                                                  hsitl_cube** out);

/* ---- label maps (HSIL container) ---- */
HSITL_API hsitl_status hsitl_labels_load(const char* path, hsitl_labels** out);
HSITL_API void hsitl_labels_free(hsitl_labels* labels);
HSITL_API void hsitl_labels_dims(const hsitl_labels* labels, uint32_t* height, uint32_t* width);
HSITL_API uint32_t hsitl_labels_class_count(const hsitl_labels* labels);

/* ---- downlink budget ---- */
/* volume = height*width*bands*bit_depth bits exactly; seconds = volume/rate */
HSITL_API hsitl_status hsitl_downlink_budget(uint64_t height, uint64_t width, uint64_t bands,
                                             uint64_t bit_depth, double rate_bps,
                                             uint64_t* volume_bits, double* seconds);

/* ---- CSV converters (test-fixture ingestion) ---- */
/* Dims of 0 mean "infer from the data". */
HSITL_API hsitl_status hsitl_convert_cube_csv(const char* csv_path, const char* out_path,
                                              uint32_t height, uint32_t width, uint32_t bands);
HSITL_API hsitl_status hsitl_convert_labels_csv(const char* csv_path, const char* out_path,
                                                uint32_t height, uint32_t width);

/* ---- dataset splits ---- */
/* mode "be" (balanced train/val, remainder test) or "b" (small balanced).
 * per_class_json may be NULL or a {"<label>": [train, val], ...} object with
 * 1-based class labels overriding the uniform counts in mode "b". Writes
 * CSV rows "set,y,x,class". */
HSITL_API hsitl_status hsitl_split_to_csv(const char* cube_path, const char* labels_path,
                                          const char* mode, uint32_t train_per_class,
                                          uint32_t val_per_class, const char* per_class_json,
                                          uint64_t seed, const char* out_csv);

/* ---- models (HSIM checkpoints) ---- */
HSITL_API hsitl_status hsitl_model_load(const char* path, hsitl_model** out);
HSITL_API hsitl_status hsitl_model_save(const hsitl_model* model, const char* path);
HSITL_API void hsitl_model_free(hsitl_model* model);
HSITL_API hsitl_status hsitl_model_info(const hsitl_model* model, uint32_t* input_bands,
                                        uint32_t* classes, uint32_t* blocks);
/* Classifies `count` spectra of `bands` values each (row-major). Applies the
 * model's stored input normalizer. out_classes receives 0-based ids. */
HSITL_API hsitl_status hsitl_model_predict(const hsitl_model* model, const float* spectra,
                                           uint64_t count, uint32_t bands, int32_t* out_classes);

/* ---- pipelines (JSON-config driven; see README for the schemas) ---- */
HSITL_API hsitl_status hsitl_pretrain(const char* plan_path, const char* out_model_path);
HSITL_API hsitl_status hsitl_finetune(const char* plan_path, const char* model_path,
                                      const char* out_model_path);
HSITL_API hsitl_status hsitl_run_grid(const char* grid_path, const char* out_csv_path);

/* pairing: "per-seed" or "per-cell". *out_text is heap-allocated; release
 * with hsitl_string_free. */
HSITL_API hsitl_status hsitl_report(const char* results_csv_path, const char* pairing,
                                    char** out_text);
HSITL_API void hsitl_string_free(char* text);

/* Pairs the named numeric column of two CSV files row by row (rows with an
 * empty value are skipped in both files symmetrically by position after
 * filtering). used_exact receives 1 for the enumeration path, 0 for the
 * normal approximation. */
HSITL_API hsitl_status hsitl_wilcoxon_csv(const char* csv_a, const char* csv_b,
                                          const char* column, double* w, uint64_t* n_effective,
                                          double* p, int* used_exact);

/* Analytic-vs-finite-difference gradient verification on a small model
 * (64-bit arithmetic). family is "cnn1d" or "ptcnn"; head sizes are reduced
 * to keep the sweep fast. */
HSITL_API hsitl_status hsitl_grad_check(const char* family, uint32_t blocks,
                                        uint32_t input_bands, uint32_t classes, uint32_t kernels,
                                        uint64_t seed, double* max_rel_error);

#ifdef __cplusplus
}
#endif

#endif /* HSITL_H */
