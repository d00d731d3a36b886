/* mnif: compact generative neural fields built from mixtures of implicit
 * basis networks.
 *
 * C interface to the training and sampling pipeline. All functions return a
 * status code; on failure mnif_last_error() carries a human-readable,
 * thread-local message. Objects are opaque handles owned by the library and
 * released with their matching *_free / *_close call. Strings returned
 * through char** out-parameters are heap copies released with
 * mnif_string_free().
 */
#ifndef MNIF_MNIF_H
#define MNIF_MNIF_H

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum mnif_status {
    MNIF_OK = 0,
    MNIF_ERR_INVALID_ARGUMENT = 1, /* bad parameter or precondition */
    MNIF_ERR_CONFIG = 2,           /* config file/key/value problems */
    MNIF_ERR_IO = 3,               /* filesystem failures */
    MNIF_ERR_FORMAT = 4,           /* malformed or corrupt artifact files */
    MNIF_ERR_STATE = 5,            /* artifact lacks what the call needs */
    MNIF_ERR_DIVERGED = 6,         /* training produced non-finite values */
    MNIF_ERR_INTERNAL = 7
} mnif_status;

typedef struct mnif_config mnif_config;         /* a full run configuration */
typedef struct mnif_checkpoint mnif_checkpoint; /* a loaded artifact */

/* One line of training output per call; `user` is passed through. */
typedef void (*mnif_log_fn)(const char* line, void* user);

const char* mnif_status_name(mnif_status status);
const char* mnif_last_error(void);
void mnif_string_free(char* s);

/* ---- configuration ---------------------------------------------------- */

mnif_status mnif_config_create(mnif_config** out);
mnif_status mnif_config_load(const char* path, mnif_config** out);
/* Dotted key, JSON-literal value: ("model.width", "64"),
 * ("train.method", "\"autodec\"") or simply ("train.method", "autodec"). */
mnif_status mnif_config_set(mnif_config* cfg, const char* key, const char* value);
/* Canonical JSON of the fully resolved configuration. */
mnif_status mnif_config_dump(const mnif_config* cfg, char** out_json);
void mnif_config_free(mnif_config* cfg);

/* ---- training --------------------------------------------------------- */

/* Context adaptation (meta-learning or auto-decoding, per the config) plus
 * latent harvesting. Writes stage1.mnif, config.json and train.log under
 * out_dir. */
mnif_status mnif_train_stage1(const mnif_config* cfg, const char* out_dir, mnif_log_fn log, void* user);

/* Denoising-diffusion prior over the harvested latents of a stage-1
 * checkpoint. Writes stage2.mnif and train.log under out_dir. */
mnif_status mnif_train_stage2(const mnif_config* cfg, const char* stage1_checkpoint, const char* out_dir,
                              mnif_log_fn log, void* user);

/* ---- artifacts --------------------------------------------------------- */

mnif_status mnif_checkpoint_open(const char* path, mnif_checkpoint** out);
void mnif_checkpoint_close(mnif_checkpoint* ckpt);
mnif_status mnif_checkpoint_stage(const mnif_checkpoint* ckpt, uint32_t* out_stage);
mnif_status mnif_checkpoint_config_dump(const mnif_checkpoint* ckpt, char** out_json);

/* sampler: "ddpm" (needs a stage-2 checkpoint) or "interp" (latent-table
 * neighborhood interpolation). Decoded instances land under out_dir in the
 * domain's format. */
mnif_status mnif_sample(const mnif_checkpoint* ckpt, const char* sampler, int64_t count, uint64_t seed,
                        const char* out_dir, int64_t threads);

mnif_status mnif_reconstruct(const mnif_checkpoint* ckpt, const int64_t* ids, int64_t n_ids, const char* out_dir);

/* Bilinear latent grid over four corner ids, decoded to a grid x grid
 * sheet. */
mnif_status mnif_interpolate(const mnif_checkpoint* ckpt, const int64_t ids[4], int64_t grid, const char* out_dir);

/* metrics_csv: comma-separated subset of mse, psnr, iou, chamfer,
 * coverage-mmd. dataset_path may be NULL to use the dataset recipe stored
 * in the checkpoint; out_path may be NULL to skip the JSON report file.
 * The key=value report text is returned through out_report. */
mnif_status mnif_eval(const mnif_checkpoint* ckpt, const char* metrics_csv, const char* dataset_path,
                      const char* out_path, char** out_report);

/* Config echo plus cost accounting and basis-similarity summary; never
 * touches datasets. */
mnif_status mnif_inspect(const mnif_checkpoint* ckpt, char** out_report);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* MNIF_MNIF_H */
