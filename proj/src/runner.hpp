#pragma once

#include <functional>
#include <memory>
#include <string>

#include "storage.hpp"

namespace mnif::run {

// The requested operation cannot be served by this artifact (wrong stage,
// missing section, unknown id).
struct StateError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

using LogLineFn = std::function<void(const std::string&)>;

// Dataset plus the storage that backs it.
struct DatasetBundle {
    io::SynthDataset storage;
    std::unique_ptr<train::TrainDataset> dataset;
};

// Builds the training dataset named by the config: a synthetic set when
// data.synth is set, otherwise files under data.path. Also pins the model
// input/output dimensions the domain requires.
DatasetBundle make_dataset(const io::RunConfig& cfg);
void harmonize_model_for_domain(io::RunConfig& cfg);

// Stage 1: context adaptation + latent harvest. Writes <out>/stage1.mnif,
// <out>/train.log and <out>/config.json; keeps <out>/last.mnif as the most
// recent epoch snapshot while training runs.
void train_stage1(io::RunConfig cfg, const std::string& out_dir, const LogLineFn& log = {});

// Stage 2: denoiser training over the harvested latents. The model comes
// from the checkpoint; the diffusion settings and seed come from cfg.
// Writes <out>/stage2.mnif and <out>/train.log.
void train_stage2(const io::RunConfig& cfg, const std::string& stage1_ckpt, const std::string& out_dir,
                  const LogLineFn& log = {});

// Decodes `count` sampled latents into the domain's artifact files under
// out_dir. sampler is "ddpm" or "interp".
void sample(const io::Checkpoint& ckpt, const std::string& sampler, int64_t count, uint64_t seed,
            const std::string& out_dir, int64_t threads = 1);

void reconstruct(const io::Checkpoint& ckpt, const std::vector<int64_t>& ids, const std::string& out_dir);

// Bilinear latent grid over four table ids (corners a,b / c,d); decodes a
// grid x grid sheet. Corner cells reuse the reconstruction decode path.
void interpolate(const io::Checkpoint& ckpt, const std::array<int64_t, 4>& ids, int64_t grid,
                 const std::string& out_dir);

// Key=value metric report; also written to out_path as JSON when non-empty.
// metrics_csv selects from: mse, psnr, iou, chamfer, coverage-mmd.
std::string eval_checkpoint(const io::Checkpoint& ckpt, const std::string& metrics_csv,
                            const std::string& dataset_path, const std::string& out_path);

// Config echo, cost accounting and basis-similarity summary; loads no data.
std::string inspect_checkpoint(const io::Checkpoint& ckpt);

}  // namespace mnif::run
