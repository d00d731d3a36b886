#pragma once

#include <functional>
#include <vector>

#include "mixture.hpp"
#include "optim.hpp"
#include "rng.hpp"

namespace mnif::train {

struct TrainItem {
    Tensor coords;
    Tensor targets;
};

// Coordinate/target supplier. item() may subsample (voxels, rays) and is
// handed a dedicated rng stream per (step, instance); full_item() returns
// the complete supervision set used for evaluation and latent harvesting.
// predict() turns a collapsed network into predictions for one item;
// rendering domains override it to run their decoder.
class TrainDataset {
public:
    virtual ~TrainDataset() = default;
    virtual int64_t size() const = 0;
    virtual TrainItem item(int64_t index, Rng rng) const = 0;
    virtual TrainItem full_item(int64_t index) const = 0;
    virtual ad::Var predict(const siren::SirenVars& inr, const siren::SirenConfig& cfg, const TrainItem& item) const;
};

// dataset.predict bound to one network configuration.
using PredictFn = std::function<ad::Var(const siren::SirenVars&, const TrainItem&)>;

struct MetaTrainConfig {
    int64_t inner_steps = 3;
    float inner_lr = 1.0f;
    float outer_lr = 1e-4f;
    float latent_init_std = 0.01f;
    bool second_order = true;
    int64_t batch_size = 16;
    int64_t epochs = 100;
    int64_t max_steps = 0;  // optional cap on outer steps; 0 = run all epochs
    LrSchedule lr_schedule = LrSchedule::kCosine;

    void validate() const;
};

struct AutoDecodeConfig {
    float lr = 1e-4f;
    float latent_init_std = 0.01f;
    float latent_weight_decay = 0.0f;
    int64_t batch_size = 16;
    int64_t epochs = 100;
    int64_t max_steps = 0;
    LrSchedule lr_schedule = LrSchedule::kCosine;

    void validate() const;
};

// One latent code per training instance, keyed by instance index.
struct LatentTable {
    std::vector<Tensor> rows;

    int64_t size() const { return static_cast<int64_t>(rows.size()); }
    int64_t dim() const { return rows.empty() ? 0 : rows.front().numel(); }
};

struct LogEntry {
    int64_t step = 0;
    int64_t epoch = 0;
    double loss = 0.0;
    double psnr = 0.0;
    double lr = 0.0;
};

using LogCallback = std::function<void(const LogEntry&)>;
// Invoked at each epoch end with the current parameters (and latents when
// the method keeps them); gives callers a last-good snapshot to persist.
using EpochCallback =
    std::function<void(int64_t epoch, const mix::BasisBank&, const mix::CoefficientHead&, const LatentTable*)>;

std::string format_log_entry(const LogEntry& e);

// Mean squared error over all elements.
ad::Var reconstruction_loss(const ad::Var& pred, const ad::Var& target);
double reconstruction_loss(const Tensor& pred, const Tensor& target);

double psnr_from_mse(double mse, double peak = 1.0);

struct InnerAdaptResult {
    ad::Var phi;
    std::vector<double> losses;  // loss before each inner step
};

// N_inner plain gradient steps on the latent from a N(0, sigma^2) draw.
// With second_order the returned latent keeps its differentiable dependence
// on the bank and head; otherwise every update is detached.
InnerAdaptResult inner_adapt_graph(const mix::BankVars& bank, const mix::HeadVars& head, const mix::MnifConfig& cfg,
                                   const TrainItem& item, const PredictFn& predict, const MetaTrainConfig& tcfg,
                                   Rng latent_rng);

Tensor inner_adapt(const mix::BasisBank& bank, const mix::CoefficientHead& head, const mix::MnifConfig& cfg,
                   const TrainItem& item, const MetaTrainConfig& tcfg, uint64_t seed,
                   const PredictFn& predict = {});

struct Stage1Result {
    mix::BasisBank bank;
    mix::CoefficientHead head;
    LatentTable latents;  // populated by auto-decoding; empty after meta training
    std::vector<LogEntry> log;
};

// Episodic training: fresh latent per instance per outer step, adapted in
// the inner loop; shared parameters updated with Adam on gradients taken at
// the adapted latent and averaged over the mini-batch.
Stage1Result meta_train(const TrainDataset& dataset, const mix::MnifConfig& cfg, const MetaTrainConfig& tcfg,
                        uint64_t seed, const LogCallback& on_log = {}, const EpochCallback& on_epoch = {});

// Joint optimization of shared parameters and persistent per-instance
// latents; weight decay applies to the latents only.
Stage1Result auto_decode_train(const TrainDataset& dataset, const mix::MnifConfig& cfg, const AutoDecodeConfig& tcfg,
                               uint64_t seed, const LogCallback& on_log = {}, const EpochCallback& on_epoch = {});

// Adapts a latent per instance against its full supervision set with the
// shared parameters frozen. Auto-decoded models keep their stored table
// instead of calling this.
LatentTable harvest_latents(const mix::BasisBank& bank, const mix::CoefficientHead& head, const mix::MnifConfig& cfg,
                            const TrainDataset& dataset, const MetaTrainConfig& tcfg, uint64_t seed);

// Mean reconstruction error of decoded latents over the full supervision
// sets, one entry per instance.
std::vector<double> evaluate_latents(const mix::BasisBank& bank, const mix::CoefficientHead& head,
                                     const mix::MnifConfig& cfg, const TrainDataset& dataset,
                                     const LatentTable& table);

}  // namespace mnif::train
