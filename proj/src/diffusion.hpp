#pragma once

#include <vector>

#include "autodiff.hpp"
#include "rng.hpp"
#include "trainers.hpp"

namespace mnif::ddpm {

enum class NoiseSchedule { kLinear, kCosine };

struct DiffusionConfig {
    int64_t timesteps = 1000;
    NoiseSchedule schedule = NoiseSchedule::kCosine;
    int64_t denoiser_width = 256;
    int64_t denoiser_blocks = 4;
    float lr = 1e-4f;
    int64_t batch_size = 32;
    int64_t epochs = 100;
    int64_t max_steps = 0;

    void validate() const;
};

// Precomputed beta_t and cumulative alpha-bar products, both in double.
struct Schedule {
    std::vector<double> beta;
    std::vector<double> alpha_bar;
};

Schedule make_schedule(const DiffusionConfig& cfg);

// Noise predictor: input/output projections around residual blocks of two
// affine layers with a SiLU nonlinearity, each conditioned on a sinusoidal
// timestep embedding through its own projection.
struct DenoiserMlp {
    int64_t latent_dim = 0;
    int64_t width = 0;
    Tensor in_w, in_b;
    struct Block {
        Tensor w1, b1, temb_w, w2, b2;
    };
    std::vector<Block> blocks;
    Tensor out_w, out_b;

    int64_t param_count() const;
};

struct DenoiserVars {
    ad::Var in_w, in_b;
    struct Block {
        ad::Var w1, b1, temb_w, w2, b2;
    };
    std::vector<Block> blocks;
    ad::Var out_w, out_b;
};

int64_t denoiser_param_count(int64_t latent_dim, int64_t width, int64_t blocks);
DenoiserMlp init_denoiser(int64_t latent_dim, const DiffusionConfig& cfg, uint64_t seed);
DenoiserVars to_vars(const DenoiserMlp& d, bool trainable);
std::vector<ad::Var> trainable_list(const DenoiserVars& d);

// Predicted noise for a batch of states x [B x H] at per-row timesteps.
ad::Var denoise(const DenoiserVars& d, const ad::Var& x, const std::vector<int64_t>& t, int64_t timesteps);
Tensor denoise(const DenoiserMlp& d, const Tensor& x, const std::vector<int64_t>& t, int64_t timesteps);

// Per-dimension standardization statistics of the latent table; degenerate
// dimensions get a 1e-6 floor on the standard deviation.
struct LatentStats {
    Tensor mean;
    Tensor stddev;
};

LatentStats compute_stats(const train::LatentTable& table);
Tensor standardize(const LatentStats& stats, const Tensor& phi);
Tensor destandardize(const LatentStats& stats, const Tensor& phi);

// Closed-form forward process: x_t = sqrt(abar_t) x0 + sqrt(1-abar_t) noise.
Tensor forward_noise(const Tensor& phi0, int64_t t, const Tensor& noise, const Schedule& schedule);

struct Stage2Result {
    DenoiserMlp denoiser;
    LatentStats stats;
    std::vector<train::LogEntry> log;
};

Stage2Result train_denoiser(const train::LatentTable& table, const DiffusionConfig& cfg, uint64_t seed,
                            const train::LogCallback& on_log = {});

// Ancestral sampling from x_T ~ N(0, I); each chain owns its noise stream.
std::vector<Tensor> sample(const DenoiserMlp& denoiser, const LatentStats& stats, const DiffusionConfig& cfg,
                           int64_t count, uint64_t seed);

struct InterpolationDraw {
    Tensor phi;
    int64_t index_a = 0;
    int64_t index_b = 0;
    float alpha = 0.0f;
};

// Convex combination of a random table row with one of its k nearest
// neighbors; the draw is returned so it can be replayed.
InterpolationDraw sample_by_interpolation(const train::LatentTable& table, int64_t k_neighbors, Rng rng);

}  // namespace mnif::ddpm
