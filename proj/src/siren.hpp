#pragma once

#include <vector>

#include "autodiff.hpp"
#include "rng.hpp"
#include "tensor.hpp"

namespace mnif::siren {

enum class OutputActivation {
    kLinear,      // plain affine output (images, occupancy)
    kRgbDensity,  // first out_dim-1 channels linear, last channel elu(x)+1 clamped at 0
};

struct SirenConfig {
    int64_t in_dim = 2;
    int64_t out_dim = 3;
    int64_t hidden_width = 64;
    int64_t hidden_depth = 4;  // count of W x W hidden layers; total layers = hidden_depth + 2
    float w0 = 30.0f;
    bool w0_on_input = true;
    OutputActivation output_activation = OutputActivation::kLinear;

    int64_t num_layers() const { return hidden_depth + 2; }
    void validate() const;
};

// Per-layer weight [out x in] and bias [out] tensors, layers 0..L+1.
struct SirenParams {
    std::vector<Tensor> weights;
    std::vector<Tensor> biases;

    int64_t num_layers() const { return static_cast<int64_t>(weights.size()); }
    int64_t param_count() const;
};

// Graph handles over the same layout, trainable or frozen.
struct SirenVars {
    std::vector<ad::Var> weights;
    std::vector<ad::Var> biases;
};

// Frequency-scaled sine MLP initialization: the first layer is drawn from
// U[-1/d, 1/d] and every later layer from U[-sqrt(6/W)/w0, sqrt(6/W)/w0],
// which keeps the input of every hidden sine at unit standard deviation.
// weight_gain rescales the bounds (used when networks are built to be
// averaged); biases start at zero.
SirenParams init_siren(const SirenConfig& cfg, uint64_t seed, float weight_gain = 1.0f);

int64_t count_params(const SirenConfig& cfg);

SirenVars to_vars(const SirenParams& params, bool trainable);
SirenParams to_params(const SirenVars& vars);

ad::Var forward(const SirenVars& vars, const SirenConfig& cfg, const ad::Var& coords);
Tensor forward(const SirenParams& params, const SirenConfig& cfg, const Tensor& coords);

// Standard deviation of each hidden layer's sine input (layers 1..L) over a
// batch of coordinates; the init contract drives these toward 1.
std::vector<double> hidden_preactivation_stds(const SirenParams& params, const SirenConfig& cfg, const Tensor& coords);

}  // namespace mnif::siren
