#pragma once

#include <vector>

#include "autodiff.hpp"
#include "rng.hpp"
#include "siren.hpp"

namespace mnif::mix {

enum class CoefficientMode {
    kShared,          // one coefficient per basis, reused by every layer
    kLayerSpecific,   // one coefficient per basis per layer, learned directly
    kLatentProjected, // per-layer coefficients projected from a latent vector
};

struct MnifConfig {
    siren::SirenConfig siren;
    int64_t num_mixtures = 64;
    int64_t latent_dim = 256;  // meaningful for kLatentProjected
    CoefficientMode mode = CoefficientMode::kLatentProjected;
    bool mix_output_layer = true;

    // Length of the per-layer coefficient vector consumed by collapse.
    int64_t coefficient_len() const { return num_mixtures * siren.num_layers(); }
    // Dimension of the per-instance code optimized in stage 1.
    int64_t latent_len() const;
    void validate() const;
};

// The shared generative field: M basis networks stored stacked per layer,
// weights[i] is [M x rows*cols] and biases[i] is [M x rows], so collapse is
// a single [1 x M] by [M x P] product per tensor.
struct BasisBank {
    std::vector<Tensor> weights;
    std::vector<Tensor> biases;
    int64_t num_mixtures = 0;
};

// Maps a latent code to coefficients: alpha = T phi + bias. For the shared
// and layer-specific modes the projection is absent and alpha = phi + bias.
struct CoefficientHead {
    Tensor projection;  // [coefficient_len x H], numel 0 when degenerate
    Tensor bias;
};

struct BankVars {
    std::vector<ad::Var> weights;
    std::vector<ad::Var> biases;
};

struct HeadVars {
    ad::Var projection;  // null when degenerate
    ad::Var bias;
};

BankVars to_vars(const BasisBank& bank, bool trainable);
HeadVars to_vars(const CoefficientHead& head, bool trainable);
std::vector<ad::Var> trainable_list(const BankVars& bank, const HeadVars& head);

// Extracts basis m as a standalone network.
siren::SirenParams basis(const BasisBank& bank, const MnifConfig& cfg, int64_t m);

ad::Var coefficients(const HeadVars& head, const MnifConfig& cfg, const ad::Var& phi);
Tensor coefficients(const CoefficientHead& head, const MnifConfig& cfg, const Tensor& phi);

// Weighted model averaging: one effective network whose layer i is
// sum_m alpha_m(i) {W,b}_m(i). alpha has coefficient_len entries in
// layer-major order, or num_mixtures entries in shared mode.
siren::SirenVars collapse(const BankVars& bank, const MnifConfig& cfg, const ad::Var& alpha);
siren::SirenParams collapse(const BasisBank& bank, const MnifConfig& cfg, const Tensor& alpha);

ad::Var mixture_forward(const BankVars& bank, const HeadVars& head, const MnifConfig& cfg, const ad::Var& phi,
                        const ad::Var& coords);
Tensor mixture_forward(const BasisBank& bank, const CoefficientHead& head, const MnifConfig& cfg, const Tensor& phi,
                       const Tensor& coords);

// Basis networks are drawn with a sqrt(M) gain so that their 1/M average
// reproduces the single-network init statistics; the head starts at the
// uniform average (bias 1/M, projection U[-1/sqrt(H), 1/sqrt(H)]).
std::pair<BasisBank, CoefficientHead> init_mnif(const MnifConfig& cfg, uint64_t seed);

}  // namespace mnif::mix
