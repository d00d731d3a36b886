#pragma once

#include <string>
#include <vector>

#include "mixture.hpp"

namespace mnif::metrics {

// 10 log10(peak^2 / mse); +inf when the inputs agree exactly.
double psnr(const Tensor& pred, const Tensor& target, double peak = 1.0);
double psnr_from_mse(double mse, double peak = 1.0);

// Symmetric mean of squared nearest-neighbor distances, a->b plus b->a.
// Points are rows of [n x d] tensors.
double chamfer(const Tensor& a, const Tensor& b);

struct CoverageMmd {
    double coverage = 0.0;
    double mmd = 0.0;
};

// coverage: fraction of reference sets that are the Chamfer-nearest
// reference of at least one generated set (ties to the lowest index).
// mmd: mean over reference sets of the minimum Chamfer distance to the
// generated sets.
CoverageMmd coverage_mmd(const std::vector<Tensor>& generated, const std::vector<Tensor>& reference);

struct CostReport {
    int64_t inference_params = 0;
    int64_t learnable_params = 0;
    // One FLOP per multiply-accumulate; activations are excluded from the
    // MAC count and the per-instance collapse cost is reported separately.
    int64_t flops_per_instance = 0;
    int64_t collapse_macs_per_instance = 0;
    int64_t peak_buffer_bytes = 0;
};

CostReport cost_report(const mix::MnifConfig& cfg, int64_t queries_per_instance);

struct SimilarityMatrix {
    int64_t size = 0;
    std::vector<float> abs_cosine;  // size x size, diagonal zeroed
    std::vector<std::string> warnings;

    float at(int64_t i, int64_t j) const { return abs_cosine[static_cast<size_t>(i * size + j)]; }
    double mean_off_diagonal() const;
};

// Per-layer absolute cosine similarity between the flattened weight
// matrices of the basis networks; zero-norm bases yield 0 with a warning.
std::vector<SimilarityMatrix> basis_similarity(const mix::BasisBank& bank);

}  // namespace mnif::metrics
