#pragma once

#include <cstdint>
#include <vector>

#include "tensor.hpp"

namespace mnif::train {

enum class LrSchedule { kConstant, kCosine };

// Cosine annealing without warm-up, reaching zero at the final step.
double scheduled_lr(LrSchedule schedule, double base_lr, int64_t step, int64_t total_steps);

struct AdamConfig {
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
};

// First/second moment state for one group of tensors.
struct AdamState {
    std::vector<Tensor> m;
    std::vector<Tensor> v;
    int64_t t = 0;

    void init_like(const std::vector<Tensor*>& params);
};

void adam_step(const AdamConfig& cfg, AdamState& state, const std::vector<Tensor*>& params,
               const std::vector<const Tensor*>& grads, float lr);

}  // namespace mnif::train
