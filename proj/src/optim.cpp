#include "optim.hpp"

#include <cmath>

namespace mnif::train {

double scheduled_lr(LrSchedule schedule, double base_lr, int64_t step, int64_t total_steps) {
    if (schedule == LrSchedule::kConstant) return base_lr;
    const double denom = static_cast<double>(total_steps > 1 ? total_steps - 1 : 1);
    const double phase = 3.14159265358979323846 * static_cast<double>(step) / denom;
    return base_lr * 0.5 * (1.0 + std::cos(phase));
}

void AdamState::init_like(const std::vector<Tensor*>& params) {
    m.clear();
    v.clear();
    for (const Tensor* p : params) {
        m.emplace_back(p->shape());
        v.emplace_back(p->shape());
    }
    t = 0;
}

void adam_step(const AdamConfig& cfg, AdamState& state, const std::vector<Tensor*>& params,
               const std::vector<const Tensor*>& grads, float lr) {
    if (params.size() != grads.size() || params.size() != state.m.size())
        throw ContractError("adam_step: parameter, gradient and state counts disagree");
    state.t += 1;
    const double bc1 = 1.0 - std::pow(static_cast<double>(cfg.beta1), static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(static_cast<double>(cfg.beta2), static_cast<double>(state.t));
    for (size_t i = 0; i < params.size(); ++i) {
        Tensor& p = *params[i];
        const Tensor& g = *grads[i];
        check_same_shape(p, g, "adam_step");
        Tensor& m = state.m[i];
        Tensor& v = state.v[i];
        const int64_t n = p.numel();
        for (int64_t j = 0; j < n; ++j) {
            const float gj = g[j];
            m[j] = cfg.beta1 * m[j] + (1.0f - cfg.beta1) * gj;
            v[j] = cfg.beta2 * v[j] + (1.0f - cfg.beta2) * gj * gj;
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            p[j] -= static_cast<float>(lr * mhat / (std::sqrt(vhat) + cfg.eps));
        }
    }
}

}  // namespace mnif::train
