// Scratch: can the machinery overfit a single image at all?
#include <cmath>
#include <cstdio>
#include <string>

#include "fields.hpp"
#include "storage.hpp"
#include "trainers.hpp"

using namespace mnif;

int main(int argc, char** argv) {
    const float w0 = argc > 1 ? std::stof(argv[1]) : 30.0f;
    const float lr = argc > 2 ? std::stof(argv[2]) : 1e-3f;
    const int64_t steps = argc > 3 ? std::stol(argv[3]) : 300;
    const int64_t m = argc > 4 ? std::stol(argv[4]) : 1;

    io::DataConfig dc;
    dc.image_size = 16;
    io::SynthDataset synth = io::synth_dataset(io::SynthKind::kGradients, 1, 1, dc);
    auto [coords_t, targets_t] = fields::image_to_pairs(synth.images[0]);

    mix::MnifConfig cfg;
    cfg.siren = {2, 3, 32, 2};
    cfg.siren.w0 = w0;
    cfg.num_mixtures = m;
    cfg.latent_dim = 32;
    auto [bank, head] = mix::init_mnif(cfg, 7);

    std::vector<Tensor*> params;
    for (auto& w : bank.weights) params.push_back(&w);
    for (auto& b : bank.biases) params.push_back(&b);
    params.push_back(&head.projection);
    params.push_back(&head.bias);

    train::AdamConfig adam;
    train::AdamState state;
    state.init_like(params);

    Tensor phi({32});
    for (int64_t s = 0; s < steps; ++s) {
        mix::BankVars bv = mix::to_vars(bank, true);
        mix::HeadVars hv = mix::to_vars(head, true);
        std::vector<ad::Var> leaves = mix::trainable_list(bv, hv);
        ad::Var pred = mix::mixture_forward(bv, hv, cfg, ad::constant(phi), ad::constant(coords_t));
        ad::Var loss = ad::mse(pred, ad::constant(targets_t));
        auto grads = ad::grad(loss, leaves);
        if (s % 50 == 0 || s == steps - 1) {
            double gnorm = 0.0;
            for (const auto& g : grads)
                for (int64_t j = 0; j < g->value.numel(); ++j) gnorm += g->value[j] * g->value[j];
            std::printf("step %4lld loss=%.6f psnr=%.2f |g|=%.4g\n", static_cast<long long>(s),
                        static_cast<double>(loss->value[0]), train::psnr_from_mse(loss->value[0]),
                        std::sqrt(gnorm));
        }
        std::vector<const Tensor*> gp;
        for (const auto& g : grads) gp.push_back(&g->value);
        adam_step(adam, state, params, gp, lr);
        for (auto& g : grads) ad::release(std::move(g));
        ad::release(std::move(loss));
    }
    return 0;
}
