#include "mixture.hpp"

#include <cmath>

namespace mnif::mix {

int64_t MnifConfig::latent_len() const {
    switch (mode) {
        case CoefficientMode::kShared: return num_mixtures;
        case CoefficientMode::kLayerSpecific: return coefficient_len();
        default: return latent_dim;
    }
}

void MnifConfig::validate() const {
    siren.validate();
    if (num_mixtures < 1) throw ContractError("num_mixtures must be >= 1, got " + std::to_string(num_mixtures));
    if (mode == CoefficientMode::kLatentProjected && latent_dim < 1)
        throw ContractError("latent_dim must be >= 1 for the projected mode, got " + std::to_string(latent_dim));
}

BankVars to_vars(const BasisBank& bank, bool trainable) {
    BankVars v;
    for (const auto& w : bank.weights) v.weights.push_back(trainable ? ad::leaf(w) : ad::constant(w));
    for (const auto& b : bank.biases) v.biases.push_back(trainable ? ad::leaf(b) : ad::constant(b));
    return v;
}

HeadVars to_vars(const CoefficientHead& head, bool trainable) {
    HeadVars v;
    if (head.projection.numel() > 0) v.projection = trainable ? ad::leaf(head.projection) : ad::constant(head.projection);
    v.bias = trainable ? ad::leaf(head.bias) : ad::constant(head.bias);
    return v;
}

std::vector<ad::Var> trainable_list(const BankVars& bank, const HeadVars& head) {
    std::vector<ad::Var> out;
    for (const auto& w : bank.weights) out.push_back(w);
    for (const auto& b : bank.biases) out.push_back(b);
    if (head.projection) out.push_back(head.projection);
    out.push_back(head.bias);
    return out;
}

siren::SirenParams basis(const BasisBank& bank, const MnifConfig& cfg, int64_t m) {
    if (m < 0 || m >= bank.num_mixtures)
        throw ContractError("basis index " + std::to_string(m) + " out of range for M=" +
                            std::to_string(bank.num_mixtures));
    siren::SirenParams p;
    const int64_t layers = cfg.siren.num_layers();
    for (int64_t i = 0; i < layers; ++i) {
        const int64_t in = (i == 0) ? cfg.siren.in_dim : cfg.siren.hidden_width;
        const int64_t out = (i == layers - 1) ? cfg.siren.out_dim : cfg.siren.hidden_width;
        const Tensor& sw = bank.weights[static_cast<size_t>(i)];
        const Tensor& sb = bank.biases[static_cast<size_t>(i)];
        Tensor w({out, in}), b({out});
        for (int64_t j = 0; j < out * in; ++j) w[j] = sw.at2(m, j);
        for (int64_t j = 0; j < out; ++j) b[j] = sb.at2(m, j);
        p.weights.push_back(std::move(w));
        p.biases.push_back(std::move(b));
    }
    return p;
}

ad::Var coefficients(const HeadVars& head, const MnifConfig& cfg, const ad::Var& phi) {
    const int64_t latent = cfg.latent_len();
    if (phi->value.numel() != latent)
        throw ShapeError("coefficients: latent " + phi->value.shape_string() + " does not match expected length " +
                         std::to_string(latent));
    if (cfg.mode == CoefficientMode::kLatentProjected) {
        if (!head.projection) throw ContractError("coefficients: projected mode requires a projection matrix");
        ad::Var col = ad::matmul(head.projection, ad::reshape(phi, {latent, 1}));
        return ad::add(ad::reshape(col, {cfg.coefficient_len()}), head.bias);
    }
    return ad::add(ad::reshape(phi, {latent}), head.bias);
}

Tensor coefficients(const CoefficientHead& head, const MnifConfig& cfg, const Tensor& phi) {
    return coefficients(to_vars(head, false), cfg, ad::constant(phi))->value;
}

siren::SirenVars collapse(const BankVars& bank, const MnifConfig& cfg, const ad::Var& alpha) {
    cfg.validate();
    const int64_t m = cfg.num_mixtures;
    const int64_t layers = cfg.siren.num_layers();
    const bool shared = alpha->value.numel() == m;
    if (!shared && alpha->value.numel() != m * layers)
        throw ShapeError("collapse: coefficient vector " + alpha->value.shape_string() + " does not match M=" +
                         std::to_string(m) + ", layers=" + std::to_string(layers));
    if (static_cast<int64_t>(bank.weights.size()) != layers)
        throw ShapeError("collapse: bank has " + std::to_string(bank.weights.size()) + " layers, config expects " +
                         std::to_string(layers));

    ad::Var shared_row = shared ? ad::reshape(alpha, {1, m}) : nullptr;
    ad::Var uniform_row;  // used for the output layer when it is not mixed
    siren::SirenVars out;
    for (int64_t i = 0; i < layers; ++i) {
        ad::Var row;
        if (!cfg.mix_output_layer && i == layers - 1) {
            if (!uniform_row)
                uniform_row = ad::constant(Tensor::full({1, m}, 1.0f / static_cast<float>(m)));
            row = uniform_row;
        } else if (shared) {
            row = shared_row;
        } else {
            row = ad::reshape(ad::slice_flat(alpha, i * m, m), {1, m});
        }
        const int64_t in = (i == 0) ? cfg.siren.in_dim : cfg.siren.hidden_width;
        const int64_t rows = (i == layers - 1) ? cfg.siren.out_dim : cfg.siren.hidden_width;
        out.weights.push_back(ad::reshape(ad::matmul(row, bank.weights[static_cast<size_t>(i)]), {rows, in}));
        out.biases.push_back(ad::reshape(ad::matmul(row, bank.biases[static_cast<size_t>(i)]), {rows}));
    }
    return out;
}

siren::SirenParams collapse(const BasisBank& bank, const MnifConfig& cfg, const Tensor& alpha) {
    return siren::to_params(collapse(to_vars(bank, false), cfg, ad::constant(alpha)));
}

ad::Var mixture_forward(const BankVars& bank, const HeadVars& head, const MnifConfig& cfg, const ad::Var& phi,
                        const ad::Var& coords) {
    return siren::forward(collapse(bank, cfg, coefficients(head, cfg, phi)), cfg.siren, coords);
}

Tensor mixture_forward(const BasisBank& bank, const CoefficientHead& head, const MnifConfig& cfg, const Tensor& phi,
                       const Tensor& coords) {
    return mixture_forward(to_vars(bank, false), to_vars(head, false), cfg, ad::constant(phi), ad::constant(coords))
        ->value;
}

std::pair<BasisBank, CoefficientHead> init_mnif(const MnifConfig& cfg, uint64_t seed) {
    cfg.validate();
    const int64_t m = cfg.num_mixtures;
    const int64_t layers = cfg.siren.num_layers();
    const float gain = std::sqrt(static_cast<float>(m));

    BasisBank bank;
    bank.num_mixtures = m;
    for (int64_t i = 0; i < layers; ++i) {
        const int64_t in = (i == 0) ? cfg.siren.in_dim : cfg.siren.hidden_width;
        const int64_t rows = (i == layers - 1) ? cfg.siren.out_dim : cfg.siren.hidden_width;
        bank.weights.emplace_back(Shape{m, rows * in});
        bank.biases.emplace_back(Shape{m, rows});
    }
    Rng root(seed);
    Rng basis_rng = root.fork("basis-init");
    for (int64_t j = 0; j < m; ++j) {
        siren::SirenParams p = siren::init_siren(cfg.siren, basis_rng.fork(static_cast<uint64_t>(j)).seed(), gain);
        for (int64_t i = 0; i < layers; ++i) {
            const Tensor& w = p.weights[static_cast<size_t>(i)];
            const Tensor& b = p.biases[static_cast<size_t>(i)];
            for (int64_t t = 0; t < w.numel(); ++t) bank.weights[static_cast<size_t>(i)].at2(j, t) = w[t];
            for (int64_t t = 0; t < b.numel(); ++t) bank.biases[static_cast<size_t>(i)].at2(j, t) = b[t];
        }
    }

    CoefficientHead head;
    const float inv_m = 1.0f / static_cast<float>(m);
    if (cfg.mode == CoefficientMode::kLatentProjected) {
        const int64_t c = cfg.coefficient_len(), h = cfg.latent_dim;
        const float bound = 1.0f / std::sqrt(static_cast<float>(h));
        Rng head_rng = root.fork("head-init");
        head.projection = Tensor({c, h});
        for (int64_t i = 0; i < head.projection.numel(); ++i) head.projection[i] = head_rng.uniform(-bound, bound);
        head.bias = Tensor::full({c}, inv_m);
    } else {
        head.bias = Tensor::full({cfg.latent_len()}, inv_m);
    }
    return {std::move(bank), std::move(head)};
}

}  // namespace mnif::mix
