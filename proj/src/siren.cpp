#include "siren.hpp"

#include <cmath>

namespace mnif::siren {

void SirenConfig::validate() const {
    if (in_dim < 1 || out_dim < 1 || hidden_width < 1 || hidden_depth < 0 || !(w0 > 0.0f))
        throw ContractError("invalid siren config: in_dim=" + std::to_string(in_dim) + " out_dim=" +
                            std::to_string(out_dim) + " width=" + std::to_string(hidden_width) + " depth=" +
                            std::to_string(hidden_depth) + " w0=" + std::to_string(w0));
    if (output_activation == OutputActivation::kRgbDensity && out_dim < 2)
        throw ContractError("rgb+density output needs at least 2 channels");
}

int64_t SirenParams::param_count() const {
    int64_t n = 0;
    for (const auto& w : weights) n += w.numel();
    for (const auto& b : biases) n += b.numel();
    return n;
}

int64_t count_params(const SirenConfig& cfg) {
    const int64_t d = cfg.in_dim, k = cfg.out_dim, w = cfg.hidden_width, l = cfg.hidden_depth;
    return w * d + w + l * (w * w + w) + k * w + k;
}

SirenParams init_siren(const SirenConfig& cfg, uint64_t seed, float weight_gain) {
    cfg.validate();
    SirenParams p;
    Rng rng(seed);
    const int64_t layers = cfg.num_layers();
    for (int64_t i = 0; i < layers; ++i) {
        const int64_t in = (i == 0) ? cfg.in_dim : cfg.hidden_width;
        const int64_t out = (i == layers - 1) ? cfg.out_dim : cfg.hidden_width;
        const float bound =
            (i == 0) ? 1.0f / static_cast<float>(cfg.in_dim)
                     : std::sqrt(6.0f / static_cast<float>(cfg.hidden_width)) / cfg.w0;
        Rng layer_rng = rng.fork(static_cast<uint64_t>(i));
        Tensor w({out, in});
        for (int64_t j = 0; j < w.numel(); ++j) w[j] = layer_rng.uniform(-bound, bound) * weight_gain;
        p.weights.push_back(std::move(w));
        p.biases.emplace_back(Shape{out});
    }
    return p;
}

SirenVars to_vars(const SirenParams& params, bool trainable) {
    SirenVars v;
    for (const auto& w : params.weights) v.weights.push_back(trainable ? ad::leaf(w) : ad::constant(w));
    for (const auto& b : params.biases) v.biases.push_back(trainable ? ad::leaf(b) : ad::constant(b));
    return v;
}

SirenParams to_params(const SirenVars& vars) {
    SirenParams p;
    for (const auto& w : vars.weights) p.weights.push_back(w->value);
    for (const auto& b : vars.biases) p.biases.push_back(b->value);
    return p;
}

ad::Var forward(const SirenVars& vars, const SirenConfig& cfg, const ad::Var& coords) {
    cfg.validate();
    if (coords->value.rank() != 2 || coords->value.cols() != cfg.in_dim)
        throw ShapeError("siren forward: coords " + coords->value.shape_string() + " do not match in_dim " +
                         std::to_string(cfg.in_dim));
    const int64_t layers = cfg.num_layers();
    if (static_cast<int64_t>(vars.weights.size()) != layers)
        throw ShapeError("siren forward: expected " + std::to_string(layers) + " layers, got " +
                         std::to_string(vars.weights.size()));
    ad::Var h = coords;
    for (int64_t i = 0; i + 1 < layers; ++i) {
        ad::Var z = ad::add_rowvec(ad::matmul(h, ad::transpose(vars.weights[static_cast<size_t>(i)])),
                                   vars.biases[static_cast<size_t>(i)]);
        if (i > 0 || cfg.w0_on_input) z = ad::scale(z, cfg.w0);
        h = ad::sin(z);
    }
    ad::Var out = ad::add_rowvec(ad::matmul(h, ad::transpose(vars.weights.back())), vars.biases.back());
    if (cfg.output_activation == OutputActivation::kRgbDensity) {
        ad::Var rgb = ad::slice_cols(out, 0, cfg.out_dim - 1);
        ad::Var density = ad::relu(ad::add_scalar(ad::elu(ad::slice_cols(out, cfg.out_dim - 1, cfg.out_dim)), 1.0f));
        out = ad::concat_cols(rgb, density);
    }
    return out;
}

Tensor forward(const SirenParams& params, const SirenConfig& cfg, const Tensor& coords) {
    return forward(to_vars(params, false), cfg, ad::constant(coords))->value;
}

std::vector<double> hidden_preactivation_stds(const SirenParams& params, const SirenConfig& cfg,
                                              const Tensor& coords) {
    cfg.validate();
    SirenVars vars = to_vars(params, false);
    ad::Var h = ad::constant(coords);
    std::vector<double> stds;
    for (int64_t i = 0; i + 1 < cfg.num_layers(); ++i) {
        ad::Var z = ad::add_rowvec(ad::matmul(h, ad::transpose(vars.weights[static_cast<size_t>(i)])),
                                   vars.biases[static_cast<size_t>(i)]);
        if (i > 0 || cfg.w0_on_input) z = ad::scale(z, cfg.w0);
        if (i > 0) {
            const Tensor& zv = z->value;
            double mean = 0.0;
            for (int64_t j = 0; j < zv.numel(); ++j) mean += zv[j];
            mean /= static_cast<double>(zv.numel());
            double var = 0.0;
            for (int64_t j = 0; j < zv.numel(); ++j) var += (zv[j] - mean) * (zv[j] - mean);
            var /= static_cast<double>(zv.numel());
            stds.push_back(std::sqrt(var));
        }
        h = ad::sin(z);
    }
    return stds;
}

}  // namespace mnif::siren
