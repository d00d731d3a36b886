#include "metrics.hpp"

#include <cmath>
#include <limits>

namespace mnif::metrics {

double psnr_from_mse(double mse, double peak) {
    if (mse <= 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(peak * peak / mse);
}

double psnr(const Tensor& pred, const Tensor& target, double peak) {
    check_same_shape(pred, target, "psnr");
    double acc = 0.0;
    for (int64_t i = 0; i < pred.numel(); ++i) {
        const double d = static_cast<double>(pred[i]) - static_cast<double>(target[i]);
        acc += d * d;
    }
    return psnr_from_mse(acc / static_cast<double>(pred.numel()), peak);
}

namespace {

double mean_nn_sq(const Tensor& from, const Tensor& to) {
    const int64_t n = from.rows(), m = to.rows(), d = from.cols();
    double acc = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (int64_t j = 0; j < m; ++j) {
            double d2 = 0.0;
            for (int64_t c = 0; c < d; ++c) {
                const double diff = static_cast<double>(from.at2(i, c)) - static_cast<double>(to.at2(j, c));
                d2 += diff * diff;
            }
            best = std::min(best, d2);
        }
        acc += best;
    }
    return acc / static_cast<double>(n);
}

}  // namespace

double chamfer(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.cols())
        throw ShapeError("chamfer: point sets " + a.shape_string() + " and " + b.shape_string() + " disagree");
    if (a.rows() == 0 || b.rows() == 0) throw ContractError("chamfer: empty point set");
    return mean_nn_sq(a, b) + mean_nn_sq(b, a);
}

CoverageMmd coverage_mmd(const std::vector<Tensor>& generated, const std::vector<Tensor>& reference) {
    if (generated.empty() || reference.empty()) throw ContractError("coverage_mmd: empty input list");
    const int64_t g = static_cast<int64_t>(generated.size());
    const int64_t r = static_cast<int64_t>(reference.size());
    std::vector<std::vector<double>> dist(static_cast<size_t>(g), std::vector<double>(static_cast<size_t>(r)));
    for (int64_t i = 0; i < g; ++i)
        for (int64_t j = 0; j < r; ++j)
            dist[static_cast<size_t>(i)][static_cast<size_t>(j)] =
                chamfer(generated[static_cast<size_t>(i)], reference[static_cast<size_t>(j)]);

    std::vector<bool> covered(static_cast<size_t>(r), false);
    for (int64_t i = 0; i < g; ++i) {
        int64_t best = 0;
        for (int64_t j = 1; j < r; ++j)
            if (dist[static_cast<size_t>(i)][static_cast<size_t>(j)] < dist[static_cast<size_t>(i)][static_cast<size_t>(best)])
                best = j;
        covered[static_cast<size_t>(best)] = true;
    }
    int64_t n_covered = 0;
    for (bool c : covered) n_covered += c ? 1 : 0;

    double mmd = 0.0;
    for (int64_t j = 0; j < r; ++j) {
        double best = std::numeric_limits<double>::infinity();
        for (int64_t i = 0; i < g; ++i) best = std::min(best, dist[static_cast<size_t>(i)][static_cast<size_t>(j)]);
        mmd += best;
    }
    return {static_cast<double>(n_covered) / static_cast<double>(r), mmd / static_cast<double>(r)};
}

CostReport cost_report(const mix::MnifConfig& cfg, int64_t queries_per_instance) {
    cfg.validate();
    const auto& s = cfg.siren;
    CostReport rep;
    rep.inference_params = siren::count_params(s);
    const int64_t per_basis = siren::count_params(s);
    int64_t head = 0;
    if (cfg.mode == mix::CoefficientMode::kLatentProjected)
        head = cfg.coefficient_len() * cfg.latent_dim + cfg.coefficient_len();
    else
        head = cfg.latent_len();  // bias only; the projection degenerates to identity
    rep.learnable_params = cfg.num_mixtures * per_basis + head;
    const int64_t macs_per_query =
        s.in_dim * s.hidden_width + s.hidden_depth * s.hidden_width * s.hidden_width + s.out_dim * s.hidden_width;
    rep.flops_per_instance = queries_per_instance * macs_per_query;
    rep.collapse_macs_per_instance = cfg.num_mixtures * per_basis;
    const int64_t widest = std::max<int64_t>({s.hidden_width, s.in_dim, s.out_dim});
    rep.peak_buffer_bytes = (rep.inference_params + 2 * queries_per_instance * widest) * 4;
    return rep;
}

double SimilarityMatrix::mean_off_diagonal() const {
    if (size < 2) return 0.0;
    double acc = 0.0;
    for (int64_t i = 0; i < size; ++i)
        for (int64_t j = 0; j < size; ++j)
            if (i != j) acc += at(i, j);
    return acc / static_cast<double>(size * (size - 1));
}

std::vector<SimilarityMatrix> basis_similarity(const mix::BasisBank& bank) {
    if (bank.num_mixtures < 2) throw ContractError("basis_similarity: need at least 2 mixtures");
    const int64_t m = bank.num_mixtures;
    std::vector<SimilarityMatrix> out;
    for (size_t layer = 0; layer < bank.weights.size(); ++layer) {
        const Tensor& stacked = bank.weights[layer];
        const int64_t p = stacked.cols();
        std::vector<double> norms(static_cast<size_t>(m));
        for (int64_t i = 0; i < m; ++i) {
            double n2 = 0.0;
            for (int64_t c = 0; c < p; ++c) n2 += static_cast<double>(stacked.at2(i, c)) * stacked.at2(i, c);
            norms[static_cast<size_t>(i)] = std::sqrt(n2);
        }
        SimilarityMatrix sim;
        sim.size = m;
        sim.abs_cosine.assign(static_cast<size_t>(m * m), 0.0f);
        for (int64_t i = 0; i < m; ++i) {
            if (norms[static_cast<size_t>(i)] == 0.0)
                sim.warnings.push_back("layer " + std::to_string(layer) + ": basis " + std::to_string(i) +
                                       " has zero-norm weights");
            for (int64_t j = i + 1; j < m; ++j) {
                double dot = 0.0;
                for (int64_t c = 0; c < p; ++c)
                    dot += static_cast<double>(stacked.at2(i, c)) * static_cast<double>(stacked.at2(j, c));
                const double denom = norms[static_cast<size_t>(i)] * norms[static_cast<size_t>(j)];
                const float v = denom > 0.0 ? static_cast<float>(std::abs(dot) / denom) : 0.0f;
                sim.abs_cosine[static_cast<size_t>(i * m + j)] = v;
                sim.abs_cosine[static_cast<size_t>(j * m + i)] = v;
            }
        }
        out.push_back(std::move(sim));
    }
    return out;
}

}  // namespace mnif::metrics
