#include "diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mnif::ddpm {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

void DiffusionConfig::validate() const {
    if (timesteps < 1) throw ContractError("timesteps must be >= 1");
    if (denoiser_width < 1 || denoiser_blocks < 1) throw ContractError("denoiser width and blocks must be >= 1");
    if (!(lr > 0.0f) || batch_size < 1 || epochs < 0) throw ContractError("invalid diffusion training config");
}

Schedule make_schedule(const DiffusionConfig& cfg) {
    cfg.validate();
    const int64_t T = cfg.timesteps;
    Schedule s;
    s.beta.resize(static_cast<size_t>(T));
    s.alpha_bar.resize(static_cast<size_t>(T));
    if (cfg.schedule == NoiseSchedule::kLinear) {
        const double b0 = 1e-4, b1 = 2e-2;
        for (int64_t t = 0; t < T; ++t)
            s.beta[static_cast<size_t>(t)] = T == 1 ? b0 : b0 + (b1 - b0) * static_cast<double>(t) / static_cast<double>(T - 1);
    } else {
        // abar(t) proportional to cos^2(((t/T + eps) / (1 + eps)) pi/2).
        const double eps = 0.008;
        auto f = [&](double t) {
            const double x = (t / static_cast<double>(T) + eps) / (1.0 + eps) * kPi / 2.0;
            const double c = std::cos(x);
            return c * c;
        };
        const double f0 = f(0.0);
        double prev = 1.0;
        for (int64_t t = 0; t < T; ++t) {
            const double abar = f(static_cast<double>(t + 1)) / f0;
            double beta = 1.0 - abar / prev;
            beta = std::min(beta, 0.999);
            s.beta[static_cast<size_t>(t)] = beta;
            prev = prev * (1.0 - beta);
        }
    }
    double abar = 1.0;
    for (int64_t t = 0; t < T; ++t) {
        abar *= 1.0 - s.beta[static_cast<size_t>(t)];
        s.alpha_bar[static_cast<size_t>(t)] = abar;
    }
    return s;
}

int64_t denoiser_param_count(int64_t latent_dim, int64_t width, int64_t blocks) {
    const int64_t in = width * latent_dim + width;
    const int64_t per_block = 3 * width * width + 2 * width;  // w1, temb_w, w2 plus two biases
    const int64_t out = latent_dim * width + latent_dim;
    return in + blocks * per_block + out;
}

int64_t DenoiserMlp::param_count() const {
    int64_t n = in_w.numel() + in_b.numel() + out_w.numel() + out_b.numel();
    for (const auto& blk : blocks)
        n += blk.w1.numel() + blk.b1.numel() + blk.temb_w.numel() + blk.w2.numel() + blk.b2.numel();
    return n;
}

namespace {

Tensor uniform_init(Shape shape, int64_t fan_in, Rng& rng) {
    Tensor t(std::move(shape));
    const float bound = 1.0f / std::sqrt(static_cast<float>(fan_in));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-bound, bound);
    return t;
}

// Sinusoidal embedding rows for the given timesteps, dimension = width.
Tensor timestep_embedding(const std::vector<int64_t>& t, int64_t width) {
    const int64_t half = width / 2;
    Tensor emb({static_cast<int64_t>(t.size()), width});
    for (size_t r = 0; r < t.size(); ++r) {
        for (int64_t i = 0; i < half; ++i) {
            const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(std::max<int64_t>(half, 1)));
            const double arg = static_cast<double>(t[r]) * freq;
            emb.at2(static_cast<int64_t>(r), 2 * i) = static_cast<float>(std::sin(arg));
            emb.at2(static_cast<int64_t>(r), 2 * i + 1) = static_cast<float>(std::cos(arg));
        }
        if (width % 2 == 1) emb.at2(static_cast<int64_t>(r), width - 1) = 0.0f;
    }
    return emb;
}

ad::Var silu(const ad::Var& x) { return ad::mul(x, ad::sigmoid(x)); }

ad::Var affine(const ad::Var& x, const ad::Var& w, const ad::Var& b) {
    return ad::add_rowvec(ad::matmul(x, ad::transpose(w)), b);
}

}  // namespace

DenoiserMlp init_denoiser(int64_t latent_dim, const DiffusionConfig& cfg, uint64_t seed) {
    cfg.validate();
    if (latent_dim < 1) throw ContractError("denoiser latent dimension must be >= 1");
    DenoiserMlp d;
    d.latent_dim = latent_dim;
    d.width = cfg.denoiser_width;
    Rng rng(seed);
    Rng r_in = rng.fork("in");
    d.in_w = uniform_init({d.width, latent_dim}, latent_dim, r_in);
    d.in_b = Tensor({d.width});
    Rng r_blocks = rng.fork("blocks");
    for (int64_t b = 0; b < cfg.denoiser_blocks; ++b) {
        Rng rb = r_blocks.fork(static_cast<uint64_t>(b));
        DenoiserMlp::Block blk;
        blk.w1 = uniform_init({d.width, d.width}, d.width, rb);
        blk.b1 = Tensor({d.width});
        blk.temb_w = uniform_init({d.width, d.width}, d.width, rb);
        // The residual branch starts at zero so an untrained model predicts
        // only through the input/output projections.
        blk.w2 = Tensor({d.width, d.width});
        blk.b2 = Tensor({d.width});
        d.blocks.push_back(std::move(blk));
    }
    Rng r_out = rng.fork("out");
    d.out_w = uniform_init({latent_dim, d.width}, d.width, r_out);
    d.out_b = Tensor({latent_dim});
    return d;
}

DenoiserVars to_vars(const DenoiserMlp& d, bool trainable) {
    auto wrap = [trainable](const Tensor& t) { return trainable ? ad::leaf(t) : ad::constant(t); };
    DenoiserVars v;
    v.in_w = wrap(d.in_w);
    v.in_b = wrap(d.in_b);
    for (const auto& blk : d.blocks)
        v.blocks.push_back({wrap(blk.w1), wrap(blk.b1), wrap(blk.temb_w), wrap(blk.w2), wrap(blk.b2)});
    v.out_w = wrap(d.out_w);
    v.out_b = wrap(d.out_b);
    return v;
}

std::vector<ad::Var> trainable_list(const DenoiserVars& d) {
    std::vector<ad::Var> out{d.in_w, d.in_b};
    for (const auto& blk : d.blocks) {
        out.push_back(blk.w1);
        out.push_back(blk.b1);
        out.push_back(blk.temb_w);
        out.push_back(blk.w2);
        out.push_back(blk.b2);
    }
    out.push_back(d.out_w);
    out.push_back(d.out_b);
    return out;
}

ad::Var denoise(const DenoiserVars& d, const ad::Var& x, const std::vector<int64_t>& t, int64_t timesteps) {
    if (x->value.rank() != 2) throw ShapeError("denoise: expected [batch x latent] input, got " + x->value.shape_string());
    if (static_cast<int64_t>(t.size()) != x->value.rows())
        throw ContractError("denoise: timestep count does not match batch size");
    for (int64_t ti : t)
        if (ti < 0 || ti >= timesteps)
            throw ContractError("denoise: timestep " + std::to_string(ti) + " outside [0," + std::to_string(timesteps) + ")");
    const int64_t width = d.in_w->value.rows();
    ad::Var emb = ad::constant(timestep_embedding(t, width));
    ad::Var h = affine(x, d.in_w, d.in_b);
    for (const auto& blk : d.blocks) {
        ad::Var cond = ad::add(affine(h, blk.w1, blk.b1), ad::matmul(emb, ad::transpose(blk.temb_w)));
        ad::Var u = silu(cond);
        h = ad::add(h, affine(u, blk.w2, blk.b2));
    }
    return affine(h, d.out_w, d.out_b);
}

Tensor denoise(const DenoiserMlp& d, const Tensor& x, const std::vector<int64_t>& t, int64_t timesteps) {
    return denoise(to_vars(d, false), ad::constant(x), t, timesteps)->value;
}

LatentStats compute_stats(const train::LatentTable& table) {
    if (table.rows.empty()) throw ContractError("latent table is empty");
    const int64_t n = table.size(), h = table.dim();
    LatentStats s{Tensor({h}), Tensor({h})};
    for (int64_t j = 0; j < h; ++j) {
        double mean = 0.0;
        for (const auto& row : table.rows) mean += row[j];
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (const auto& row : table.rows) var += (row[j] - mean) * (row[j] - mean);
        var /= static_cast<double>(n);
        s.mean[j] = static_cast<float>(mean);
        s.stddev[j] = static_cast<float>(std::max(std::sqrt(var), 1e-6));
    }
    return s;
}

Tensor standardize(const LatentStats& stats, const Tensor& phi) {
    check_same_shape(phi, stats.mean, "standardize");
    Tensor out(phi.shape());
    for (int64_t j = 0; j < phi.numel(); ++j) out[j] = (phi[j] - stats.mean[j]) / stats.stddev[j];
    return out;
}

Tensor destandardize(const LatentStats& stats, const Tensor& phi) {
    check_same_shape(phi, stats.mean, "destandardize");
    Tensor out(phi.shape());
    for (int64_t j = 0; j < phi.numel(); ++j) out[j] = phi[j] * stats.stddev[j] + stats.mean[j];
    return out;
}

Tensor forward_noise(const Tensor& phi0, int64_t t, const Tensor& noise, const Schedule& schedule) {
    check_same_shape(phi0, noise, "forward_noise");
    if (t < 0 || t >= static_cast<int64_t>(schedule.alpha_bar.size()))
        throw ContractError("forward_noise: timestep " + std::to_string(t) + " outside [0," +
                            std::to_string(schedule.alpha_bar.size()) + ")");
    const double abar = schedule.alpha_bar[static_cast<size_t>(t)];
    const float cs = static_cast<float>(std::sqrt(abar));
    const float cn = static_cast<float>(std::sqrt(1.0 - abar));
    Tensor out(phi0.shape());
    for (int64_t j = 0; j < phi0.numel(); ++j) out[j] = cs * phi0[j] + cn * noise[j];
    return out;
}

Stage2Result train_denoiser(const train::LatentTable& table, const DiffusionConfig& cfg, uint64_t seed,
                            const train::LogCallback& on_log) {
    cfg.validate();
    if (table.rows.empty()) throw ContractError("train_denoiser: latent table is empty");
    const int64_t n = table.size();
    const int64_t h = table.dim();

    Stage2Result res;
    res.stats = compute_stats(table);
    std::vector<Tensor> data;
    data.reserve(static_cast<size_t>(n));
    for (const auto& row : table.rows) data.push_back(standardize(res.stats, row));

    Rng root(seed);
    res.denoiser = init_denoiser(h, cfg, root.fork("denoiser-init").seed());
    Schedule schedule = make_schedule(cfg);

    std::vector<Tensor*> params;
    {
        DenoiserMlp& d = res.denoiser;
        params = {&d.in_w, &d.in_b};
        for (auto& blk : d.blocks) {
            params.push_back(&blk.w1);
            params.push_back(&blk.b1);
            params.push_back(&blk.temb_w);
            params.push_back(&blk.w2);
            params.push_back(&blk.b2);
        }
        params.push_back(&d.out_w);
        params.push_back(&d.out_b);
    }
    train::AdamConfig adam;
    train::AdamState state;
    state.init_like(params);

    const int64_t spe = (n + cfg.batch_size - 1) / cfg.batch_size;
    int64_t total_steps = cfg.epochs * spe;
    if (cfg.max_steps > 0) total_steps = std::min(total_steps, cfg.max_steps);

    Rng shuffle_rng = root.fork("shuffle");
    Rng noise_rng = root.fork("noise");
    Rng t_rng = root.fork("timesteps");

    int64_t step = 0;
    for (int64_t epoch = 0; step < total_steps; ++epoch) {
        std::vector<int64_t> order(static_cast<size_t>(n));
        std::iota(order.begin(), order.end(), 0);
        Rng ep = shuffle_rng.fork(static_cast<uint64_t>(epoch));
        for (int64_t i = n - 1; i > 0; --i) {
            const int64_t j = static_cast<int64_t>(ep.next_u64() % static_cast<uint64_t>(i + 1));
            std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(j)]);
        }
        double epoch_loss = 0.0;
        int64_t epoch_batches = 0;
        for (int64_t b = 0; b < spe && step < total_steps; ++b, ++step) {
            const int64_t lo = b * cfg.batch_size;
            const int64_t hi = std::min(lo + cfg.batch_size, n);
            const int64_t bs = hi - lo;

            Rng srng = noise_rng.fork(static_cast<uint64_t>(step));
            Rng trng = t_rng.fork(static_cast<uint64_t>(step));
            Tensor x({bs, h}), eps({bs, h});
            std::vector<int64_t> ts(static_cast<size_t>(bs));
            for (int64_t r = 0; r < bs; ++r) {
                const Tensor& phi0 = data[static_cast<size_t>(order[static_cast<size_t>(lo + r)])];
                const int64_t t = static_cast<int64_t>(trng.next_u64() % static_cast<uint64_t>(cfg.timesteps));
                ts[static_cast<size_t>(r)] = t;
                const double abar = schedule.alpha_bar[static_cast<size_t>(t)];
                const float cs = static_cast<float>(std::sqrt(abar));
                const float cn = static_cast<float>(std::sqrt(1.0 - abar));
                for (int64_t j = 0; j < h; ++j) {
                    const float e = srng.normal();
                    eps.at2(r, j) = e;
                    x.at2(r, j) = cs * phi0[j] + cn * e;
                }
            }

            DenoiserVars dvars = to_vars(res.denoiser, true);
            std::vector<ad::Var> leaves = trainable_list(dvars);
            ad::Var pred = denoise(dvars, ad::constant(x), ts, cfg.timesteps);
            ad::Var loss = ad::mse(pred, ad::constant(eps));
            const double lv = loss->value[0];
            if (!std::isfinite(lv)) throw DivergenceError("non-finite diffusion loss at step " + std::to_string(step));
            epoch_loss += lv;
            ++epoch_batches;

            std::vector<ad::Var> grads = ad::grad(loss, leaves);
            std::vector<const Tensor*> gptrs;
            for (const auto& g : grads) gptrs.push_back(&g->value);
            adam_step(adam, state, params, gptrs, cfg.lr);
            for (auto& g : grads) ad::release(std::move(g));
            ad::release(std::move(loss));
        }
        train::LogEntry entry{step, epoch, epoch_loss / static_cast<double>(std::max<int64_t>(epoch_batches, 1)), 0.0,
                              cfg.lr};
        res.log.push_back(entry);
        if (on_log) on_log(entry);
    }
    return res;
}

std::vector<Tensor> sample(const DenoiserMlp& denoiser, const LatentStats& stats, const DiffusionConfig& cfg,
                           int64_t count, uint64_t seed) {
    cfg.validate();
    if (count < 0) throw ContractError("sample: negative count");
    if (count == 0) return {};
    const int64_t h = denoiser.latent_dim;
    const int64_t T = cfg.timesteps;
    Schedule schedule = make_schedule(cfg);

    Rng root = Rng(seed).fork("chains");
    std::vector<Rng> chains;
    chains.reserve(static_cast<size_t>(count));
    for (int64_t c = 0; c < count; ++c) chains.push_back(root.fork(static_cast<uint64_t>(c)));

    Tensor x({count, h});
    for (int64_t c = 0; c < count; ++c)
        for (int64_t j = 0; j < h; ++j) x.at2(c, j) = chains[static_cast<size_t>(c)].normal();

    for (int64_t t = T - 1; t >= 0; --t) {
        std::vector<int64_t> ts(static_cast<size_t>(count), t);
        Tensor eps_hat = denoise(denoiser, x, ts, T);
        const double beta = schedule.beta[static_cast<size_t>(t)];
        const double abar = schedule.alpha_bar[static_cast<size_t>(t)];
        const double abar_prev = t > 0 ? schedule.alpha_bar[static_cast<size_t>(t - 1)] : 1.0;
        const double alpha = 1.0 - beta;
        const double coef = beta / std::sqrt(1.0 - abar);
        const double inv_sqrt_alpha = 1.0 / std::sqrt(alpha);
        const double sigma = t > 0 ? std::sqrt((1.0 - abar_prev) / (1.0 - abar) * beta) : 0.0;
        for (int64_t c = 0; c < count; ++c) {
            for (int64_t j = 0; j < h; ++j) {
                const double mu = inv_sqrt_alpha * (x.at2(c, j) - coef * eps_hat.at2(c, j));
                double next = mu;
                if (t > 0) next += sigma * chains[static_cast<size_t>(c)].normal();
                x.at2(c, j) = static_cast<float>(next);
            }
        }
    }

    std::vector<Tensor> out;
    out.reserve(static_cast<size_t>(count));
    for (int64_t c = 0; c < count; ++c) {
        Tensor row({h});
        for (int64_t j = 0; j < h; ++j) row[j] = x.at2(c, j);
        out.push_back(destandardize(stats, row));
    }
    return out;
}

InterpolationDraw sample_by_interpolation(const train::LatentTable& table, int64_t k_neighbors, Rng rng) {
    const int64_t n = table.size();
    if (n < 2) throw ContractError("sample_by_interpolation: table needs at least 2 rows");
    if (k_neighbors < 1) throw ContractError("sample_by_interpolation: k_neighbors must be >= 1");
    const int64_t i = static_cast<int64_t>(rng.next_u64() % static_cast<uint64_t>(n));

    std::vector<std::pair<double, int64_t>> dist;
    dist.reserve(static_cast<size_t>(n - 1));
    for (int64_t j = 0; j < n; ++j) {
        if (j == i) continue;
        double d2 = 0.0;
        const Tensor& a = table.rows[static_cast<size_t>(i)];
        const Tensor& b = table.rows[static_cast<size_t>(j)];
        for (int64_t c = 0; c < a.numel(); ++c) {
            const double d = a[c] - b[c];
            d2 += d * d;
        }
        dist.emplace_back(d2, j);
    }
    std::sort(dist.begin(), dist.end());
    const int64_t k = std::min<int64_t>(k_neighbors, static_cast<int64_t>(dist.size()));
    const int64_t pick = static_cast<int64_t>(rng.next_u64() % static_cast<uint64_t>(k));
    const int64_t j = dist[static_cast<size_t>(pick)].second;
    const float alpha = static_cast<float>(rng.uniform());

    const Tensor& a = table.rows[static_cast<size_t>(i)];
    const Tensor& b = table.rows[static_cast<size_t>(j)];
    Tensor phi(a.shape());
    for (int64_t c = 0; c < a.numel(); ++c) phi[c] = alpha * a[c] + (1.0f - alpha) * b[c];
    return {std::move(phi), i, j, alpha};
}

}  // namespace mnif::ddpm
