// Acceptance suite: one binary, one pass/fail line per criterion. Every
// tolerance is pinned in code; the exit status is the number of failures.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <vector>

#include "fields.hpp"
#include "metrics.hpp"
#include "runner.hpp"
#include "storage.hpp"
#include "trainers.hpp"

using namespace mnif;

namespace {

double now_s() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

struct Criterion {
    const char* name;
    std::function<bool(std::string&)> body;
};

Tensor random_tensor(Shape shape, Rng& rng, float lo = -1.0f, float hi = 1.0f) {
    Tensor t(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io::IoError("missing " + path);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

std::string workdir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("mnif_acceptance_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir.string();
}

// ---- criterion 1 ---------------------------------------------------------

// Literal per-basis evaluation of the mixture in double precision.
std::vector<double> naive_mixture(const mix::BasisBank& bank, const mix::MnifConfig& cfg, const Tensor& alpha,
                                  const Tensor& coords) {
    const int64_t layers = cfg.siren.num_layers();
    const int64_t m = cfg.num_mixtures;
    const int64_t n = coords.rows();
    std::vector<std::vector<double>> h(static_cast<size_t>(n));
    for (int64_t r = 0; r < n; ++r)
        for (int64_t c = 0; c < cfg.siren.in_dim; ++c) h[static_cast<size_t>(r)].push_back(coords.at2(r, c));
    for (int64_t layer = 0; layer < layers; ++layer) {
        const int64_t in = (layer == 0) ? cfg.siren.in_dim : cfg.siren.hidden_width;
        const int64_t out = (layer == layers - 1) ? cfg.siren.out_dim : cfg.siren.hidden_width;
        const Tensor& sw = bank.weights[static_cast<size_t>(layer)];
        const Tensor& sb = bank.biases[static_cast<size_t>(layer)];
        for (int64_t r = 0; r < n; ++r) {
            std::vector<double> next(static_cast<size_t>(out), 0.0);
            for (int64_t mi = 0; mi < m; ++mi) {
                const double a = alpha[layer * m + mi];
                for (int64_t o = 0; o < out; ++o) {
                    double acc = sb.at2(mi, o);
                    for (int64_t i = 0; i < in; ++i)
                        acc += static_cast<double>(sw.at2(mi, o * in + i)) * h[static_cast<size_t>(r)][static_cast<size_t>(i)];
                    next[static_cast<size_t>(o)] += a * acc;
                }
            }
            if (layer < layers - 1)
                for (auto& v : next) v = std::sin(static_cast<double>(cfg.siren.w0) * v);
            h[static_cast<size_t>(r)] = std::move(next);
        }
    }
    std::vector<double> flat;
    for (const auto& row : h)
        for (double v : row) flat.push_back(v);
    return flat;
}

bool criterion_collapse_equivalence(std::string& detail) {
    const double t0 = now_s();
    Rng rng(1001);
    double worst = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        mix::MnifConfig cfg;
        cfg.siren = {2, 2, static_cast<int64_t>(2 + rng.next_u64() % 15), static_cast<int64_t>(rng.next_u64() % 3)};
        cfg.siren.w0 = rng.uniform(2.0f, 30.0f);
        cfg.num_mixtures = static_cast<int64_t>(1 + rng.next_u64() % 8);
        cfg.latent_dim = 4;
        auto [bank, head] = mix::init_mnif(cfg, 5000 + static_cast<uint64_t>(trial));
        Tensor phi = random_tensor({4}, rng);
        Tensor coords = random_tensor({4, 2}, rng);
        Tensor alpha = mix::coefficients(head, cfg, phi);
        Tensor got = mix::mixture_forward(bank, head, cfg, phi, coords);
        std::vector<double> want = naive_mixture(bank, cfg, alpha, coords);
        for (int64_t i = 0; i < got.numel(); ++i) {
            const double err = std::abs(got[i] - want[static_cast<size_t>(i)]) /
                               (1.0 + std::abs(want[static_cast<size_t>(i)]));
            worst = std::max(worst, err);
        }
    }
    const double dt = now_s() - t0;
    char buf[128];
    std::snprintf(buf, sizeof(buf), "max rel err %.3g (tol 1e-5), %.2fs (limit 5s)", worst, dt);
    detail = buf;
    return worst <= 1e-5 && dt < 5.0;
}

// ---- criterion 2 ---------------------------------------------------------

double max_fd_error(const std::vector<Tensor>& params,
                    const std::function<ad::Var(const std::vector<ad::Var>&)>& build) {
    std::vector<ad::Var> leaves;
    for (const auto& p : params) leaves.push_back(ad::leaf(p));
    ad::Var loss = build(leaves);
    std::vector<ad::Var> grads = ad::grad(loss, leaves);
    auto eval = [&](const std::vector<Tensor>& values) {
        std::vector<ad::Var> l;
        for (const auto& v : values) l.push_back(ad::leaf(v));
        return static_cast<double>(build(l)->value[0]);
    };
    double worst = 0.0;
    const double h = 1e-3;
    for (size_t i = 0; i < params.size(); ++i)
        for (int64_t j = 0; j < params[i].numel(); ++j) {
            std::vector<Tensor> plus = params, minus = params;
            plus[i][j] += static_cast<float>(h);
            minus[i][j] -= static_cast<float>(h);
            const double fd = (eval(plus) - eval(minus)) / (2.0 * h);
            const double got = grads[i]->value[j];
            worst = std::max(worst, std::abs(got - fd) / std::max(1.0, std::abs(fd)));
        }
    return worst;
}

double quadratic_outer_grad(double theta, double phi0, double eps, int n_inner) {
    double phi = phi0, dphi = 0.0;
    for (int n = 0; n < n_inner; ++n) {
        const double resid = theta * phi - 1.0;
        const double new_dphi = dphi - eps * (2.0 * resid + 2.0 * theta * (phi + theta * dphi));
        phi = phi - eps * 2.0 * theta * resid;
        dphi = new_dphi;
    }
    return 2.0 * (theta * phi - 1.0) * (phi + theta * dphi);
}

bool criterion_gradients(std::string& detail) {
    const double t0 = now_s();

    // First-order gradients of the mixture forward pass.
    mix::MnifConfig cfg;
    cfg.siren = {2, 2, 4, 1};
    cfg.siren.w0 = 3.0f;
    cfg.num_mixtures = 2;
    cfg.latent_dim = 3;
    auto [bank, head] = mix::init_mnif(cfg, 77);
    Rng rng(78);
    Tensor coords = random_tensor({5, 2}, rng);
    Tensor phi = random_tensor({3}, rng);
    std::vector<Tensor> params;
    for (const auto& w : bank.weights) params.push_back(w);
    for (const auto& b : bank.biases) params.push_back(b);
    params.push_back(head.projection);
    params.push_back(head.bias);
    params.push_back(phi);
    const size_t layers = bank.weights.size();
    const double mix_err = max_fd_error(params, [&](const std::vector<ad::Var>& vars) {
        mix::BankVars bv;
        for (size_t i = 0; i < layers; ++i) bv.weights.push_back(vars[i]);
        for (size_t i = 0; i < layers; ++i) bv.biases.push_back(vars[layers + i]);
        mix::HeadVars hv{vars[2 * layers], vars[2 * layers + 1]};
        return ad::sum(mix::mixture_forward(bv, hv, cfg, vars[2 * layers + 2], ad::constant(coords)));
    });

    // First-order gradients of the volume renderer.
    siren::SirenConfig rcfg{3, 4, 6, 0};
    rcfg.w0 = 2.0f;
    rcfg.output_activation = siren::OutputActivation::kRgbDensity;
    siren::SirenParams rparams = siren::init_siren(rcfg, 37);
    rparams.biases.back()[3] = 0.5f;
    fields::RayBatch rays;
    rays.origins = Tensor({1, 3}, {0.0f, 0.0f, 1.5f});
    rays.directions = Tensor({1, 3}, {0.0f, 0.0f, -1.0f});
    rays.tnear = 0.5f;
    rays.tfar = 2.5f;
    Tensor depths({1, 2}, {0.8f, 1.9f});
    std::vector<Tensor> rp;
    for (const auto& w : rparams.weights) rp.push_back(w);
    for (const auto& b : rparams.biases) rp.push_back(b);
    const double render_err = max_fd_error(rp, [&](const std::vector<ad::Var>& vars) {
        siren::SirenVars sv;
        const size_t nl = rparams.weights.size();
        for (size_t i = 0; i < nl; ++i) sv.weights.push_back(vars[i]);
        for (size_t i = 0; i < nl; ++i) sv.biases.push_back(vars[nl + i]);
        return ad::sum(fields::render_rays(sv, rcfg, rays, depths));
    });

    // Second-order gradients through unrolled inner updates.
    double quad_err = 0.0;
    for (int n_inner = 1; n_inner <= 3; ++n_inner) {
        ad::Var theta = ad::leaf(Tensor::scalar(1.3f));
        ad::Var p = ad::leaf(Tensor::scalar(0.4f));
        for (int n = 0; n < n_inner; ++n) {
            ad::Var resid = ad::add_scalar(ad::mul(theta, p), -1.0f);
            ad::Var g = ad::grad(ad::mul(resid, resid), {p})[0];
            p = ad::sub(p, ad::scale(g, 0.1f));
        }
        ad::Var resid = ad::add_scalar(ad::mul(theta, p), -1.0f);
        const double got = ad::grad(ad::mul(resid, resid), {theta})[0]->value[0];
        quad_err = std::max(quad_err, std::abs(got - quadratic_outer_grad(1.3, 0.4, 0.1, n_inner)));
    }

    const double dt = now_s() - t0;
    char buf[160];
    std::snprintf(buf, sizeof(buf), "mixture fd %.3g (1e-4), render fd %.3g (1e-3), quad %.3g (1e-6), %.1fs (30s)",
                  mix_err, render_err, quad_err, dt);
    detail = buf;
    return mix_err <= 1e-4 && render_err <= 1e-3 && quad_err <= 1e-6 && dt < 30.0;
}

// ---- criterion 3 ---------------------------------------------------------

bool criterion_siren_init(std::string& detail) {
    Rng rng(31);
    double lo = 1e9, hi = -1e9;
    for (int64_t width : {32, 64, 128}) {
        siren::SirenConfig cfg{2, 3, width, 4};
        siren::SirenParams p = siren::init_siren(cfg, 4000 + static_cast<uint64_t>(width));
        Tensor coords = random_tensor({10000, 2}, rng);
        for (double s : siren::hidden_preactivation_stds(p, cfg, coords)) {
            lo = std::min(lo, s);
            hi = std::max(hi, s);
        }
    }
    char buf[96];
    std::snprintf(buf, sizeof(buf), "hidden sine-input std in [%.3f, %.3f] (need [0.8, 1.2])", lo, hi);
    detail = buf;
    return lo >= 0.8 && hi <= 1.2;
}

// ---- criterion 4 ---------------------------------------------------------

bool criterion_cost_accounting(std::string& detail) {
    mix::MnifConfig img;
    img.siren = {2, 3, 64, 4};
    img.num_mixtures = 256;
    img.latent_dim = 1024;
    const double gflops = static_cast<double>(metrics::cost_report(img, 4096).flops_per_instance) / 1e9;

    mix::MnifConfig nerf;
    nerf.siren = {3, 4, 64, 4};
    nerf.num_mixtures = 256;
    nerf.latent_dim = 128;
    const int64_t params = metrics::cost_report(nerf, 1).inference_params;

    bool invariant = true;
    metrics::CostReport base;
    for (int64_t m : {1, 16, 256}) {
        mix::MnifConfig cfg = img;
        cfg.num_mixtures = m;
        metrics::CostReport rep = metrics::cost_report(cfg, 4096);
        if (m == 1)
            base = rep;
        else
            invariant = invariant && rep.flops_per_instance == base.flops_per_instance &&
                        rep.inference_params == base.inference_params;
    }

    char buf[160];
    std::snprintf(buf, sizeof(buf), "%.4f GFLOPs vs 0.069 +-2%%; %lld params vs 17.2K +-1%%; M-invariant: %s",
                  gflops, static_cast<long long>(params), invariant ? "yes" : "no");
    detail = buf;
    return std::abs(gflops - 0.069) / 0.069 <= 0.02 && std::abs(params - 17200.0) / 17200.0 <= 0.01 && invariant;
}

// ---- criteria 5 and 7 ----------------------------------------------------

struct DeskMetaRun {
    double psnr = 0.0;
    int64_t steps = 0;
    double seconds = 0.0;
};

DeskMetaRun desk_meta(bool second_order, int64_t mixtures) {
    io::DataConfig dc;
    dc.image_size = 16;
    io::SynthDataset synth = io::synth_dataset(io::SynthKind::kGradients, 64, 1, dc);
    fields::ImageDataset ds(synth.images);

    mix::MnifConfig cfg;
    cfg.siren = {2, 3, 32, 2};
    cfg.siren.w0 = 10.0f;
    cfg.num_mixtures = mixtures;
    cfg.latent_dim = 32;

    train::MetaTrainConfig tc;
    tc.inner_steps = 3;
    tc.inner_lr = 0.1f;
    tc.outer_lr = 3e-3f;
    tc.batch_size = 8;
    tc.second_order = second_order;
    tc.epochs = 1 << 20;
    tc.max_steps = 600;

    const double t0 = now_s();
    train::Stage1Result res = train::meta_train(ds, cfg, tc, 42);
    return {res.log.back().psnr, res.log.back().step, now_s() - t0};
}

DeskMetaRun g_meta_m16;  // shared between criteria 5 and 7

bool criterion_desk_meta(std::string& detail) {
    g_meta_m16 = desk_meta(true, 16);
    DeskMetaRun first = desk_meta(false, 16);
    char buf[200];
    std::snprintf(buf, sizeof(buf),
                  "second-order %.2f dB @%lld steps in %.0fs (need >=30 within 2000, <600s); first-order %.2f dB",
                  g_meta_m16.psnr, static_cast<long long>(g_meta_m16.steps), g_meta_m16.seconds, first.psnr);
    detail = buf;
    return g_meta_m16.psnr >= 30.0 && g_meta_m16.steps <= 2000 && g_meta_m16.seconds < 600.0 &&
           g_meta_m16.psnr >= first.psnr;
}

bool criterion_capacity(std::string& detail) {
    DeskMetaRun m4 = desk_meta(true, 4);
    char buf[128];
    std::snprintf(buf, sizeof(buf), "PSNR(M=16)=%.2f dB, PSNR(M=4)=%.2f dB (allow 0.5 dB slack)", g_meta_m16.psnr,
                  m4.psnr);
    detail = buf;
    return g_meta_m16.psnr >= m4.psnr - 0.5;
}

// ---- criterion 6 ---------------------------------------------------------

bool criterion_desk_autodec(std::string& detail) {
    io::DataConfig dc;
    dc.voxel_res = 16;
    dc.surface_points = 0;  // dense-grid subsampling
    io::SynthDataset synth = io::synth_dataset(io::SynthKind::kSpheres3d, 8, 2, dc);
    fields::VoxelDataset ds(synth.voxels, 512);

    mix::MnifConfig cfg;
    cfg.siren = {3, 1, 32, 2};
    cfg.siren.w0 = 10.0f;
    cfg.num_mixtures = 16;
    cfg.latent_dim = 32;

    train::AutoDecodeConfig tc;
    tc.lr = 3e-3f;
    tc.batch_size = 8;
    tc.epochs = 1 << 20;
    tc.max_steps = 1500;
    tc.latent_weight_decay = 1e-4f;

    train::Stage1Result res = train::auto_decode_train(ds, cfg, tc, 42);
    const double train_mse = res.log.back().loss;

    double worst_iou = 1.0;
    for (int64_t i = 0; i < ds.size(); ++i) {
        siren::SirenParams inr = mix::collapse(
            res.bank, cfg, mix::coefficients(res.head, cfg, res.latents.rows[static_cast<size_t>(i)]));
        worst_iou = std::min(worst_iou, fields::voxel_iou(fields::voxelize(inr, cfg.siren, 16), ds.voxel(i)));
    }
    char buf[160];
    std::snprintf(buf, sizeof(buf), "train mse %.2g @%lld steps (need <=0.01 within 5000); worst IoU %.3f (need >=0.9)",
                  train_mse, static_cast<long long>(res.log.back().step), worst_iou);
    detail = buf;
    return train_mse <= 0.01 && res.log.back().step <= 5000 && worst_iou >= 0.9;
}

// ---- criterion 8 ---------------------------------------------------------

double energy_distance(const std::vector<Tensor>& xs, const std::vector<Tensor>& ys) {
    auto pair_term = [](const std::vector<Tensor>& a, const std::vector<Tensor>& b) {
        double acc = 0.0;
        for (const auto& x : a)
            for (const auto& y : b) {
                double d2 = 0.0;
                for (int64_t j = 0; j < x.numel(); ++j) {
                    const double d = x[j] - y[j];
                    d2 += d * d;
                }
                acc += std::sqrt(d2);
            }
        return acc / (static_cast<double>(a.size()) * static_cast<double>(b.size()));
    };
    return 2.0 * pair_term(xs, ys) - pair_term(xs, xs) - pair_term(ys, ys);
}

std::vector<Tensor> gmm_draw(int64_t n, Rng& rng) {
    std::vector<Tensor> out;
    for (int64_t i = 0; i < n; ++i) {
        const int64_t mode = static_cast<int64_t>(rng.next_u64() % 8);
        const double theta = 2.0 * 3.14159265358979323846 * static_cast<double>(mode) / 8.0;
        Tensor t({2});
        t[0] = static_cast<float>(2.0 * std::cos(theta) + 0.1 * rng.normal());
        t[1] = static_cast<float>(2.0 * std::sin(theta) + 0.1 * rng.normal());
        out.push_back(std::move(t));
    }
    return out;
}

bool criterion_stage2(std::string& detail) {
    ddpm::DiffusionConfig cfg;
    cfg.timesteps = 200;
    cfg.schedule = ddpm::NoiseSchedule::kCosine;
    cfg.denoiser_width = 128;
    cfg.denoiser_blocks = 3;
    cfg.lr = 1e-3f;
    cfg.batch_size = 64;
    cfg.epochs = 1 << 20;
    cfg.max_steps = 5000;

    Rng data_rng(101);
    train::LatentTable table;
    table.rows = gmm_draw(512, data_rng);
    std::vector<Tensor> held_out = gmm_draw(512, data_rng);

    ddpm::Stage2Result res = ddpm::train_denoiser(table, cfg, 61);
    std::vector<Tensor> samples = ddpm::sample(res.denoiser, res.stats, cfg, 512, 77);

    Rng base_rng(303);
    std::vector<Tensor> normal_baseline;
    for (int i = 0; i < 512; ++i) {
        Tensor t({2});
        t[0] = base_rng.normal();
        t[1] = base_rng.normal();
        normal_baseline.push_back(std::move(t));
    }
    const double ed_model = energy_distance(samples, held_out);
    const double ed_normal = energy_distance(normal_baseline, held_out);

    // Forward-process Monte-Carlo moments against the closed form.
    ddpm::Schedule schedule = ddpm::make_schedule(cfg);
    Tensor phi({2}, {0.8f, -1.2f});
    Rng mc_rng(11);
    double worst_moment = 0.0;
    for (int64_t t : {0L, 99L, 199L}) {
        const int64_t draws = 100000;
        double mean[2] = {0, 0}, sq[2] = {0, 0};
        for (int64_t i = 0; i < draws; ++i) {
            Tensor noise({2}, {mc_rng.normal(), mc_rng.normal()});
            Tensor x = ddpm::forward_noise(phi, t, noise, schedule);
            for (int64_t j = 0; j < 2; ++j) {
                mean[j] += x[j];
                sq[j] += x[j] * x[j];
            }
        }
        const double abar = schedule.alpha_bar[static_cast<size_t>(t)];
        for (int64_t j = 0; j < 2; ++j) {
            const double m = mean[j] / draws;
            const double var = sq[j] / draws - m * m;
            worst_moment = std::max(worst_moment, std::abs(m - std::sqrt(abar) * phi[j]));
            worst_moment = std::max(worst_moment, std::abs(var - (1.0 - abar)));
        }
    }

    char buf[160];
    std::snprintf(buf, sizeof(buf), "energy dist %.4f vs normal baseline %.4f (x%.1f, need >=5x); MC moments %.3g (1e-2)",
                  ed_model, ed_normal, ed_normal / ed_model, worst_moment);
    detail = buf;
    return ed_model * 5.0 <= ed_normal && worst_moment <= 1e-2;
}

// ---- criterion 9 ---------------------------------------------------------

bool criterion_rendering(std::string& detail) {
    // Two-sample closed form.
    const float s1 = 1.7f, s2 = 0.4f, d1 = 0.35f, d2 = 0.85f;
    Tensor rgb({2, 3}, {0.9f, 0.2f, 0.1f, 0.3f, 0.5f, 0.7f});
    Tensor density({1, 2}, {s1, s2});
    Tensor deltas({1, 2}, {d1, d2});
    ad::Var pixel = fields::composite(ad::constant(rgb), ad::constant(density), deltas);
    const double a1 = 1.0 - std::exp(-static_cast<double>(s1) * d1);
    const double a2 = 1.0 - std::exp(-static_cast<double>(s2) * d2);
    double closed_err = 0.0;
    for (int64_t c = 0; c < 3; ++c) {
        const double want = rgb.at2(0, c) * a1 + rgb.at2(1, c) * (1.0 - a1) * a2;
        closed_err = std::max(closed_err, std::abs(pixel->value.at2(0, c) - want));
    }

    // Zero density renders black.
    Rng rng(9);
    Tensor any_rgb = random_tensor({4 * 8, 3}, rng, 0.0f, 1.0f);
    ad::Var black =
        fields::composite(ad::constant(any_rgb), ad::constant(Tensor({4, 8})), Tensor::full({4, 8}, 0.3f));
    bool exactly_black = black->value == Tensor({4, 3});

    // Weight bounds over 1e5 random rays.
    bool bounded = true;
    for (int batch = 0; batch < 100 && bounded; ++batch) {
        Tensor dens = random_tensor({1000, 8}, rng, 0.0f, 8.0f);
        Tensor dels = random_tensor({1000, 8}, rng, 0.005f, 0.6f);
        Tensor weights = fields::composite_weights(dens, dels);
        for (int64_t i = 0; i < 1000 && bounded; ++i) {
            double acc = 0.0;
            for (int64_t s = 0; s < 8; ++s) {
                if (weights.at2(i, s) < 0.0f) bounded = false;
                acc += weights.at2(i, s);
            }
            if (acc > 1.0 + 1e-6) bounded = false;
        }
    }

    char buf[140];
    std::snprintf(buf, sizeof(buf), "closed-form err %.2g (1e-6); zero-density black: %s; sum w<=1 on 1e5 rays: %s",
                  closed_err, exactly_black ? "yes" : "no", bounded ? "yes" : "no");
    detail = buf;
    return closed_err <= 1e-6 && exactly_black && bounded;
}

// ---- criterion 10 --------------------------------------------------------

bool criterion_persistence(std::string& detail) {
    const std::string dir = workdir("persistence");

    io::Checkpoint ckpt;
    ckpt.config = io::default_config();
    ckpt.config.model.siren = {2, 3, 8, 1};
    ckpt.config.model.num_mixtures = 3;
    ckpt.config.model.latent_dim = 6;
    auto [bank, head] = mix::init_mnif(ckpt.config.model, 9);
    ckpt.bank = std::move(bank);
    ckpt.head = std::move(head);
    Rng rng(5);
    train::LatentTable table;
    for (int i = 0; i < 4; ++i) table.rows.push_back(random_tensor({6}, rng));
    ckpt.latents = std::move(table);

    const std::string p1 = dir + "/a.mnif", p2 = dir + "/b.mnif";
    io::save_checkpoint(p1, ckpt);
    io::save_checkpoint(p2, io::load_checkpoint(p1));
    const bool ckpt_roundtrip = slurp(p1) == slurp(p2);

    // Image and voxel interchange round trips.
    io::DataConfig dc;
    dc.image_size = 9;
    dc.voxel_res = 8;
    dc.surface_points = 0;
    io::SynthDataset imgs = io::synth_dataset(io::SynthKind::kGaussians2d, 1, 3, dc);
    io::write_image(dir + "/img.ppm", imgs.images[0]);
    io::write_image(dir + "/img2.ppm", io::read_image(dir + "/img.ppm"));
    const bool img_roundtrip = slurp(dir + "/img.ppm") == slurp(dir + "/img2.ppm");

    io::SynthDataset voxes = io::synth_dataset(io::SynthKind::kSpheres3d, 1, 4, dc);
    io::write_voxel(dir + "/v.vox", voxes.voxels[0]);
    io::write_voxel(dir + "/v2.vox", io::read_voxel(dir + "/v.vox"));
    const bool vox_roundtrip = slurp(dir + "/v.vox") == slurp(dir + "/v2.vox");

    // Fault injection: flipping any byte must be detected.
    const std::string pristine = slurp(p1);
    int64_t injected = 0, detected = 0;
    for (size_t pos = 0; pos < pristine.size(); pos += 13) {
        std::string corrupt = pristine;
        corrupt[pos] = static_cast<char>(corrupt[pos] ^ 0xA5);
        {
            std::ofstream out(p2, std::ios::binary | std::ios::trunc);
            out.write(corrupt.data(), static_cast<std::streamsize>(corrupt.size()));
        }
        ++injected;
        try {
            (void)io::load_checkpoint(p2);
        } catch (const io::FormatError&) {
            ++detected;
        }
    }

    char buf[160];
    std::snprintf(buf, sizeof(buf), "round trips ckpt/img/vox: %s/%s/%s; corruption detected %lld/%lld",
                  ckpt_roundtrip ? "ok" : "FAIL", img_roundtrip ? "ok" : "FAIL", vox_roundtrip ? "ok" : "FAIL",
                  static_cast<long long>(detected), static_cast<long long>(injected));
    detail = buf;
    std::filesystem::remove_all(dir);
    return ckpt_roundtrip && img_roundtrip && vox_roundtrip && detected == injected;
}

// ---- criterion 11 --------------------------------------------------------

bool criterion_determinism(std::string& detail) {
    auto pipeline = [&](const std::string& root) {
        io::RunConfig cfg;
        cfg.data.domain = io::Domain::kImage;
        cfg.data.synth = io::SynthKind::kGradients;
        cfg.data.count = 6;
        cfg.data.image_size = 8;
        cfg.model.siren = {2, 3, 16, 2};
        cfg.model.siren.w0 = 10.0f;
        cfg.model.num_mixtures = 4;
        cfg.model.latent_dim = 16;
        cfg.method = io::Method::kMeta;
        cfg.meta.batch_size = 4;
        cfg.meta.outer_lr = 3e-3f;
        cfg.meta.inner_lr = 0.1f;
        cfg.meta.epochs = 1 << 20;
        cfg.meta.max_steps = 60;
        cfg.diffusion.timesteps = 30;
        cfg.diffusion.denoiser_width = 16;
        cfg.diffusion.denoiser_blocks = 1;
        cfg.diffusion.epochs = 1 << 20;
        cfg.diffusion.max_steps = 60;
        cfg.seed = 2024;
        run::train_stage1(cfg, root + "/s1");
        run::train_stage2(cfg, root + "/s1/stage1.mnif", root + "/s2");
        io::Checkpoint ckpt = io::load_checkpoint(root + "/s2/stage2.mnif");
        run::sample(ckpt, "ddpm", 4, 5, root + "/samples");
    };

    const std::string a = workdir("det_a"), b = workdir("det_b");
    pipeline(a);
    pipeline(b);

    const std::vector<std::string> files{
        "/s1/stage1.mnif", "/s1/train.log",  "/s1/config.json",      "/s2/stage2.mnif",
        "/s2/train.log",   "/samples/sample_000.ppm", "/samples/sample_001.ppm",
        "/samples/sample_002.ppm", "/samples/sample_003.ppm", "/samples/contact_sheet.ppm"};
    int64_t matched = 0;
    for (const auto& f : files)
        if (slurp(a + f) == slurp(b + f)) ++matched;

    char buf[96];
    std::snprintf(buf, sizeof(buf), "%lld/%zu pipeline output files byte-identical", static_cast<long long>(matched),
                  files.size());
    detail = buf;
    std::filesystem::remove_all(a);
    std::filesystem::remove_all(b);
    return matched == static_cast<int64_t>(files.size());
}

}  // namespace

int main() {
    const std::vector<Criterion> criteria{
        {"1. collapse equivalence over 1000 random mixtures", criterion_collapse_equivalence},
        {"2. gradient correctness (first-order fd, render fd, second-order quadratic)", criterion_gradients},
        {"3. sine-input spread at init for W in {32,64,128}", criterion_siren_init},
        {"4. cost accounting vs published figures and M-invariance", criterion_cost_accounting},
        {"5. desk-scale meta-learning reaches 30 dB; second-order beats first-order", criterion_desk_meta},
        {"6. desk-scale auto-decoding fits sphere voxels (mse, IoU)", criterion_desk_autodec},
        {"7. capacity direction: M=16 not worse than M=4", criterion_capacity},
        {"8. latent diffusion recovers an 8-mode mixture; forward moments", criterion_stage2},
        {"9. volume rendering: closed form, empty space, weight bounds", criterion_rendering},
        {"10. persistence round trips and checksum fault detection", criterion_persistence},
        {"11. end-to-end determinism of train->train->sample", criterion_determinism},
    };

    int failures = 0;
    for (const auto& c : criteria) {
        std::string detail;
        bool ok = false;
        try {
            ok = c.body(detail);
        } catch (const std::exception& e) {
            detail = std::string("exception: ") + e.what();
        }
        std::printf("[%s] %s  --  %s\n", ok ? "PASS" : "FAIL", c.name, detail.c_str());
        std::fflush(stdout);
        failures += ok ? 0 : 1;
    }
    std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
    return failures;
}
