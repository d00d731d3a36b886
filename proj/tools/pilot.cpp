// Scratch calibration harness; not part of the shipped build.
#include <cmath>
#include <chrono>
#include <cstdio>
#include <cstring>

#include "fields.hpp"
#include "metrics.hpp"
#include "storage.hpp"
#include "trainers.hpp"

using namespace mnif;

static double now_s() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

// Appended: stage-2 sanity pilot (8-mode ring mixture in 2-D).
#include "diffusion.hpp"
#include "metrics.hpp"

namespace {
double energy_distance(const std::vector<mnif::Tensor>& xs, const std::vector<mnif::Tensor>& ys) {
    auto pair_term = [](const std::vector<mnif::Tensor>& a, const std::vector<mnif::Tensor>& b) {
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
        return acc / (static_cast<double>(a.size()) * b.size());
    };
    return 2.0 * pair_term(xs, ys) - pair_term(xs, xs) - pair_term(ys, ys);
}

std::vector<mnif::Tensor> gmm_draw(int64_t n, mnif::Rng& rng) {
    std::vector<mnif::Tensor> out;
    for (int64_t i = 0; i < n; ++i) {
        const int64_t mode = static_cast<int64_t>(rng.next_u64() % 8);
        const double theta = 2.0 * 3.14159265358979 * mode / 8.0;
        mnif::Tensor t({2});
        t[0] = static_cast<float>(2.0 * std::cos(theta) + 0.1 * rng.normal());
        t[1] = static_cast<float>(2.0 * std::sin(theta) + 0.1 * rng.normal());
        out.push_back(std::move(t));
    }
    return out;
}

int ddpm_pilot(int argc, char** argv) {
    using namespace mnif;
    const double t0 = now_s();
    ddpm::DiffusionConfig cfg;
    cfg.timesteps = argc > 2 ? std::stol(argv[2]) : 200;
    cfg.denoiser_width = argc > 3 ? std::stol(argv[3]) : 128;
    cfg.denoiser_blocks = argc > 4 ? std::stol(argv[4]) : 3;
    cfg.lr = 1e-3f;
    cfg.batch_size = 64;
    cfg.epochs = 1 << 20;
    cfg.max_steps = argc > 5 ? std::stol(argv[5]) : 3000;

    Rng data_rng(101);
    std::vector<Tensor> train_draw = gmm_draw(512, data_rng);
    std::vector<Tensor> held_out = gmm_draw(512, data_rng);
    train::LatentTable table;
    table.rows = train_draw;

    ddpm::Stage2Result res = ddpm::train_denoiser(table, cfg, 61, [&](const train::LogEntry& e) {
        if (e.epoch % 100 == 0) std::printf("[%6.1fs] step=%lld loss=%.4f\n", now_s() - t0, (long long)e.step, e.loss);
    });
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
    std::printf("ed_model=%.5f ed_normal=%.5f ratio=%.1f (%.1fs)\n", ed_model, ed_normal, ed_normal / ed_model,
                now_s() - t0);
    return 0;
}
}  // namespace

int main(int argc, char** argv) {
    const std::string mode = argc > 1 ? argv[1] : "meta";
    if (mode == "ddpm") return ddpm_pilot(argc, argv);
    const double t0 = now_s();

    if (mode == "meta") {
        io::DataConfig dc;
        dc.image_size = 16;
        io::SynthDataset synth = io::synth_dataset(io::SynthKind::kGradients, 64, 1, dc);
        fields::ImageDataset ds(synth.images);

        mix::MnifConfig cfg;
        cfg.siren = {2, 3, 32, 2};
        cfg.siren.w0 = argc > 7 ? std::stof(argv[7]) : 30.0f;
        cfg.num_mixtures = argc > 8 ? std::stol(argv[8]) : 16;
        cfg.latent_dim = 32;

        train::MetaTrainConfig tc;
        tc.inner_steps = 3;
        tc.inner_lr = argc > 2 ? std::stof(argv[2]) : 1.0f;
        tc.outer_lr = argc > 3 ? std::stof(argv[3]) : 1e-3f;
        tc.batch_size = argc > 4 ? std::stol(argv[4]) : 16;
        tc.second_order = argc <= 5 || std::strcmp(argv[5], "first") != 0;
        tc.max_steps = argc > 6 ? std::stol(argv[6]) : 2000;
        tc.epochs = 1000000;

        auto res = train::meta_train(ds, cfg, tc, 42, [&](const train::LogEntry& e) {
            if (e.epoch % 25 == 0)
                std::printf("[%7.1fs] %s\n", now_s() - t0, train::format_log_entry(e).c_str());
        });
        std::printf("final: %s  (%.1fs)\n", train::format_log_entry(res.log.back()).c_str(), now_s() - t0);
    } else if (mode == "autodec") {
        io::DataConfig dc;
        dc.voxel_res = 16;
        dc.surface_points = 0;  // dense-grid subsampling
        io::SynthDataset synth = io::synth_dataset(io::SynthKind::kSpheres3d, 8, 2, dc);
        fields::VoxelDataset ds(synth.voxels, argc > 4 ? std::stol(argv[4]) : 1024);

        mix::MnifConfig cfg;
        cfg.siren = {3, 1, 32, 2};
        cfg.num_mixtures = 16;
        cfg.latent_dim = 32;

        train::AutoDecodeConfig tc;
        tc.lr = argc > 2 ? std::stof(argv[2]) : 1e-3f;
        tc.batch_size = argc > 3 ? std::stol(argv[3]) : 8;
        tc.max_steps = argc > 5 ? std::stol(argv[5]) : 5000;
        tc.epochs = 1000000;
        tc.latent_weight_decay = 1e-4f;

        auto res = train::auto_decode_train(ds, cfg, tc, 42, [&](const train::LogEntry& e) {
            if (e.epoch % 200 == 0)
                std::printf("[%7.1fs] %s\n", now_s() - t0, train::format_log_entry(e).c_str());
        });
        std::printf("final: %s  (%.1fs)\n", train::format_log_entry(res.log.back()).c_str(), now_s() - t0);

        std::vector<double> mses = train::evaluate_latents(res.bank, res.head, cfg, ds, res.latents);
        double worst_iou = 1.0, mean_mse = 0.0;
        for (int64_t i = 0; i < ds.size(); ++i) {
            mean_mse += mses[static_cast<size_t>(i)];
            siren::SirenParams inr = mix::collapse(
                res.bank, cfg, mix::coefficients(res.head, cfg, res.latents.rows[static_cast<size_t>(i)]));
            fields::VoxelField vox = fields::voxelize(inr, cfg.siren, 16);
            worst_iou = std::min(worst_iou, fields::voxel_iou(vox, ds.voxel(i)));
        }
        std::printf("full-grid mse=%.5f worst IoU=%.3f (%.1fs)\n", mean_mse / ds.size(), worst_iou, now_s() - t0);
    }
    return 0;
}

