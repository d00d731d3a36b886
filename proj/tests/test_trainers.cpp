#include <doctest.h>

#include <cmath>

#include "fields.hpp"
#include "storage.hpp"
#include "test_helpers.hpp"
#include "trainers.hpp"

using namespace mnif;
using testing::random_tensor;

namespace {

fields::ImageDataset tiny_images(int64_t count, int64_t size, uint64_t seed) {
    io::DataConfig dc;
    dc.image_size = size;
    io::SynthDataset synth = io::synth_dataset(io::SynthKind::kGradients, count, seed, dc);
    return fields::ImageDataset(synth.images);
}

mix::MnifConfig tiny_model() {
    mix::MnifConfig cfg;
    cfg.siren = {2, 3, 16, 2};
    cfg.siren.w0 = 10.0f;
    cfg.num_mixtures = 4;
    cfg.latent_dim = 16;
    return cfg;
}

train::MetaTrainConfig fast_meta(int64_t steps) {
    train::MetaTrainConfig tc;
    tc.inner_steps = 2;
    tc.inner_lr = 0.1f;
    tc.outer_lr = 3e-3f;
    tc.batch_size = 4;
    tc.epochs = 1 << 20;
    tc.max_steps = steps;
    return tc;
}

// A bank whose collapsed prediction is exactly linear in the latent: the
// input layer is zeroed so the pre-sine state is 0 everywhere and only the
// output layer's coefficient slice matters.
std::pair<mix::BasisBank, mix::CoefficientHead> affine_in_phi_model(mix::MnifConfig& cfg) {
    cfg = mix::MnifConfig{};
    cfg.siren = {1, 1, 1, 0};
    cfg.num_mixtures = 1;
    cfg.latent_dim = 1;
    auto [bank, head] = mix::init_mnif(cfg, 2);
    for (auto& w : bank.weights)
        for (int64_t j = 0; j < w.numel(); ++j) w[j] = 0.0f;
    for (auto& b : bank.biases)
        for (int64_t j = 0; j < b.numel(); ++j) b[j] = 0.0f;
    bank.biases[1].at2(0, 0) = 2.0f;           // output bias basis value
    head.projection.at2(1, 0) = 0.5f;          // alpha_out = 0.5 phi + bias
    head.projection.at2(0, 0) = 0.0f;
    head.bias[0] = 1.0f;
    head.bias[1] = 0.25f;
    return {std::move(bank), std::move(head)};
}

}  // namespace

TEST_CASE("reconstruction_loss examples and oracle") {
    Rng rng(3);
    Tensor a = random_tensor({7, 3}, rng);
    CHECK(train::reconstruction_loss(a, a) == 0.0);

    Tensor b = a;
    for (int64_t i = 0; i < b.numel(); ++i) b[i] += 0.1f;
    CHECK(train::reconstruction_loss(a, b) == doctest::Approx(0.01).epsilon(1e-5));

    Tensor c = random_tensor({7, 3}, rng);
    double acc = 0.0;
    for (int64_t i = 0; i < 7; ++i)
        for (int64_t j = 0; j < 3; ++j) {
            const double d = static_cast<double>(a.at2(i, j)) - static_cast<double>(c.at2(i, j));
            acc += d * d;
        }
    CHECK(std::abs(train::reconstruction_loss(a, c) - acc / 21.0) <= 1e-7);

    ad::Var ga = ad::constant(a);
    ad::Var gc = ad::constant(c);
    CHECK(train::reconstruction_loss(ga, gc)->value[0] ==
          doctest::Approx(train::reconstruction_loss(a, c)).epsilon(1e-5));
    CHECK_THROWS_AS((void)train::reconstruction_loss(a, Tensor({3, 7})), ShapeError);
}

TEST_CASE("cosine schedule anneals to zero, constant stays put") {
    const double lr0 = 3e-3;
    CHECK(train::scheduled_lr(train::LrSchedule::kCosine, lr0, 0, 100) == doctest::Approx(lr0));
    CHECK(train::scheduled_lr(train::LrSchedule::kCosine, lr0, 99, 100) <= 1e-3 * lr0);
    CHECK(train::scheduled_lr(train::LrSchedule::kCosine, lr0, 9, 10) <= 1e-3 * lr0);
    for (int64_t s = 1; s < 100; ++s)
        CHECK(train::scheduled_lr(train::LrSchedule::kCosine, lr0, s, 100) <
              train::scheduled_lr(train::LrSchedule::kCosine, lr0, s - 1, 100));
    CHECK(train::scheduled_lr(train::LrSchedule::kConstant, lr0, 57, 100) == lr0);
}

TEST_CASE("adam with zero gradient leaves parameters unchanged") {
    Rng rng(5);
    Tensor p = random_tensor({4, 4}, rng);
    Tensor original = p;
    Tensor g({4, 4});
    train::AdamConfig cfg;
    train::AdamState state;
    state.init_like({&p});
    for (int i = 0; i < 3; ++i) adam_step(cfg, state, {&p}, {&g}, 0.1f);
    CHECK(p == original);
}

TEST_CASE("inner_adapt stays at a stationary point with zero init") {
    mix::MnifConfig cfg = tiny_model();
    auto [bank, head] = mix::init_mnif(cfg, 11);
    Tensor coords = fields::image_grid(4, 4);
    Tensor targets = mix::mixture_forward(bank, head, cfg, Tensor({cfg.latent_len()}), coords);

    train::MetaTrainConfig tc = fast_meta(1);
    tc.latent_init_std = 0.0f;
    tc.inner_steps = 3;
    Tensor phi = train::inner_adapt(bank, head, cfg, {coords, targets}, tc, 123);
    CHECK(phi == Tensor({cfg.latent_len()}));
}

TEST_CASE("inner_adapt takes the closed-form step on an affine-in-phi model") {
    mix::MnifConfig cfg;
    auto [bank, head] = affine_in_phi_model(cfg);
    // Prediction for latent phi: alpha_out * 2 = (0.5 phi + 0.25) * 2.
    Tensor coords({1, 1}, {0.3f});
    Tensor target({1, 1}, {1.4f});
    train::MetaTrainConfig tc = fast_meta(1);
    tc.inner_steps = 1;
    tc.inner_lr = 0.05f;
    tc.latent_init_std = 0.0f;

    Tensor phi = train::inner_adapt(bank, head, cfg, {coords, target}, tc, 9);
    // L(phi) = (phi + 0.5 - 1.4)^2, so phi' = -2 eps (phi0 - 0.9) at phi0=0.
    const double want = -2.0 * 0.05 * (0.0 - 0.9);
    CHECK(phi[0] == doctest::Approx(want).epsilon(1e-5));
}

TEST_CASE("inner losses decrease monotonically at a small step size") {
    mix::MnifConfig cfg = tiny_model();
    auto [bank, head] = mix::init_mnif(cfg, 13);
    fields::ImageDataset ds = tiny_images(1, 8, 17);
    train::TrainItem item = ds.full_item(0);

    train::MetaTrainConfig tc = fast_meta(1);
    tc.inner_steps = 8;
    tc.inner_lr = 1e-2f;
    mix::BankVars bv = mix::to_vars(bank, false);
    mix::HeadVars hv = mix::to_vars(head, false);
    train::PredictFn predict = [&](const siren::SirenVars& inr, const train::TrainItem& it) {
        return siren::forward(inr, cfg.siren, ad::constant(it.coords));
    };
    train::InnerAdaptResult res = train::inner_adapt_graph(bv, hv, cfg, item, predict, tc, Rng(99));
    for (size_t n = 1; n < res.losses.size(); ++n) CHECK(res.losses[n] <= res.losses[n - 1] + 1e-9);
}

TEST_CASE("meta_train is deterministic and learns on a desk-scale set") {
    fields::ImageDataset ds = tiny_images(8, 8, 21);
    mix::MnifConfig cfg = tiny_model();
    train::MetaTrainConfig tc = fast_meta(40);

    train::Stage1Result r1 = train::meta_train(ds, cfg, tc, 7);
    train::Stage1Result r2 = train::meta_train(ds, cfg, tc, 7);
    REQUIRE(r1.log.size() == r2.log.size());
    for (size_t i = 0; i < r1.log.size(); ++i) {
        CHECK(r1.log[i].loss == r2.log[i].loss);
        CHECK(r1.log[i].psnr == r2.log[i].psnr);
    }
    for (size_t i = 0; i < r1.bank.weights.size(); ++i) CHECK(r1.bank.weights[i] == r2.bank.weights[i]);
    CHECK(r1.head.projection == r2.head.projection);

    CHECK(r1.log.back().loss < r1.log.front().loss);
}

TEST_CASE("auto_decode_train: zero epochs returns the exact latent draws") {
    fields::ImageDataset ds = tiny_images(5, 4, 31);
    mix::MnifConfig cfg = tiny_model();
    train::AutoDecodeConfig tc;
    tc.epochs = 0;
    tc.latent_init_std = 0.01f;
    train::Stage1Result res = train::auto_decode_train(ds, cfg, tc, 77);
    REQUIRE(res.latents.size() == 5);

    Rng latent_rng = Rng(77).fork("latent-init");
    for (int64_t i = 0; i < 5; ++i) {
        Rng r = latent_rng.fork(static_cast<uint64_t>(i));
        Tensor want({cfg.latent_len()});
        for (int64_t j = 0; j < want.numel(); ++j) want[j] = r.normal(0.0f, 0.01f);
        CHECK(res.latents.rows[static_cast<size_t>(i)] == want);
    }
}

TEST_CASE("latent weight decay shrinks the latent norms") {
    fields::ImageDataset ds = tiny_images(4, 8, 41);
    mix::MnifConfig cfg = tiny_model();
    train::AutoDecodeConfig tc;
    tc.lr = 3e-3f;
    tc.batch_size = 4;
    tc.epochs = 1 << 20;
    tc.max_steps = 120;
    tc.latent_weight_decay = 0.0f;
    train::Stage1Result free_run = train::auto_decode_train(ds, cfg, tc, 5);
    tc.latent_weight_decay = 1.0f;
    train::Stage1Result decayed = train::auto_decode_train(ds, cfg, tc, 5);

    auto mean_norm = [](const train::LatentTable& t) {
        double acc = 0.0;
        for (const auto& row : t.rows) {
            double n = 0.0;
            for (int64_t j = 0; j < row.numel(); ++j) n += row[j] * row[j];
            acc += std::sqrt(n);
        }
        return acc / static_cast<double>(t.size());
    };
    CHECK(mean_norm(decayed.latents) < mean_norm(free_run.latents));
}

TEST_CASE("harvest_latents replays training quality and matches the dataset size") {
    fields::ImageDataset ds = tiny_images(6, 8, 51);
    mix::MnifConfig cfg = tiny_model();
    train::MetaTrainConfig tc = fast_meta(150);
    tc.inner_steps = 3;
    train::Stage1Result res = train::meta_train(ds, cfg, tc, 13);

    train::LatentTable table = train::harvest_latents(res.bank, res.head, cfg, ds, tc, 13);
    CHECK(table.size() == ds.size());

    // The log reports the mean of per-item PSNRs; compare like with like.
    std::vector<double> mses = train::evaluate_latents(res.bank, res.head, cfg, ds, table);
    double harvested_psnr = 0.0;
    for (double m : mses) harvested_psnr += train::psnr_from_mse(m);
    harvested_psnr /= static_cast<double>(mses.size());
    INFO("log psnr=", res.log.back().psnr, " harvested=", harvested_psnr);
    CHECK(std::abs(harvested_psnr - res.log.back().psnr) <= 0.5);
}

TEST_CASE("divergence is reported with the failing step") {
    fields::ImageDataset ds = tiny_images(4, 8, 61);
    mix::MnifConfig cfg = tiny_model();
    train::MetaTrainConfig tc = fast_meta(50);
    tc.inner_lr = 1e9f;  // guaranteed blow-up
    CHECK_THROWS_AS((void)train::meta_train(ds, cfg, tc, 3), DivergenceError);
}

TEST_CASE("training log lines carry the documented fields") {
    train::LogEntry e{12, 3, 0.25, 6.0206, 1e-3};
    const std::string line = train::format_log_entry(e);
    CHECK(line.find("step=12") != std::string::npos);
    CHECK(line.find("epoch=3") != std::string::npos);
    CHECK(line.find("loss=0.25") != std::string::npos);
    CHECK(line.find("psnr=6.0206") != std::string::npos);
    CHECK(line.find("lr=0.001") != std::string::npos);
}
