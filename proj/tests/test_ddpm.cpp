#include <doctest.h>

#include <cmath>

#include "diffusion.hpp"
#include "test_helpers.hpp"

using namespace mnif;
using testing::random_tensor;

namespace {

ddpm::DiffusionConfig small_cfg(int64_t t = 50, ddpm::NoiseSchedule sched = ddpm::NoiseSchedule::kCosine) {
    ddpm::DiffusionConfig cfg;
    cfg.timesteps = t;
    cfg.schedule = sched;
    cfg.denoiser_width = 32;
    cfg.denoiser_blocks = 2;
    cfg.lr = 1e-3f;
    cfg.batch_size = 16;
    cfg.epochs = 1 << 20;
    return cfg;
}

train::LatentTable table_of(const std::vector<std::vector<float>>& rows) {
    train::LatentTable t;
    for (const auto& r : rows) t.rows.push_back(Tensor({static_cast<int64_t>(r.size())}, std::vector<float>(r)));
    return t;
}

}  // namespace

TEST_CASE("noise schedules are sane under defaults") {
    for (auto sched : {ddpm::NoiseSchedule::kLinear, ddpm::NoiseSchedule::kCosine}) {
        ddpm::DiffusionConfig cfg;
        cfg.schedule = sched;  // T = 1000 default
        ddpm::Schedule s = ddpm::make_schedule(cfg);
        REQUIRE(s.alpha_bar.size() == 1000);
        CHECK(s.alpha_bar.front() >= 0.99);
        CHECK(s.alpha_bar.back() <= 0.05);
        for (size_t t = 1; t < s.alpha_bar.size(); ++t) CHECK(s.alpha_bar[t] < s.alpha_bar[t - 1]);
        for (double b : s.beta) {
            CHECK(b > 0.0);
            CHECK(b <= 0.999);
        }
    }
    ddpm::DiffusionConfig linear;
    linear.schedule = ddpm::NoiseSchedule::kLinear;
    CHECK(ddpm::make_schedule(linear).alpha_bar.front() >= 0.999);  // beta_0 = 1e-4
}

TEST_CASE("forward_noise endpoints and range checks") {
    ddpm::DiffusionConfig cfg;
    cfg.schedule = ddpm::NoiseSchedule::kLinear;
    ddpm::Schedule s = ddpm::make_schedule(cfg);
    Rng rng(3);
    Tensor phi = random_tensor({8}, rng);
    Tensor noise({8});
    for (int64_t j = 0; j < 8; ++j) noise[j] = rng.normal();

    Tensor x0 = ddpm::forward_noise(phi, 0, noise, s);
    for (int64_t j = 0; j < 8; ++j) CHECK(std::abs(x0[j] - phi[j]) <= 0.04 * (1.0 + std::abs(noise[j])));

    CHECK(std::sqrt(s.alpha_bar.back()) <= 0.1);

    CHECK_THROWS_AS((void)ddpm::forward_noise(phi, -1, noise, s), ContractError);
    CHECK_THROWS_AS((void)ddpm::forward_noise(phi, 1000, noise, s), ContractError);
}

TEST_CASE("forward-process Monte-Carlo moments match the closed form") {
    ddpm::DiffusionConfig cfg = small_cfg(100, ddpm::NoiseSchedule::kCosine);
    ddpm::Schedule s = ddpm::make_schedule(cfg);
    Tensor phi({2}, {0.8f, -1.2f});
    Rng rng(11);
    for (int64_t t : {0L, 37L, 99L}) {
        const int64_t draws = 100000;
        double mean[2] = {0, 0}, sq[2] = {0, 0};
        for (int64_t i = 0; i < draws; ++i) {
            Tensor noise({2}, {rng.normal(), rng.normal()});
            Tensor x = ddpm::forward_noise(phi, t, noise, s);
            for (int64_t j = 0; j < 2; ++j) {
                mean[j] += x[j];
                sq[j] += x[j] * x[j];
            }
        }
        const double abar = s.alpha_bar[static_cast<size_t>(t)];
        for (int64_t j = 0; j < 2; ++j) {
            const double m = mean[j] / draws;
            const double var = sq[j] / draws - m * m;
            CHECK(std::abs(m - std::sqrt(abar) * phi[j]) <= 1e-2);
            CHECK(std::abs(var - (1.0 - abar)) <= 1e-2);
        }
    }
}

TEST_CASE("denoiser parameter count matches its inventory") {
    ddpm::DiffusionConfig cfg = small_cfg();
    ddpm::DenoiserMlp d = ddpm::init_denoiser(5, cfg, 42);
    CHECK(d.param_count() == ddpm::denoiser_param_count(5, cfg.denoiser_width, cfg.denoiser_blocks));
}

TEST_CASE("denoiser gradients match finite differences") {
    ddpm::DiffusionConfig cfg = small_cfg(20);
    cfg.denoiser_width = 8;
    cfg.denoiser_blocks = 1;
    ddpm::DenoiserMlp d = ddpm::init_denoiser(3, cfg, 7);
    // Give the zero-initialized residual projections some signal.
    Rng rng(8);
    for (auto& blk : d.blocks)
        for (int64_t j = 0; j < blk.w2.numel(); ++j) blk.w2[j] = rng.uniform(-0.3f, 0.3f);
    Tensor x = random_tensor({4, 3}, rng);
    Tensor target = random_tensor({4, 3}, rng);
    std::vector<int64_t> ts{0, 7, 13, 19};

    std::vector<Tensor> params{d.in_w, d.in_b, d.blocks[0].w1, d.blocks[0].b1, d.blocks[0].temb_w,
                               d.blocks[0].w2, d.blocks[0].b2, d.out_w, d.out_b};
    testing::check_gradients(params, [&](const std::vector<ad::Var>& p) {
        ddpm::DenoiserVars v;
        v.in_w = p[0];
        v.in_b = p[1];
        v.blocks.push_back({p[2], p[3], p[4], p[5], p[6]});
        v.out_w = p[7];
        v.out_b = p[8];
        return ad::mse(ddpm::denoise(v, ad::constant(x), ts, cfg.timesteps), ad::constant(target));
    });
}

TEST_CASE("standardize/destandardize round trip") {
    Rng rng(21);
    train::LatentTable table;
    for (int i = 0; i < 12; ++i) table.rows.push_back(random_tensor({6}, rng, -3.0f, 5.0f));
    ddpm::LatentStats stats = ddpm::compute_stats(table);
    for (const auto& row : table.rows) {
        Tensor round = ddpm::destandardize(stats, ddpm::standardize(stats, row));
        for (int64_t j = 0; j < row.numel(); ++j) CHECK(std::abs(round[j] - row[j]) <= 1e-6 * (1.0 + std::abs(row[j])));
    }
}

TEST_CASE("degenerate table engages the std floor and still trains") {
    train::LatentTable table = table_of({{1.5f, -2.0f}, {1.5f, -2.0f}, {1.5f, -2.0f}});
    ddpm::LatentStats stats = ddpm::compute_stats(table);
    CHECK(stats.stddev[0] == doctest::Approx(1e-6));
    CHECK(stats.stddev[1] == doctest::Approx(1e-6));

    ddpm::DiffusionConfig cfg = small_cfg(20);
    cfg.max_steps = 200;
    ddpm::Stage2Result res = ddpm::train_denoiser(table, cfg, 5);
    CHECK(res.log.back().loss < res.log.front().loss);
    CHECK(res.log.back().loss < 1.0);
}

TEST_CASE("untrained noise-prediction loss sits near the random-predictor expectation") {
    Rng rng(31);
    train::LatentTable table;
    for (int i = 0; i < 64; ++i) table.rows.push_back(random_tensor({4}, rng, -1.0f, 1.0f));
    ddpm::DiffusionConfig cfg = small_cfg(50);
    cfg.max_steps = 1;
    ddpm::Stage2Result res = ddpm::train_denoiser(table, cfg, 9);
    // Predicting nearly zero noise gives E||eps||^2 per element = 1.
    CHECK(res.log.front().loss >= 0.8);
    CHECK(res.log.front().loss <= 1.2);
}

TEST_CASE("train_denoiser rejects an empty table") {
    CHECK_THROWS_AS((void)ddpm::train_denoiser(train::LatentTable{}, small_cfg(), 1), ContractError);
}

TEST_CASE("sampling: count zero, shape contract, determinism") {
    Rng rng(41);
    train::LatentTable table;
    for (int i = 0; i < 16; ++i) table.rows.push_back(random_tensor({3}, rng));
    ddpm::DiffusionConfig cfg = small_cfg(20);
    cfg.max_steps = 50;
    ddpm::Stage2Result res = ddpm::train_denoiser(table, cfg, 3);

    CHECK(ddpm::sample(res.denoiser, res.stats, cfg, 0, 7).empty());

    std::vector<Tensor> a = ddpm::sample(res.denoiser, res.stats, cfg, 5, 7);
    std::vector<Tensor> b = ddpm::sample(res.denoiser, res.stats, cfg, 5, 7);
    REQUIRE(a.size() == 5);
    for (size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].numel() == 3);
        CHECK(a[i].all_finite());
        CHECK(a[i] == b[i]);
    }
    std::vector<Tensor> c = ddpm::sample(res.denoiser, res.stats, cfg, 5, 8);
    CHECK(!(c[0] == a[0]));
}

TEST_CASE("a trained single-point denoiser pulls samples toward the point") {
    train::LatentTable table = table_of({{0.7f, -0.4f}});
    ddpm::DiffusionConfig cfg = small_cfg(50);
    cfg.denoiser_width = 32;
    cfg.max_steps = 400;
    ddpm::Stage2Result trained = ddpm::train_denoiser(table, cfg, 11);
    cfg.max_steps = 0;
    cfg.epochs = 0;
    ddpm::Stage2Result blank = ddpm::train_denoiser(table, cfg, 11);

    auto mean_dist = [&](const std::vector<Tensor>& samples) {
        double acc = 0.0;
        for (const auto& s : samples) {
            const double dx = s[0] - 0.7, dy = s[1] + 0.4;
            acc += std::sqrt(dx * dx + dy * dy);
        }
        return acc / static_cast<double>(samples.size());
    };
    const double d_trained = mean_dist(ddpm::sample(trained.denoiser, trained.stats, cfg, 64, 21));
    const double d_blank = mean_dist(ddpm::sample(blank.denoiser, blank.stats, cfg, 64, 21));
    INFO("trained=", d_trained, " blank=", d_blank);
    CHECK(d_trained < d_blank);
}

TEST_CASE("interpolation sampler stays on the segment and respects contracts") {
    CHECK_THROWS_AS((void)ddpm::sample_by_interpolation(table_of({{1.0f, 2.0f}}), 2, Rng(1)), ContractError);

    train::LatentTable twins = table_of({{0.5f, -1.0f}, {0.5f, -1.0f}});
    ddpm::InterpolationDraw d = ddpm::sample_by_interpolation(twins, 1, Rng(2));
    CHECK(d.phi == twins.rows[0]);

    Rng rng(51);
    train::LatentTable table;
    for (int i = 0; i < 10; ++i) table.rows.push_back(random_tensor({4}, rng));
    Rng draw_rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        ddpm::InterpolationDraw draw = ddpm::sample_by_interpolation(table, 3, draw_rng);
        const Tensor& a = table.rows[static_cast<size_t>(draw.index_a)];
        const Tensor& b = table.rows[static_cast<size_t>(draw.index_b)];
        for (int64_t j = 0; j < 4; ++j)
            CHECK(draw.phi[j] == draw.alpha * a[j] + (1.0f - draw.alpha) * b[j]);
        CHECK(draw.index_a != draw.index_b);
        CHECK(draw.alpha >= 0.0f);
        CHECK(draw.alpha <= 1.0f);
        if (draw.alpha > 0.0f && draw.alpha < 1.0f) {
            CHECK(!(draw.phi == a));
            CHECK(!(draw.phi == b));
        }
    }
}
