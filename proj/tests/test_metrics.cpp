#include <doctest.h>

#include <cmath>

#include "metrics.hpp"
#include "test_helpers.hpp"

using namespace mnif;
using testing::random_tensor;

TEST_CASE("psnr: sentinel, analytic values, monotonicity") {
    Rng rng(3);
    Tensor x = random_tensor({8, 3}, rng, 0.0f, 1.0f);
    CHECK(std::isinf(metrics::psnr(x, x)));

    CHECK(metrics::psnr_from_mse(0.01) == doctest::Approx(20.0));
    CHECK(metrics::psnr_from_mse(1e-3) == doctest::Approx(30.0));

    double prev = std::numeric_limits<double>::infinity();
    for (float eps : {0.01f, 0.02f, 0.05f, 0.1f, 0.3f}) {
        Tensor y = x;
        for (int64_t i = 0; i < y.numel(); ++i) y[i] += eps;
        const double p = metrics::psnr(x, y);
        CHECK(p < prev);
        prev = p;
    }
    CHECK_THROWS_AS((void)metrics::psnr(x, Tensor({3, 8})), ShapeError);
}

TEST_CASE("chamfer: hand cases, symmetry, brute-force oracle") {
    Tensor a({1, 3}, {0, 0, 0});
    Tensor b({1, 3}, {1, 0, 0});
    CHECK(metrics::chamfer(a, a) == 0.0);
    CHECK(metrics::chamfer(a, b) == doctest::Approx(2.0));

    Rng rng(7);
    for (int trial = 0; trial < 10; ++trial) {
        const int64_t n = 1 + static_cast<int64_t>(rng.next_u64() % 64);
        const int64_t m = 1 + static_cast<int64_t>(rng.next_u64() % 64);
        Tensor p = random_tensor({n, 3}, rng);
        Tensor q = random_tensor({m, 3}, rng);
        const double got = metrics::chamfer(p, q);
        CHECK(got == metrics::chamfer(q, p));

        double ab = 0.0;
        for (int64_t i = 0; i < n; ++i) {
            double best = 1e300;
            for (int64_t j = 0; j < m; ++j) {
                double d2 = 0.0;
                for (int64_t c = 0; c < 3; ++c) {
                    const double d = static_cast<double>(p.at2(i, c)) - q.at2(j, c);
                    d2 += d * d;
                }
                best = std::min(best, d2);
            }
            ab += best;
        }
        double ba = 0.0;
        for (int64_t j = 0; j < m; ++j) {
            double best = 1e300;
            for (int64_t i = 0; i < n; ++i) {
                double d2 = 0.0;
                for (int64_t c = 0; c < 3; ++c) {
                    const double d = static_cast<double>(p.at2(i, c)) - q.at2(j, c);
                    d2 += d * d;
                }
                best = std::min(best, d2);
            }
            ba += best;
        }
        CHECK(got == doctest::Approx(ab / n + ba / m).epsilon(1e-12));
    }

    CHECK_THROWS_AS((void)metrics::chamfer(Tensor({0, 3}), b), ContractError);
}

TEST_CASE("coverage and mmd: trivial and oracle cases") {
    Rng rng(9);
    std::vector<Tensor> ref;
    for (int i = 0; i < 8; ++i) ref.push_back(random_tensor({12, 3}, rng));

    metrics::CoverageMmd same = metrics::coverage_mmd(ref, ref);
    CHECK(same.coverage == 1.0);
    CHECK(same.mmd == 0.0);

    metrics::CoverageMmd single = metrics::coverage_mmd({ref[3]}, ref);
    CHECK(single.coverage == doctest::Approx(1.0 / 8.0));

    std::vector<Tensor> gen;
    for (const auto& r : ref) {
        Tensor g = r;
        for (int64_t j = 0; j < g.numel(); ++j) g[j] += rng.uniform(-0.05f, 0.05f);
        gen.push_back(std::move(g));
    }
    metrics::CoverageMmd got = metrics::coverage_mmd(gen, ref);

    // Exhaustive pairwise oracle.
    std::vector<std::vector<double>> d(8, std::vector<double>(8));
    for (int i = 0; i < 8; ++i)
        for (int j = 0; j < 8; ++j) d[i][j] = metrics::chamfer(gen[i], ref[j]);
    std::vector<bool> covered(8, false);
    for (int i = 0; i < 8; ++i) {
        int best = 0;
        for (int j = 1; j < 8; ++j)
            if (d[i][j] < d[i][best]) best = j;
        covered[best] = true;
    }
    int n_cov = 0;
    for (bool c : covered) n_cov += c;
    double mmd = 0.0;
    for (int j = 0; j < 8; ++j) {
        double best = 1e300;
        for (int i = 0; i < 8; ++i) best = std::min(best, d[i][j]);
        mmd += best;
    }
    CHECK(got.coverage == doctest::Approx(n_cov / 8.0));
    CHECK(got.mmd == doctest::Approx(mmd / 8.0));

    CHECK_THROWS_AS((void)metrics::coverage_mmd({}, ref), ContractError);
}

TEST_CASE("cost report reproduces the published efficiency figures") {
    mix::MnifConfig celeba;
    celeba.siren = {2, 3, 64, 4};
    celeba.num_mixtures = 256;
    celeba.latent_dim = 1024;
    metrics::CostReport rep = metrics::cost_report(celeba, 4096);
    const double gflops = static_cast<double>(rep.flops_per_instance) / 1e9;
    CHECK(std::abs(gflops - 0.069) / 0.069 <= 0.02);

    mix::MnifConfig nerf;
    nerf.siren = {3, 4, 64, 4};
    nerf.num_mixtures = 256;
    nerf.latent_dim = 128;
    CHECK(std::abs(static_cast<double>(metrics::cost_report(nerf, 1).inference_params) - 17200.0) / 17200.0 <= 0.01);
}

TEST_CASE("inference cost is invariant in M; learnable cost is affine in M") {
    std::vector<int64_t> ms{1, 16, 256};
    std::vector<metrics::CostReport> reps;
    for (int64_t m : ms) {
        mix::MnifConfig cfg;
        cfg.siren = {2, 3, 64, 4};
        cfg.num_mixtures = m;
        cfg.latent_dim = 256;
        reps.push_back(metrics::cost_report(cfg, 4096));
    }
    for (const auto& r : reps) {
        CHECK(r.flops_per_instance == reps[0].flops_per_instance);
        CHECK(r.inference_params == reps[0].inference_params);
    }
    // learnable(m) = a + b m exactly.
    const double b = static_cast<double>(reps[1].learnable_params - reps[0].learnable_params) / (16 - 1);
    const double a = static_cast<double>(reps[0].learnable_params) - b;
    CHECK(static_cast<double>(reps[2].learnable_params) == doctest::Approx(a + b * 256));
}

TEST_CASE("basis similarity: identical, orthogonal, oracle and zero-norm cases") {
    mix::MnifConfig cfg;
    cfg.siren = {2, 2, 2, 1};
    cfg.num_mixtures = 3;
    cfg.latent_dim = 4;
    auto [bank, head] = mix::init_mnif(cfg, 5);
    (void)head;

    // Identical bases: every off-diagonal entry 1, diagonal 0.
    for (auto& stacked : bank.weights)
        for (int64_t m = 1; m < 3; ++m)
            for (int64_t j = 0; j < stacked.cols(); ++j) stacked.at2(m, j) = stacked.at2(0, j);
    std::vector<metrics::SimilarityMatrix> sims = metrics::basis_similarity(bank);
    for (const auto& s : sims)
        for (int64_t i = 0; i < 3; ++i)
            for (int64_t j = 0; j < 3; ++j)
                CHECK(s.at(i, j) == doctest::Approx(i == j ? 0.0 : 1.0).epsilon(1e-5));

    // Orthogonal pair in a 2x2 layer.
    mix::MnifConfig tiny;
    tiny.siren = {2, 2, 2, 0};
    tiny.num_mixtures = 2;
    tiny.latent_dim = 2;
    auto [obank, ohead] = mix::init_mnif(tiny, 6);
    (void)ohead;
    obank.weights[0] = Tensor({2, 4}, {1, 0, 0, 1, 0, -1, 1, 0});
    CHECK(metrics::basis_similarity(obank)[0].at(0, 1) == doctest::Approx(0.0));

    // Random bank against a direct cosine oracle.
    Rng rng(11);
    mix::MnifConfig rnd;
    rnd.siren = {2, 2, 3, 1};
    rnd.num_mixtures = 4;
    rnd.latent_dim = 2;
    auto [rbank, rhead] = mix::init_mnif(rnd, 7);
    (void)rhead;
    std::vector<metrics::SimilarityMatrix> rsims = metrics::basis_similarity(rbank);
    for (size_t layer = 0; layer < rbank.weights.size(); ++layer) {
        const Tensor& st = rbank.weights[layer];
        for (int64_t i = 0; i < 4; ++i)
            for (int64_t j = 0; j < 4; ++j) {
                if (i == j) {
                    CHECK(rsims[layer].at(i, j) == 0.0f);
                    continue;
                }
                double dot = 0.0, ni = 0.0, nj = 0.0;
                for (int64_t c = 0; c < st.cols(); ++c) {
                    dot += static_cast<double>(st.at2(i, c)) * st.at2(j, c);
                    ni += static_cast<double>(st.at2(i, c)) * st.at2(i, c);
                    nj += static_cast<double>(st.at2(j, c)) * st.at2(j, c);
                }
                CHECK(std::abs(rsims[layer].at(i, j) - std::abs(dot) / std::sqrt(ni * nj)) <= 1e-6);
            }
    }

    // Zero-norm basis reports 0 with a warning.
    for (int64_t j = 0; j < obank.weights[0].cols(); ++j) obank.weights[0].at2(1, j) = 0.0f;
    std::vector<metrics::SimilarityMatrix> zsims = metrics::basis_similarity(obank);
    CHECK(zsims[0].at(0, 1) == 0.0f);
    CHECK(!zsims[0].warnings.empty());
}
