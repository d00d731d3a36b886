#include "trainers.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

namespace mnif::train {

namespace {

std::vector<Tensor*> collect_params(mix::BasisBank& bank, mix::CoefficientHead& head) {
    // Canonical order, mirrored by mix::trainable_list.
    std::vector<Tensor*> out;
    for (auto& w : bank.weights) out.push_back(&w);
    for (auto& b : bank.biases) out.push_back(&b);
    if (head.projection.numel() > 0) out.push_back(&head.projection);
    out.push_back(&head.bias);
    return out;
}

std::vector<int64_t> epoch_order(int64_t n, Rng rng) {
    std::vector<int64_t> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    for (int64_t i = n - 1; i > 0; --i) {
        const int64_t j = static_cast<int64_t>(rng.next_u64() % static_cast<uint64_t>(i + 1));
        std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(j)]);
    }
    return order;
}

Tensor draw_latent(int64_t dim, float stddev, Rng rng) {
    Tensor t({dim});
    for (int64_t i = 0; i < dim; ++i) t[i] = rng.normal(0.0f, stddev);
    return t;
}

int64_t steps_per_epoch(int64_t n, int64_t batch) { return (n + batch - 1) / batch; }

void check_params_finite(const std::vector<Tensor*>& params, int64_t step) {
    for (const Tensor* p : params)
        if (!p->all_finite())
            throw DivergenceError("non-finite parameters after outer step " + std::to_string(step));
}

}  // namespace

void MetaTrainConfig::validate() const {
    if (inner_steps < 1) throw ContractError("inner_steps must be >= 1");
    if (!(inner_lr > 0.0f) || !(outer_lr > 0.0f)) throw ContractError("learning rates must be positive");
    if (latent_init_std < 0.0f) throw ContractError("latent_init_std must be >= 0");
    if (batch_size < 1 || epochs < 0) throw ContractError("invalid batch_size or epochs");
}

void AutoDecodeConfig::validate() const {
    if (!(lr > 0.0f)) throw ContractError("learning rate must be positive");
    if (latent_init_std < 0.0f || latent_weight_decay < 0.0f)
        throw ContractError("latent_init_std and latent_weight_decay must be >= 0");
    if (batch_size < 1 || epochs < 0) throw ContractError("invalid batch_size or epochs");
}

ad::Var TrainDataset::predict(const siren::SirenVars& inr, const siren::SirenConfig& cfg,
                              const TrainItem& item) const {
    return siren::forward(inr, cfg, ad::constant(item.coords));
}

std::string format_log_entry(const LogEntry& e) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "step=%lld epoch=%lld loss=%.8g psnr=%.6g lr=%.6g",
                  static_cast<long long>(e.step), static_cast<long long>(e.epoch), e.loss, e.psnr, e.lr);
    return buf;
}

ad::Var reconstruction_loss(const ad::Var& pred, const ad::Var& target) { return ad::mse(pred, target); }

double reconstruction_loss(const Tensor& pred, const Tensor& target) {
    check_same_shape(pred, target, "reconstruction_loss");
    double acc = 0.0;
    for (int64_t i = 0; i < pred.numel(); ++i) {
        const float d = pred[i] - target[i];
        acc += static_cast<double>(d) * static_cast<double>(d);
    }
    return acc / static_cast<double>(pred.numel());
}

double psnr_from_mse(double mse, double peak) {
    if (mse <= 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(peak * peak / mse);
}

InnerAdaptResult inner_adapt_graph(const mix::BankVars& bank, const mix::HeadVars& head, const mix::MnifConfig& cfg,
                                   const TrainItem& item, const PredictFn& predict, const MetaTrainConfig& tcfg,
                                   Rng latent_rng) {
    tcfg.validate();
    ad::Var targets = ad::constant(item.targets);
    InnerAdaptResult res;
    res.phi = ad::leaf(draw_latent(cfg.latent_len(), tcfg.latent_init_std, latent_rng));
    for (int64_t n = 0; n < tcfg.inner_steps; ++n) {
        siren::SirenVars inr = mix::collapse(bank, cfg, mix::coefficients(head, cfg, res.phi));
        ad::Var loss = reconstruction_loss(predict(inr, item), targets);
        const double lv = loss->value[0];
        if (!std::isfinite(lv)) throw DivergenceError("non-finite loss at inner step " + std::to_string(n));
        res.losses.push_back(lv);
        ad::Var g = ad::grad(loss, {res.phi})[0];
        ad::Var next = ad::sub(res.phi, ad::scale(g, tcfg.inner_lr));
        res.phi = tcfg.second_order ? next : ad::leaf(next->value);
    }
    return res;
}

Tensor inner_adapt(const mix::BasisBank& bank, const mix::CoefficientHead& head, const mix::MnifConfig& cfg,
                   const TrainItem& item, const MetaTrainConfig& tcfg, uint64_t seed, const PredictFn& predict) {
    mix::BankVars bvars = mix::to_vars(bank, false);
    mix::HeadVars hvars = mix::to_vars(head, false);
    MetaTrainConfig local = tcfg;
    local.second_order = false;  // frozen parameters; nothing to flow back into
    PredictFn fn = predict;
    if (!fn)
        fn = [&cfg](const siren::SirenVars& inr, const TrainItem& it) {
            return siren::forward(inr, cfg.siren, ad::constant(it.coords));
        };
    InnerAdaptResult res = inner_adapt_graph(bvars, hvars, cfg, item, fn, local, Rng(seed));
    Tensor phi = res.phi->value;
    ad::release(std::move(res.phi));
    return phi;
}

Stage1Result meta_train(const TrainDataset& dataset, const mix::MnifConfig& cfg, const MetaTrainConfig& tcfg,
                        uint64_t seed, const LogCallback& on_log, const EpochCallback& on_epoch) {
    cfg.validate();
    tcfg.validate();
    const int64_t n = dataset.size();
    if (n == 0) throw ContractError("meta_train: empty dataset");

    Rng root(seed);
    Stage1Result res;
    auto [bank, head] = mix::init_mnif(cfg, root.fork("init").seed());
    res.bank = std::move(bank);
    res.head = std::move(head);

    std::vector<Tensor*> params = collect_params(res.bank, res.head);
    AdamConfig adam;
    AdamState state;
    state.init_like(params);

    const int64_t spe = steps_per_epoch(n, tcfg.batch_size);
    int64_t total_steps = tcfg.epochs * spe;
    if (tcfg.max_steps > 0) total_steps = std::min(total_steps, tcfg.max_steps);

    Rng shuffle_rng = root.fork("shuffle");
    Rng latent_rng = root.fork("latent-init");
    Rng data_rng = root.fork("data-sample");

    int64_t step = 0;
    for (int64_t epoch = 0; step < total_steps; ++epoch) {
        std::vector<int64_t> order = epoch_order(n, shuffle_rng.fork(static_cast<uint64_t>(epoch)));
        double epoch_loss = 0.0, epoch_psnr = 0.0;
        int64_t epoch_items = 0;
        double lr = 0.0;
        for (int64_t b = 0; b < spe && step < total_steps; ++b, ++step) {
            lr = scheduled_lr(tcfg.lr_schedule, tcfg.outer_lr, step, total_steps);
            const int64_t lo = b * tcfg.batch_size;
            const int64_t hi = std::min(lo + tcfg.batch_size, n);

            mix::BankVars bvars = mix::to_vars(res.bank, true);
            mix::HeadVars hvars = mix::to_vars(res.head, true);
            std::vector<ad::Var> leaves = mix::trainable_list(bvars, hvars);
            std::vector<Tensor> acc;
            for (const auto& l : leaves) acc.emplace_back(l->value.shape());

            PredictFn predict = [&dataset, &cfg](const siren::SirenVars& inr, const TrainItem& it) {
                return dataset.predict(inr, cfg.siren, it);
            };
            for (int64_t s = lo; s < hi; ++s) {
                const int64_t instance = order[static_cast<size_t>(s)];
                TrainItem item = dataset.item(instance, data_rng.fork(static_cast<uint64_t>(step))
                                                            .fork(static_cast<uint64_t>(instance)));
                InnerAdaptResult inner =
                    inner_adapt_graph(bvars, hvars, cfg, item, predict, tcfg,
                                      latent_rng.fork(static_cast<uint64_t>(step)).fork(static_cast<uint64_t>(instance)));
                siren::SirenVars inr = mix::collapse(bvars, cfg, mix::coefficients(hvars, cfg, inner.phi));
                ad::Var loss = reconstruction_loss(predict(inr, item), ad::constant(item.targets));
                const double lv = loss->value[0];
                if (!std::isfinite(lv))
                    throw DivergenceError("non-finite loss at outer step " + std::to_string(step) + ", instance " +
                                          std::to_string(instance));
                epoch_loss += lv;
                epoch_psnr += psnr_from_mse(lv);
                ++epoch_items;

                std::vector<ad::Var> grads = ad::grad(loss, leaves);
                for (size_t i = 0; i < grads.size(); ++i) {
                    const Tensor& g = grads[i]->value;
                    for (int64_t j = 0; j < g.numel(); ++j) acc[i][j] += g[j];
                }
                for (auto& g : grads) ad::release(std::move(g));
                ad::release(std::move(loss));
            }

            const float inv_b = 1.0f / static_cast<float>(hi - lo);
            for (auto& g : acc)
                for (int64_t j = 0; j < g.numel(); ++j) g[j] *= inv_b;
            std::vector<const Tensor*> gptrs;
            for (const auto& g : acc) gptrs.push_back(&g);
            adam_step(adam, state, params, gptrs, static_cast<float>(lr));
        }
        check_params_finite(params, step);
        LogEntry entry{step, epoch, epoch_loss / static_cast<double>(std::max<int64_t>(epoch_items, 1)),
                       epoch_psnr / static_cast<double>(std::max<int64_t>(epoch_items, 1)), lr};
        res.log.push_back(entry);
        if (on_log) on_log(entry);
        if (on_epoch) on_epoch(epoch, res.bank, res.head, nullptr);
    }
    return res;
}

Stage1Result auto_decode_train(const TrainDataset& dataset, const mix::MnifConfig& cfg, const AutoDecodeConfig& tcfg,
                               uint64_t seed, const LogCallback& on_log, const EpochCallback& on_epoch) {
    cfg.validate();
    tcfg.validate();
    const int64_t n = dataset.size();
    if (n == 0) throw ContractError("auto_decode_train: empty dataset");

    Rng root(seed);
    Stage1Result res;
    auto [bank, head] = mix::init_mnif(cfg, root.fork("init").seed());
    res.bank = std::move(bank);
    res.head = std::move(head);

    Rng latent_rng = root.fork("latent-init");
    const int64_t latent_dim = cfg.latent_len();
    for (int64_t i = 0; i < n; ++i)
        res.latents.rows.push_back(draw_latent(latent_dim, tcfg.latent_init_std, latent_rng.fork(static_cast<uint64_t>(i))));

    std::vector<Tensor*> shared_params = collect_params(res.bank, res.head);
    AdamConfig adam;
    AdamState shared_state;
    shared_state.init_like(shared_params);
    std::vector<AdamState> latent_states(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) latent_states[static_cast<size_t>(i)].init_like({&res.latents.rows[static_cast<size_t>(i)]});

    const int64_t spe = steps_per_epoch(n, tcfg.batch_size);
    int64_t total_steps = tcfg.epochs * spe;
    if (tcfg.max_steps > 0) total_steps = std::min(total_steps, tcfg.max_steps);

    Rng shuffle_rng = root.fork("shuffle");
    Rng data_rng = root.fork("data-sample");

    int64_t step = 0;
    for (int64_t epoch = 0; step < total_steps; ++epoch) {
        std::vector<int64_t> order = epoch_order(n, shuffle_rng.fork(static_cast<uint64_t>(epoch)));
        double epoch_loss = 0.0, epoch_psnr = 0.0;
        int64_t epoch_items = 0;
        double lr = 0.0;
        for (int64_t b = 0; b < spe && step < total_steps; ++b, ++step) {
            lr = scheduled_lr(tcfg.lr_schedule, tcfg.lr, step, total_steps);
            const int64_t lo = b * tcfg.batch_size;
            const int64_t hi = std::min(lo + tcfg.batch_size, n);
            const int64_t batch_items = hi - lo;

            mix::BankVars bvars = mix::to_vars(res.bank, true);
            mix::HeadVars hvars = mix::to_vars(res.head, true);
            std::vector<ad::Var> leaves = mix::trainable_list(bvars, hvars);
            std::vector<ad::Var> phi_leaves;
            ad::Var total;
            for (int64_t s = lo; s < hi; ++s) {
                const int64_t instance = order[static_cast<size_t>(s)];
                TrainItem item = dataset.item(instance, data_rng.fork(static_cast<uint64_t>(step))
                                                            .fork(static_cast<uint64_t>(instance)));
                ad::Var phi = ad::leaf(res.latents.rows[static_cast<size_t>(instance)]);
                phi_leaves.push_back(phi);
                siren::SirenVars inr = mix::collapse(bvars, cfg, mix::coefficients(hvars, cfg, phi));
                ad::Var loss = reconstruction_loss(dataset.predict(inr, cfg.siren, item), ad::constant(item.targets));
                const double lv = loss->value[0];
                if (!std::isfinite(lv))
                    throw DivergenceError("non-finite loss at step " + std::to_string(step) + ", instance " +
                                          std::to_string(instance));
                epoch_loss += lv;
                epoch_psnr += psnr_from_mse(lv);
                ++epoch_items;
                total = total ? ad::add(total, loss) : loss;
            }
            total = ad::scale(total, 1.0f / static_cast<float>(batch_items));

            std::vector<ad::Var> all_leaves = leaves;
            all_leaves.insert(all_leaves.end(), phi_leaves.begin(), phi_leaves.end());
            std::vector<ad::Var> grads = ad::grad(total, all_leaves);

            std::vector<const Tensor*> shared_grads;
            for (size_t i = 0; i < leaves.size(); ++i) shared_grads.push_back(&grads[i]->value);
            adam_step(adam, shared_state, shared_params, shared_grads, static_cast<float>(lr));

            for (int64_t s = lo; s < hi; ++s) {
                const int64_t instance = order[static_cast<size_t>(s)];
                Tensor g = grads[leaves.size() + static_cast<size_t>(s - lo)]->value;
                Tensor& phi = res.latents.rows[static_cast<size_t>(instance)];
                if (tcfg.latent_weight_decay > 0.0f)
                    for (int64_t j = 0; j < g.numel(); ++j) g[j] += tcfg.latent_weight_decay * phi[j];
                adam_step(adam, latent_states[static_cast<size_t>(instance)], {&phi}, {&g},
                          static_cast<float>(lr));
            }

            for (auto& g : grads) ad::release(std::move(g));
            ad::release(std::move(total));
        }
        check_params_finite(shared_params, step);
        LogEntry entry{step, epoch, epoch_loss / static_cast<double>(std::max<int64_t>(epoch_items, 1)),
                       epoch_psnr / static_cast<double>(std::max<int64_t>(epoch_items, 1)), lr};
        res.log.push_back(entry);
        if (on_log) on_log(entry);
        if (on_epoch) on_epoch(epoch, res.bank, res.head, &res.latents);
    }
    return res;
}

LatentTable harvest_latents(const mix::BasisBank& bank, const mix::CoefficientHead& head, const mix::MnifConfig& cfg,
                            const TrainDataset& dataset, const MetaTrainConfig& tcfg, uint64_t seed) {
    LatentTable table;
    Rng root = Rng(seed).fork("harvest");
    PredictFn predict = [&dataset, &cfg](const siren::SirenVars& inr, const TrainItem& it) {
        return dataset.predict(inr, cfg.siren, it);
    };
    for (int64_t i = 0; i < dataset.size(); ++i) {
        TrainItem item = dataset.full_item(i);
        table.rows.push_back(
            inner_adapt(bank, head, cfg, item, tcfg, root.fork(static_cast<uint64_t>(i)).seed(), predict));
    }
    return table;
}

std::vector<double> evaluate_latents(const mix::BasisBank& bank, const mix::CoefficientHead& head,
                                     const mix::MnifConfig& cfg, const TrainDataset& dataset,
                                     const LatentTable& table) {
    if (table.size() != dataset.size())
        throw ContractError("evaluate_latents: table has " + std::to_string(table.size()) + " rows for " +
                            std::to_string(dataset.size()) + " instances");
    mix::BankVars bvars = mix::to_vars(bank, false);
    mix::HeadVars hvars = mix::to_vars(head, false);
    std::vector<double> out;
    out.reserve(static_cast<size_t>(table.size()));
    for (int64_t i = 0; i < table.size(); ++i) {
        TrainItem item = dataset.full_item(i);
        siren::SirenVars inr =
            mix::collapse(bvars, cfg, mix::coefficients(hvars, cfg, ad::constant(table.rows[static_cast<size_t>(i)])));
        ad::Var pred = dataset.predict(inr, cfg.siren, item);
        out.push_back(reconstruction_loss(pred->value, item.targets));
        ad::release(std::move(pred));
    }
    return out;
}

}  // namespace mnif::train
