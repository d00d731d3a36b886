// Operator CLI. Everything goes through the C API in mnif/mnif.h; this
// translation unit deliberately has no view into the library internals.
#include <cstdint>
#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <mnif/mnif.h>

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

int exit_code_for(mnif_status s) {
    switch (s) {
        case MNIF_OK: return 0;
        case MNIF_ERR_CONFIG:
        case MNIF_ERR_INVALID_ARGUMENT:
        case MNIF_ERR_STATE: return kExitUsage;
        default: return kExitRuntime;
    }
}

int report_failure(mnif_status s) {
    std::fprintf(stderr, "error (%s): %s\n", mnif_status_name(s), mnif_last_error());
    return exit_code_for(s);
}

void print_log_line(const char* line, void*) { std::printf("%s\n", line); }

struct ConfigHandle {
    mnif_config* cfg = nullptr;
    ~ConfigHandle() { mnif_config_free(cfg); }
};

struct CheckpointHandle {
    mnif_checkpoint* ckpt = nullptr;
    ~CheckpointHandle() { mnif_checkpoint_close(ckpt); }
};

struct CommonOpts {
    std::string config_path;
    std::vector<std::string> overrides;  // key=value
    uint64_t seed = 0;
    bool seed_given = false;
    int64_t threads = 1;
};

// Builds the resolved config: file, then named-flag mappings, then --set
// overrides, then --seed/--threads.
int build_config(const CommonOpts& opts, const std::vector<std::pair<std::string, std::string>>& flag_keys,
                 ConfigHandle& out) {
    mnif_status s = opts.config_path.empty() ? mnif_config_create(&out.cfg)
                                             : mnif_config_load(opts.config_path.c_str(), &out.cfg);
    if (s != MNIF_OK) return report_failure(s);
    for (const auto& [key, value] : flag_keys) {
        if (value.empty()) continue;
        if ((s = mnif_config_set(out.cfg, key.c_str(), value.c_str())) != MNIF_OK) return report_failure(s);
    }
    for (const std::string& kv : opts.overrides) {
        const size_t eq = kv.find('=');
        if (eq == std::string::npos || eq == 0) {
            std::fprintf(stderr, "error: --set expects key=value, got '%s'\n", kv.c_str());
            return kExitUsage;
        }
        if ((s = mnif_config_set(out.cfg, kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str())) != MNIF_OK)
            return report_failure(s);
    }
    if (opts.seed_given &&
        (s = mnif_config_set(out.cfg, "seed", std::to_string(opts.seed).c_str())) != MNIF_OK)
        return report_failure(s);
    if ((s = mnif_config_set(out.cfg, "threads", std::to_string(opts.threads).c_str())) != MNIF_OK)
        return report_failure(s);
    return -1;  // no exit requested
}

int print_config(const ConfigHandle& cfg) {
    char* text = nullptr;
    mnif_status s = mnif_config_dump(cfg.cfg, &text);
    if (s != MNIF_OK) return report_failure(s);
    std::printf("resolved config:\n%s\n", text);
    mnif_string_free(text);
    return -1;
}

int open_and_print(const std::string& path, CheckpointHandle& out) {
    mnif_status s = mnif_checkpoint_open(path.c_str(), &out.ckpt);
    if (s != MNIF_OK) return report_failure(s);
    char* text = nullptr;
    if ((s = mnif_checkpoint_config_dump(out.ckpt, &text)) != MNIF_OK) return report_failure(s);
    std::printf("resolved config:\n%s\n", text);
    mnif_string_free(text);
    return -1;
}

std::vector<int64_t> parse_ids(const std::string& csv) {
    std::vector<int64_t> ids;
    size_t start = 0;
    while (start <= csv.size()) {
        const size_t comma = csv.find(',', start);
        const std::string part = csv.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
        if (!part.empty()) ids.push_back(std::stoll(part));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return ids;
}

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("--config", opts.config_path, "JSON config file");
    cmd->add_option("--set", opts.overrides, "override a config key, e.g. --set model.width=64")
        ->take_all()
        ->expected(-1);
    cmd->add_option("--seed", opts.seed, "root seed for all random streams")->each([&opts](const std::string&) {
        opts.seed_given = true;
    });
    cmd->add_option("--threads", opts.threads, "worker threads for embarrassingly parallel decodes");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"mnif: generative neural fields from mixtures of implicit basis networks"};
    app.require_subcommand(1);

    // train-stage1
    auto* stage1 = app.add_subcommand("train-stage1", "context adaptation (meta-learning or auto-decoding)");
    CommonOpts s1_opts;
    std::string s1_method, s1_domain, s1_synth, s1_dataset, s1_out = "out";
    add_common(stage1, s1_opts);
    stage1->add_option("--method", s1_method, "meta | autodec");
    stage1->add_option("--domain", s1_domain, "image | voxel | nerf");
    stage1->add_option("--synth", s1_synth, "synthetic dataset kind (gradients, gaussians-2d, spheres-3d, lambert-scenes)");
    stage1->add_option("--dataset", s1_dataset, "directory of .ppm or .vox files");
    stage1->add_option("--out", s1_out, "output directory");

    // train-stage2
    auto* stage2 = app.add_subcommand("train-stage2", "latent diffusion prior over harvested latents");
    CommonOpts s2_opts;
    std::string s2_ckpt, s2_out = "out";
    add_common(stage2, s2_opts);
    stage2->add_option("--checkpoint", s2_ckpt, "stage-1 checkpoint")->required();
    stage2->add_option("--out", s2_out, "output directory");

    // sample
    auto* sample = app.add_subcommand("sample", "decode fresh instances from a trained artifact");
    std::string sm_ckpt, sm_sampler = "ddpm", sm_out = "samples";
    int64_t sm_count = 4, sm_threads = 1;
    uint64_t sm_seed = 0;
    sample->add_option("--checkpoint", sm_ckpt, "checkpoint to sample from")->required();
    sample->add_option("--count", sm_count, "number of instances");
    sample->add_option("--sampler", sm_sampler, "ddpm | interp");
    sample->add_option("--seed", sm_seed, "sampling seed");
    sample->add_option("--threads", sm_threads, "decode threads");
    sample->add_option("--out", sm_out, "output directory");

    // reconstruct
    auto* recon = app.add_subcommand("reconstruct", "decode training instances from stored latents");
    std::string rc_ckpt, rc_ids, rc_out = "recon";
    recon->add_option("--checkpoint", rc_ckpt)->required();
    recon->add_option("--ids", rc_ids, "comma-separated instance ids")->required();
    recon->add_option("--out", rc_out, "output directory");

    // interpolate
    auto* interp = app.add_subcommand("interpolate", "bilinear latent grid between four instances");
    std::string ip_ckpt, ip_ids, ip_out = "interp";
    int64_t ip_grid = 4;
    interp->add_option("--checkpoint", ip_ckpt)->required();
    interp->add_option("--ids", ip_ids, "four corner ids a,b,c,d")->required();
    interp->add_option("--grid", ip_grid, "sheet side length");
    interp->add_option("--out", ip_out, "output directory");

    // eval
    auto* eval = app.add_subcommand("eval", "metric report against the training dataset");
    std::string ev_ckpt, ev_metrics = "mse,psnr", ev_dataset, ev_out;
    eval->add_option("--checkpoint", ev_ckpt)->required();
    eval->add_option("--metrics", ev_metrics, "comma-separated: mse, psnr, iou, chamfer, coverage-mmd");
    eval->add_option("--dataset", ev_dataset, "override dataset directory");
    eval->add_option("--out", ev_out, "write the machine-readable report here");

    // inspect
    auto* inspect = app.add_subcommand("inspect", "config, cost accounting and basis similarity");
    std::string in_ckpt;
    inspect->add_option("--checkpoint", in_ckpt)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        app.exit(e);
        return kExitUsage;
    }

    mnif_status s = MNIF_OK;
    if (stage1->parsed()) {
        ConfigHandle cfg;
        int rc = build_config(s1_opts,
                              {{"train.method", s1_method},
                               {"data.domain", s1_domain},
                               {"data.synth", s1_synth},
                               {"data.path", s1_dataset}},
                              cfg);
        if (rc >= 0) return rc;
        if (s1_synth.empty() && s1_dataset.empty() && s1_opts.config_path.empty()) {
            std::fprintf(stderr, "error: train-stage1 needs --synth, --dataset or a --config naming one\n");
            return kExitUsage;
        }
        if ((rc = print_config(cfg)) >= 0) return rc;
        s = mnif_train_stage1(cfg.cfg, s1_out.c_str(), print_log_line, nullptr);
        if (s != MNIF_OK) return report_failure(s);
        std::printf("stage-1 artifact written to %s/stage1.mnif\n", s1_out.c_str());
    } else if (stage2->parsed()) {
        ConfigHandle cfg;
        int rc = build_config(s2_opts, {}, cfg);
        if (rc >= 0) return rc;
        if ((rc = print_config(cfg)) >= 0) return rc;
        s = mnif_train_stage2(cfg.cfg, s2_ckpt.c_str(), s2_out.c_str(), print_log_line, nullptr);
        if (s != MNIF_OK) return report_failure(s);
        std::printf("stage-2 artifact written to %s/stage2.mnif\n", s2_out.c_str());
    } else if (sample->parsed()) {
        CheckpointHandle ckpt;
        int rc = open_and_print(sm_ckpt, ckpt);
        if (rc >= 0) return rc;
        s = mnif_sample(ckpt.ckpt, sm_sampler.c_str(), sm_count, sm_seed, sm_out.c_str(), sm_threads);
        if (s != MNIF_OK) return report_failure(s);
        std::printf("%lld instances written to %s\n", static_cast<long long>(sm_count), sm_out.c_str());
    } else if (recon->parsed()) {
        CheckpointHandle ckpt;
        int rc = open_and_print(rc_ckpt, ckpt);
        if (rc >= 0) return rc;
        std::vector<int64_t> ids = parse_ids(rc_ids);
        s = mnif_reconstruct(ckpt.ckpt, ids.data(), static_cast<int64_t>(ids.size()), rc_out.c_str());
        if (s != MNIF_OK) return report_failure(s);
        std::printf("%zu reconstructions written to %s\n", ids.size(), rc_out.c_str());
    } else if (interp->parsed()) {
        CheckpointHandle ckpt;
        int rc = open_and_print(ip_ckpt, ckpt);
        if (rc >= 0) return rc;
        std::vector<int64_t> ids = parse_ids(ip_ids);
        if (ids.size() != 4) {
            std::fprintf(stderr, "error: interpolate needs exactly four ids, got %zu\n", ids.size());
            return kExitUsage;
        }
        s = mnif_interpolate(ckpt.ckpt, ids.data(), ip_grid, ip_out.c_str());
        if (s != MNIF_OK) return report_failure(s);
        std::printf("interpolation sheet written to %s\n", ip_out.c_str());
    } else if (eval->parsed()) {
        CheckpointHandle ckpt;
        int rc = open_and_print(ev_ckpt, ckpt);
        if (rc >= 0) return rc;
        char* report = nullptr;
        s = mnif_eval(ckpt.ckpt, ev_metrics.c_str(), ev_dataset.empty() ? nullptr : ev_dataset.c_str(),
                      ev_out.empty() ? nullptr : ev_out.c_str(), &report);
        if (s != MNIF_OK) return report_failure(s);
        std::printf("%s", report);
        mnif_string_free(report);
    } else if (inspect->parsed()) {
        CheckpointHandle ckpt;
        mnif_status open_status = mnif_checkpoint_open(in_ckpt.c_str(), &ckpt.ckpt);
        if (open_status != MNIF_OK) return report_failure(open_status);
        char* report = nullptr;
        s = mnif_inspect(ckpt.ckpt, &report);
        if (s != MNIF_OK) return report_failure(s);
        std::printf("%s", report);
        mnif_string_free(report);
    }
    return 0;
}
