#include "mnif/mnif.h"

#include <cstring>
#include <string>

#include "runner.hpp"

struct mnif_config {
    mnif::io::RunConfig cfg;
};

struct mnif_checkpoint {
    mnif::io::Checkpoint ckpt;
};

namespace {

thread_local std::string g_last_error;

mnif_status fail(mnif_status status, const std::string& message) {
    g_last_error = message;
    return status;
}

// Runs `fn`, translating the library's exception taxonomy onto status codes.
template <typename Fn>
mnif_status guarded(Fn&& fn) {
    try {
        fn();
        return MNIF_OK;
    } catch (const mnif::io::ConfigError& e) {
        return fail(MNIF_ERR_CONFIG, e.what());
    } catch (const mnif::io::FormatError& e) {
        return fail(MNIF_ERR_FORMAT, e.what());
    } catch (const mnif::io::IoError& e) {
        return fail(MNIF_ERR_IO, e.what());
    } catch (const mnif::run::StateError& e) {
        return fail(MNIF_ERR_STATE, e.what());
    } catch (const mnif::DivergenceError& e) {
        return fail(MNIF_ERR_DIVERGED, e.what());
    } catch (const mnif::ContractError& e) {
        return fail(MNIF_ERR_INVALID_ARGUMENT, e.what());
    } catch (const mnif::ShapeError& e) {
        return fail(MNIF_ERR_INVALID_ARGUMENT, e.what());
    } catch (const std::exception& e) {
        return fail(MNIF_ERR_INTERNAL, e.what());
    }
}

char* copy_string(const std::string& s) {
    char* out = new char[s.size() + 1];
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

mnif::run::LogLineFn wrap_log(mnif_log_fn log, void* user) {
    if (!log) return {};
    return [log, user](const std::string& line) { log(line.c_str(), user); };
}

}  // namespace

extern "C" {

const char* mnif_status_name(mnif_status status) {
    switch (status) {
        case MNIF_OK: return "ok";
        case MNIF_ERR_INVALID_ARGUMENT: return "invalid_argument";
        case MNIF_ERR_CONFIG: return "config";
        case MNIF_ERR_IO: return "io";
        case MNIF_ERR_FORMAT: return "format";
        case MNIF_ERR_STATE: return "state";
        case MNIF_ERR_DIVERGED: return "diverged";
        default: return "internal";
    }
}

const char* mnif_last_error(void) { return g_last_error.c_str(); }

void mnif_string_free(char* s) { delete[] s; }

mnif_status mnif_config_create(mnif_config** out) {
    if (!out) return fail(MNIF_ERR_INVALID_ARGUMENT, "null out pointer");
    return guarded([&] { *out = new mnif_config{mnif::io::default_config()}; });
}

mnif_status mnif_config_load(const char* path, mnif_config** out) {
    if (!path || !out) return fail(MNIF_ERR_INVALID_ARGUMENT, "null path or out pointer");
    return guarded([&] { *out = new mnif_config{mnif::io::load_config(path)}; });
}

mnif_status mnif_config_set(mnif_config* cfg, const char* key, const char* value) {
    if (!cfg || !key || !value) return fail(MNIF_ERR_INVALID_ARGUMENT, "null config, key or value");
    return guarded([&] { mnif::io::apply_override(cfg->cfg, key, value); });
}

mnif_status mnif_config_dump(const mnif_config* cfg, char** out_json) {
    if (!cfg || !out_json) return fail(MNIF_ERR_INVALID_ARGUMENT, "null config or out pointer");
    return guarded([&] { *out_json = copy_string(mnif::io::dump_config(cfg->cfg)); });
}

void mnif_config_free(mnif_config* cfg) { delete cfg; }

mnif_status mnif_train_stage1(const mnif_config* cfg, const char* out_dir, mnif_log_fn log, void* user) {
    if (!cfg || !out_dir) return fail(MNIF_ERR_INVALID_ARGUMENT, "null config or out_dir");
    return guarded([&] { mnif::run::train_stage1(cfg->cfg, out_dir, wrap_log(log, user)); });
}

mnif_status mnif_train_stage2(const mnif_config* cfg, const char* stage1_checkpoint, const char* out_dir,
                              mnif_log_fn log, void* user) {
    if (!cfg || !stage1_checkpoint || !out_dir)
        return fail(MNIF_ERR_INVALID_ARGUMENT, "null config, checkpoint path or out_dir");
    return guarded([&] { mnif::run::train_stage2(cfg->cfg, stage1_checkpoint, out_dir, wrap_log(log, user)); });
}

mnif_status mnif_checkpoint_open(const char* path, mnif_checkpoint** out) {
    if (!path || !out) return fail(MNIF_ERR_INVALID_ARGUMENT, "null path or out pointer");
    return guarded([&] { *out = new mnif_checkpoint{mnif::io::load_checkpoint(path)}; });
}

void mnif_checkpoint_close(mnif_checkpoint* ckpt) { delete ckpt; }

mnif_status mnif_checkpoint_stage(const mnif_checkpoint* ckpt, uint32_t* out_stage) {
    if (!ckpt || !out_stage) return fail(MNIF_ERR_INVALID_ARGUMENT, "null checkpoint or out pointer");
    *out_stage = ckpt->ckpt.stage;
    return MNIF_OK;
}

mnif_status mnif_checkpoint_config_dump(const mnif_checkpoint* ckpt, char** out_json) {
    if (!ckpt || !out_json) return fail(MNIF_ERR_INVALID_ARGUMENT, "null checkpoint or out pointer");
    return guarded([&] { *out_json = copy_string(mnif::io::dump_config(ckpt->ckpt.config)); });
}

mnif_status mnif_sample(const mnif_checkpoint* ckpt, const char* sampler, int64_t count, uint64_t seed,
                        const char* out_dir, int64_t threads) {
    if (!ckpt || !sampler || !out_dir) return fail(MNIF_ERR_INVALID_ARGUMENT, "null checkpoint, sampler or out_dir");
    return guarded([&] { mnif::run::sample(ckpt->ckpt, sampler, count, seed, out_dir, threads); });
}

mnif_status mnif_reconstruct(const mnif_checkpoint* ckpt, const int64_t* ids, int64_t n_ids, const char* out_dir) {
    if (!ckpt || (!ids && n_ids > 0) || !out_dir)
        return fail(MNIF_ERR_INVALID_ARGUMENT, "null checkpoint, ids or out_dir");
    return guarded([&] { mnif::run::reconstruct(ckpt->ckpt, std::vector<int64_t>(ids, ids + n_ids), out_dir); });
}

mnif_status mnif_interpolate(const mnif_checkpoint* ckpt, const int64_t ids[4], int64_t grid, const char* out_dir) {
    if (!ckpt || !ids || !out_dir) return fail(MNIF_ERR_INVALID_ARGUMENT, "null checkpoint, ids or out_dir");
    return guarded([&] {
        mnif::run::interpolate(ckpt->ckpt, std::array<int64_t, 4>{ids[0], ids[1], ids[2], ids[3]}, grid, out_dir);
    });
}

mnif_status mnif_eval(const mnif_checkpoint* ckpt, const char* metrics_csv, const char* dataset_path,
                      const char* out_path, char** out_report) {
    if (!ckpt || !metrics_csv || !out_report)
        return fail(MNIF_ERR_INVALID_ARGUMENT, "null checkpoint, metrics or out pointer");
    return guarded([&] {
        *out_report = copy_string(mnif::run::eval_checkpoint(ckpt->ckpt, metrics_csv,
                                                             dataset_path ? dataset_path : "",
                                                             out_path ? out_path : ""));
    });
}

mnif_status mnif_inspect(const mnif_checkpoint* ckpt, char** out_report) {
    if (!ckpt || !out_report) return fail(MNIF_ERR_INVALID_ARGUMENT, "null checkpoint or out pointer");
    return guarded([&] { *out_report = copy_string(mnif::run::inspect_checkpoint(ckpt->ckpt)); });
}

}  // extern "C"
