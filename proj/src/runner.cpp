#include "runner.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "metrics.hpp"

namespace mnif::run {

namespace {

namespace fs = std::filesystem;

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw io::IoError("cannot create output directory " + dir + ": " + ec.message());
}

std::string join(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

std::string zero_pad(int64_t v, int width) {
    std::string s = std::to_string(v);
    while (static_cast<int>(s.size()) < width) s.insert(s.begin(), '0');
    return s;
}

siren::SirenParams decode_inr(const io::Checkpoint& ckpt, const Tensor& phi) {
    return mix::collapse(ckpt.bank, ckpt.config.model, mix::coefficients(ckpt.head, ckpt.config.model, phi));
}

fields::ImageField decode_image(const io::Checkpoint& ckpt, const Tensor& phi) {
    const int64_t size = ckpt.config.data.image_size;
    siren::SirenParams inr = decode_inr(ckpt, phi);
    Tensor out = siren::forward(inr, ckpt.config.model.siren, fields::image_grid(size, size));
    return fields::pairs_to_image(out, size, size);
}

fields::VoxelField decode_voxel(const io::Checkpoint& ckpt, const Tensor& phi) {
    return fields::voxelize(decode_inr(ckpt, phi), ckpt.config.model.siren, ckpt.config.data.voxel_res);
}

std::vector<fields::ImageField> decode_views(const io::Checkpoint& ckpt, const Tensor& phi, int64_t n_views) {
    const auto& data = ckpt.config.data;
    const float ring_radius = 0.5f * (data.tnear + data.tfar);
    std::vector<fields::Camera> cams = io::camera_ring(n_views, data.view_size, data.view_size, ring_radius, 0.35f);
    siren::SirenParams inr = decode_inr(ckpt, phi);
    siren::SirenVars vars = siren::to_vars(inr, false);
    std::vector<fields::ImageField> views;
    for (const auto& cam : cams) {
        const int64_t n = cam.width * cam.height;
        fields::RayBatch rays;
        rays.origins = Tensor({n, 3});
        rays.directions = Tensor({n, 3});
        rays.tnear = data.tnear;
        rays.tfar = data.tfar;
        int64_t row = 0;
        for (int64_t py = 0; py < cam.height; ++py)
            for (int64_t px = 0; px < cam.width; ++px, ++row) {
                auto [o, d] = fields::camera_ray(cam, px, py);
                for (int64_t c = 0; c < 3; ++c) {
                    rays.origins.at2(row, c) = o[static_cast<size_t>(c)];
                    rays.directions.at2(row, c) = d[static_cast<size_t>(c)];
                }
            }
        Tensor depths = fields::midpoint_depths(n, data.samples_per_ray, data.tnear, data.tfar);
        ad::Var pixels = fields::render_rays(vars, ckpt.config.model.siren, rays, depths);
        views.push_back(fields::pairs_to_image(pixels->value, cam.height, cam.width));
        ad::release(std::move(pixels));
    }
    return views;
}

// Writes one decoded instance; returns the image used for contact sheets
// (empty for voxel instances).
fields::ImageField write_instance(const io::Checkpoint& ckpt, const Tensor& phi, const std::string& out_dir,
                                  const std::string& stem) {
    switch (ckpt.config.data.domain) {
        case io::Domain::kImage: {
            fields::ImageField img = decode_image(ckpt, phi);
            io::write_image(join(out_dir, stem + ".ppm"), img);
            return img;
        }
        case io::Domain::kVoxel: {
            io::write_voxel(join(out_dir, stem + ".vox"), decode_voxel(ckpt, phi));
            return {};
        }
        default: {
            std::vector<fields::ImageField> views = decode_views(ckpt, phi, ckpt.config.sample_views);
            for (size_t v = 0; v < views.size(); ++v)
                io::write_image(join(out_dir, stem + "_view_" + zero_pad(static_cast<int64_t>(v), 2) + ".ppm"),
                                views[v]);
            return views.front();
        }
    }
}

void parallel_over(int64_t n, int64_t threads, const std::function<void(int64_t)>& body) {
    if (threads <= 1 || n <= 1) {
        for (int64_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::vector<std::thread> pool;
    std::atomic<int64_t> next{0};
    std::vector<std::exception_ptr> errors(static_cast<size_t>(threads));
    for (int64_t t = 0; t < threads; ++t)
        pool.emplace_back([&, t] {
            try {
                for (int64_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) body(i);
            } catch (...) {
                errors[static_cast<size_t>(t)] = std::current_exception();
            }
        });
    for (auto& th : pool) th.join();
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);
}

const train::LatentTable& require_latents(const io::Checkpoint& ckpt) {
    if (!ckpt.latents.has_value() || ckpt.latents->size() == 0)
        throw StateError("checkpoint has no latent table section");
    return *ckpt.latents;
}

}  // namespace

void harmonize_model_for_domain(io::RunConfig& cfg) {
    switch (cfg.data.domain) {
        case io::Domain::kImage:
            cfg.model.siren.in_dim = 2;
            cfg.model.siren.out_dim = 3;
            cfg.model.siren.output_activation = siren::OutputActivation::kLinear;
            break;
        case io::Domain::kVoxel:
            cfg.model.siren.in_dim = 3;
            cfg.model.siren.out_dim = 1;
            cfg.model.siren.output_activation = siren::OutputActivation::kLinear;
            break;
        default:
            cfg.model.siren.in_dim = 3;
            cfg.model.siren.out_dim = 4;
            cfg.model.siren.output_activation = siren::OutputActivation::kRgbDensity;
            break;
    }
}

DatasetBundle make_dataset(const io::RunConfig& cfg) {
    DatasetBundle bundle;
    const auto& d = cfg.data;
    if (d.synth != io::SynthKind::kNone) {
        bundle.storage = io::synth_dataset(d.synth, d.count, cfg.seed, d);
        if (bundle.storage.domain != d.domain)
            throw io::ConfigError("the requested synthetic kind produces '" +
                                  io::domain_name(bundle.storage.domain) + "' data but data.domain is '" +
                                  io::domain_name(d.domain) + "'");
    } else if (!d.path.empty()) {
        bundle.storage.domain = d.domain;
        switch (d.domain) {
            case io::Domain::kImage: bundle.storage.images = io::load_image_dir(d.path); break;
            case io::Domain::kVoxel: bundle.storage.voxels = io::load_voxel_dir(d.path); break;
            default: throw io::ConfigError("nerf scenes load only from the synthetic generator (data.synth)");
        }
        if (bundle.storage.size() == 0) throw io::IoError("no dataset files found under " + d.path);
    } else {
        throw io::ConfigError("config names no dataset: set data.synth or data.path");
    }

    switch (d.domain) {
        case io::Domain::kImage:
            bundle.dataset = std::make_unique<fields::ImageDataset>(bundle.storage.images);
            break;
        case io::Domain::kVoxel:
            bundle.dataset = std::make_unique<fields::VoxelDataset>(bundle.storage.voxels, d.points_per_draw);
            break;
        default:
            bundle.dataset = std::make_unique<fields::SceneDataset>(bundle.storage.scenes, d.views_per_draw,
                                                                    d.pixels_per_view, d.samples_per_ray, d.tnear,
                                                                    d.tfar);
            break;
    }
    return bundle;
}

void train_stage1(io::RunConfig cfg, const std::string& out_dir, const LogLineFn& log) {
    harmonize_model_for_domain(cfg);
    cfg.model.validate();
    ensure_dir(out_dir);
    DatasetBundle bundle = make_dataset(cfg);

    {
        std::ofstream cfg_out(join(out_dir, "config.json"), std::ios::trunc);
        cfg_out << io::dump_config(cfg) << "\n";
    }
    std::ofstream log_file(join(out_dir, "train.log"), std::ios::trunc);
    auto on_log = [&](const train::LogEntry& e) {
        const std::string line = train::format_log_entry(e);
        log_file << line << "\n";
        log_file.flush();
        if (log) log(line);
    };

    const std::string last_path = join(out_dir, "last.mnif");
    bool have_snapshot = false;
    const int64_t total_epochs =
        cfg.method == io::Method::kMeta ? cfg.meta.epochs : cfg.autodec.epochs;
    const int64_t snapshot_every = std::max<int64_t>(1, total_epochs / 20);
    auto on_epoch = [&](int64_t epoch, const mix::BasisBank& bank, const mix::CoefficientHead& head,
                        const train::LatentTable* latents) {
        if (epoch % snapshot_every != 0) return;
        io::Checkpoint snap;
        snap.config = cfg;
        snap.stage = 1;
        snap.seed = cfg.seed;
        snap.bank = bank;
        snap.head = head;
        if (latents) snap.latents = *latents;
        io::save_checkpoint(last_path, snap);
        have_snapshot = true;
    };

    train::Stage1Result result;
    try {
        if (cfg.method == io::Method::kMeta)
            result = train::meta_train(*bundle.dataset, cfg.model, cfg.meta, cfg.seed, on_log, on_epoch);
        else
            result = train::auto_decode_train(*bundle.dataset, cfg.model, cfg.autodec, cfg.seed, on_log, on_epoch);
    } catch (const DivergenceError& e) {
        throw DivergenceError(std::string(e.what()) +
                              (have_snapshot ? "; last good checkpoint: " + last_path : "; no checkpoint was saved"));
    }

    io::Checkpoint ckpt;
    ckpt.config = cfg;
    ckpt.stage = 1;
    ckpt.seed = cfg.seed;
    ckpt.bank = std::move(result.bank);
    ckpt.head = std::move(result.head);
    if (cfg.method == io::Method::kMeta)
        ckpt.latents = train::harvest_latents(ckpt.bank, ckpt.head, cfg.model, *bundle.dataset, cfg.meta, cfg.seed);
    else
        ckpt.latents = std::move(result.latents);
    io::save_checkpoint(join(out_dir, "stage1.mnif"), ckpt);
}

void train_stage2(const io::RunConfig& cfg, const std::string& stage1_ckpt, const std::string& out_dir,
                  const LogLineFn& log) {
    io::Checkpoint ckpt = io::load_checkpoint(stage1_ckpt);
    const train::LatentTable& table = require_latents(ckpt);
    ensure_dir(out_dir);

    io::RunConfig effective = ckpt.config;
    effective.diffusion = cfg.diffusion;
    effective.seed = cfg.seed;
    effective.threads = cfg.threads;

    std::ofstream log_file(join(out_dir, "train.log"), std::ios::trunc);
    auto on_log = [&](const train::LogEntry& e) {
        char buf[120];
        std::snprintf(buf, sizeof(buf), "step=%lld epoch=%lld loss=%.8g lr=%.6g", static_cast<long long>(e.step),
                      static_cast<long long>(e.epoch), e.loss, e.lr);
        log_file << buf << "\n";
        log_file.flush();
        if (log) log(buf);
    };

    ddpm::Stage2Result result =
        ddpm::train_denoiser(table, effective.diffusion, Rng(effective.seed).fork("stage2").seed(), on_log);

    ckpt.config = effective;
    ckpt.stage = 2;
    ckpt.denoiser = std::move(result.denoiser);
    ckpt.stats = std::move(result.stats);
    io::save_checkpoint(join(out_dir, "stage2.mnif"), ckpt);
}

void sample(const io::Checkpoint& ckpt, const std::string& sampler, int64_t count, uint64_t seed,
            const std::string& out_dir, int64_t threads) {
    if (count < 0) throw ContractError("sample: negative count");
    ensure_dir(out_dir);

    std::vector<Tensor> latents;
    if (sampler == "ddpm") {
        if (!ckpt.denoiser.has_value() || !ckpt.stats.has_value())
            throw StateError("checkpoint has no denoiser section (stage 1 only); run train-stage2 first");
        latents = ddpm::sample(*ckpt.denoiser, *ckpt.stats, ckpt.config.diffusion, count,
                               Rng(seed).fork("sample").seed());
    } else if (sampler == "interp") {
        const train::LatentTable& table = require_latents(ckpt);
        Rng rng = Rng(seed).fork("interp-sample");
        for (int64_t i = 0; i < count; ++i)
            latents.push_back(ddpm::sample_by_interpolation(table, ckpt.config.interp_neighbors, rng).phi);
    } else {
        throw ContractError("unknown sampler '" + sampler + "' (expected ddpm or interp)");
    }

    std::vector<fields::ImageField> sheet_tiles(static_cast<size_t>(count));
    parallel_over(count, threads, [&](int64_t i) {
        sheet_tiles[static_cast<size_t>(i)] =
            write_instance(ckpt, latents[static_cast<size_t>(i)], out_dir, "sample_" + zero_pad(i, 3));
    });
    if (count > 0 && ckpt.config.data.domain != io::Domain::kVoxel) {
        const int64_t cols = std::max<int64_t>(1, static_cast<int64_t>(std::ceil(std::sqrt(static_cast<double>(count)))));
        io::write_image(join(out_dir, "contact_sheet.ppm"), io::tile_images(sheet_tiles, cols));
    }
}

void reconstruct(const io::Checkpoint& ckpt, const std::vector<int64_t>& ids, const std::string& out_dir) {
    const train::LatentTable& table = require_latents(ckpt);
    ensure_dir(out_dir);
    for (int64_t id : ids) {
        if (id < 0 || id >= table.size())
            throw StateError("unknown instance id " + std::to_string(id) + " (table has " +
                             std::to_string(table.size()) + " rows)");
        write_instance(ckpt, table.rows[static_cast<size_t>(id)], out_dir, "recon_" + zero_pad(id, 3));
    }
}

void interpolate(const io::Checkpoint& ckpt, const std::array<int64_t, 4>& ids, int64_t grid,
                 const std::string& out_dir) {
    const train::LatentTable& table = require_latents(ckpt);
    if (grid < 1) throw ContractError("interpolate: grid must be >= 1");
    for (int64_t id : ids)
        if (id < 0 || id >= table.size())
            throw StateError("unknown instance id " + std::to_string(id) + " (table has " +
                             std::to_string(table.size()) + " rows)");
    ensure_dir(out_dir);

    const Tensor& a = table.rows[static_cast<size_t>(ids[0])];
    const Tensor& b = table.rows[static_cast<size_t>(ids[1])];
    const Tensor& c = table.rows[static_cast<size_t>(ids[2])];
    const Tensor& d = table.rows[static_cast<size_t>(ids[3])];

    std::vector<fields::ImageField> tiles;
    for (int64_t r = 0; r < grid; ++r)
        for (int64_t col = 0; col < grid; ++col) {
            const float u = grid == 1 ? 0.0f : static_cast<float>(col) / static_cast<float>(grid - 1);
            const float v = grid == 1 ? 0.0f : static_cast<float>(r) / static_cast<float>(grid - 1);
            Tensor phi(a.shape());
            for (int64_t j = 0; j < phi.numel(); ++j)
                phi[j] = (1.0f - u) * (1.0f - v) * a[j] + u * (1.0f - v) * b[j] + (1.0f - u) * v * c[j] +
                         u * v * d[j];
            fields::ImageField tile = write_instance(ckpt, phi, out_dir,
                                                     "interp_r" + zero_pad(r, 2) + "_c" + zero_pad(col, 2));
            if (ckpt.config.data.domain != io::Domain::kVoxel) tiles.push_back(std::move(tile));
        }
    if (!tiles.empty()) io::write_image(join(out_dir, "interp_sheet.ppm"), io::tile_images(tiles, grid));
}

namespace {

int64_t queries_per_instance(const io::RunConfig& cfg) {
    switch (cfg.data.domain) {
        case io::Domain::kImage: return cfg.data.image_size * cfg.data.image_size;
        case io::Domain::kVoxel: return cfg.data.voxel_res * cfg.data.voxel_res * cfg.data.voxel_res;
        default: return cfg.sample_views * cfg.data.view_size * cfg.data.view_size * cfg.data.samples_per_ray;
    }
}

}  // namespace

std::string eval_checkpoint(const io::Checkpoint& ckpt, const std::string& metrics_csv,
                            const std::string& dataset_path, const std::string& out_path) {
    const train::LatentTable& table = require_latents(ckpt);
    io::RunConfig data_cfg = ckpt.config;
    if (!dataset_path.empty()) {
        data_cfg.data.path = dataset_path;
        data_cfg.data.synth = io::SynthKind::kNone;
    }
    DatasetBundle bundle = make_dataset(data_cfg);
    if (bundle.dataset->size() != table.size())
        throw StateError("latent table has " + std::to_string(table.size()) + " rows but the dataset has " +
                         std::to_string(bundle.dataset->size()) + " instances");

    std::vector<std::string> wanted;
    {
        std::stringstream ss(metrics_csv);
        std::string item;
        while (std::getline(ss, item, ','))
            if (!item.empty()) wanted.push_back(item);
    }
    if (wanted.empty()) throw ContractError("eval: empty metric list");

    const io::Domain domain = ckpt.config.data.domain;
    std::ostringstream report;
    std::ostringstream json;
    json << "{\n";
    bool first_json = true;
    auto emit = [&](const std::string& key, double value) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%.8g", value);
        report << key << "=" << buf << "\n";
        json << (first_json ? "" : ",\n") << "  \"" << key << "\": " << buf;
        first_json = false;
    };

    std::vector<double> mses;
    auto need_mses = [&]() {
        if (mses.empty())
            mses = train::evaluate_latents(ckpt.bank, ckpt.head, ckpt.config.model, *bundle.dataset, table);
    };

    for (const std::string& metric : wanted) {
        if (metric == "mse" || metric == "psnr") {
            need_mses();
            double mean = 0.0;
            for (double m : mses) mean += m;
            mean /= static_cast<double>(mses.size());
            if (metric == "mse")
                emit("mse", mean);
            else
                emit("psnr", metrics::psnr_from_mse(mean));
        } else if (metric == "iou") {
            if (domain != io::Domain::kVoxel) throw StateError("metric 'iou' is only defined for the voxel domain");
            double mean = 0.0;
            for (int64_t i = 0; i < table.size(); ++i) {
                fields::VoxelField recon = decode_voxel(ckpt, table.rows[static_cast<size_t>(i)]);
                mean += fields::voxel_iou(recon, bundle.storage.voxels[static_cast<size_t>(i)]);
            }
            emit("iou", mean / static_cast<double>(table.size()));
        } else if (metric == "chamfer") {
            if (domain != io::Domain::kVoxel)
                throw StateError("metric 'chamfer' is only defined for the voxel domain");
            double mean = 0.0;
            int64_t counted = 0;
            for (int64_t i = 0; i < table.size(); ++i) {
                Tensor recon = io::voxel_points(decode_voxel(ckpt, table.rows[static_cast<size_t>(i)]));
                Tensor ref = io::voxel_points(bundle.storage.voxels[static_cast<size_t>(i)]);
                if (recon.rows() == 0 || ref.rows() == 0) continue;
                mean += metrics::chamfer(recon, ref);
                ++counted;
            }
            if (counted == 0) throw StateError("chamfer: every reconstruction/reference pair was empty");
            emit("chamfer", mean / static_cast<double>(counted));
        } else if (metric == "coverage-mmd") {
            if (domain != io::Domain::kVoxel)
                throw StateError("metric 'coverage-mmd' is only defined for the voxel domain");
            std::vector<Tensor> gen, ref;
            for (int64_t i = 0; i < table.size(); ++i) {
                Tensor g = io::voxel_points(decode_voxel(ckpt, table.rows[static_cast<size_t>(i)]));
                Tensor r = io::voxel_points(bundle.storage.voxels[static_cast<size_t>(i)]);
                if (g.rows() > 0) gen.push_back(std::move(g));
                if (r.rows() > 0) ref.push_back(std::move(r));
            }
            metrics::CoverageMmd cm = metrics::coverage_mmd(gen, ref);
            emit("coverage", cm.coverage);
            emit("mmd", cm.mmd);
        } else {
            throw StateError("unknown metric '" + metric + "' (expected mse, psnr, iou, chamfer, coverage-mmd)");
        }
    }
    json << "\n}\n";
    if (!out_path.empty()) {
        std::ofstream out(out_path, std::ios::trunc);
        if (!out) throw io::IoError("cannot write metric report to " + out_path);
        out << json.str();
    }
    return report.str();
}

std::string inspect_checkpoint(const io::Checkpoint& ckpt) {
    std::ostringstream out;
    out << io::dump_config(ckpt.config) << "\n";
    out << "stage=" << ckpt.stage << "\n";
    out << "sections=bank,head";
    if (ckpt.latents.has_value()) out << ",latents";
    if (ckpt.denoiser.has_value()) out << ",denoiser";
    if (ckpt.stats.has_value()) out << ",stats";
    out << "\n";

    const int64_t queries = queries_per_instance(ckpt.config);
    metrics::CostReport rep = metrics::cost_report(ckpt.config.model, queries);
    out << "queries_per_instance=" << queries << "\n";
    out << "inference_params=" << rep.inference_params << "\n";
    out << "learnable_params=" << rep.learnable_params << "\n";
    out << "inference_gflops=" << static_cast<double>(rep.flops_per_instance) / 1e9 << "\n";
    out << "collapse_macs=" << rep.collapse_macs_per_instance << "\n";
    out << "peak_buffer_bytes=" << rep.peak_buffer_bytes << "\n";
    if (ckpt.latents.has_value()) out << "latent_rows=" << ckpt.latents->size() << "\n";
    if (ckpt.denoiser.has_value()) out << "denoiser_params=" << ckpt.denoiser->param_count() << "\n";

    if (ckpt.bank.num_mixtures >= 2) {
        std::vector<metrics::SimilarityMatrix> sims = metrics::basis_similarity(ckpt.bank);
        for (size_t layer = 0; layer < sims.size(); ++layer)
            out << "basis_abs_cos_layer" << layer << "=" << sims[layer].mean_off_diagonal() << "\n";
    }
    return out.str();
}

}  // namespace mnif::run
