#include "storage.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace mnif::io {

using nlohmann::json;

namespace {

void check_keys(const json& j, const std::string& prefix, std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw ConfigError("config node '" + prefix + "' must be an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* k : allowed)
            if (it.key() == k) {
                ok = true;
                break;
            }
        if (!ok) throw ConfigError("unknown config key: " + prefix + it.key());
    }
}

template <class T>
void get_if(const json& j, const char* key, T& out, const std::string& prefix) {
    if (!j.contains(key)) return;
    try {
        j.at(key).get_to(out);
    } catch (const json::exception& e) {
        throw ConfigError("config key " + prefix + key + ": " + e.what());
    }
}

void get_enum(const json& j, const char* key, const std::string& prefix, std::string& out) {
    get_if(j, key, out, prefix);
}

[[noreturn]] void bad_enum(const std::string& prefix, const char* key, const std::string& value) {
    throw ConfigError("config key " + prefix + key + ": unknown value '" + value + "'");
}

}  // namespace

std::string domain_name(Domain d) {
    switch (d) {
        case Domain::kImage: return "image";
        case Domain::kVoxel: return "voxel";
        default: return "nerf";
    }
}

std::string method_name(Method m) { return m == Method::kMeta ? "meta" : "autodec"; }

namespace {

std::string synth_name(SynthKind k) {
    switch (k) {
        case SynthKind::kNone: return "none";
        case SynthKind::kGradients: return "gradients";
        case SynthKind::kGaussians2d: return "gaussians-2d";
        case SynthKind::kSpheres3d: return "spheres-3d";
        default: return "lambert-scenes";
    }
}

std::string mode_name(mix::CoefficientMode m) {
    switch (m) {
        case mix::CoefficientMode::kShared: return "shared";
        case mix::CoefficientMode::kLayerSpecific: return "layer_specific";
        default: return "latent_projected";
    }
}

std::string schedule_name(train::LrSchedule s) { return s == train::LrSchedule::kConstant ? "constant" : "cosine"; }

json config_to_json(const RunConfig& c) {
    json j;
    j["model"] = {
        {"in_dim", c.model.siren.in_dim},
        {"out_dim", c.model.siren.out_dim},
        {"width", c.model.siren.hidden_width},
        {"depth", c.model.siren.hidden_depth},
        {"w0", c.model.siren.w0},
        {"w0_on_input", c.model.siren.w0_on_input},
        {"output_activation",
         c.model.siren.output_activation == siren::OutputActivation::kLinear ? "linear" : "rgb_density"},
        {"mixtures", c.model.num_mixtures},
        {"latent_dim", c.model.latent_dim},
        {"coefficient_mode", mode_name(c.model.mode)},
        {"mix_output_layer", c.model.mix_output_layer},
    };
    j["train"] = {
        {"method", method_name(c.method)},
        {"meta",
         {{"inner_steps", c.meta.inner_steps},
          {"inner_lr", c.meta.inner_lr},
          {"outer_lr", c.meta.outer_lr},
          {"latent_init_std", c.meta.latent_init_std},
          {"second_order", c.meta.second_order},
          {"batch_size", c.meta.batch_size},
          {"epochs", c.meta.epochs},
          {"max_steps", c.meta.max_steps},
          {"lr_schedule", schedule_name(c.meta.lr_schedule)}}},
        {"autodec",
         {{"lr", c.autodec.lr},
          {"latent_init_std", c.autodec.latent_init_std},
          {"latent_weight_decay", c.autodec.latent_weight_decay},
          {"batch_size", c.autodec.batch_size},
          {"epochs", c.autodec.epochs},
          {"max_steps", c.autodec.max_steps},
          {"lr_schedule", schedule_name(c.autodec.lr_schedule)}}},
    };
    j["diffusion"] = {
        {"timesteps", c.diffusion.timesteps},
        {"schedule", c.diffusion.schedule == ddpm::NoiseSchedule::kLinear ? "linear" : "cosine"},
        {"denoiser_width", c.diffusion.denoiser_width},
        {"denoiser_blocks", c.diffusion.denoiser_blocks},
        {"lr", c.diffusion.lr},
        {"batch_size", c.diffusion.batch_size},
        {"epochs", c.diffusion.epochs},
        {"max_steps", c.diffusion.max_steps},
    };
    j["data"] = {
        {"domain", domain_name(c.data.domain)},
        {"path", c.data.path},
        {"synth", synth_name(c.data.synth)},
        {"count", c.data.count},
        {"image_size", c.data.image_size},
        {"voxel_res", c.data.voxel_res},
        {"surface_points", c.data.surface_points},
        {"points_per_draw", c.data.points_per_draw},
        {"views_per_scene", c.data.views_per_scene},
        {"view_size", c.data.view_size},
        {"views_per_draw", c.data.views_per_draw},
        {"pixels_per_view", c.data.pixels_per_view},
        {"samples_per_ray", c.data.samples_per_ray},
        {"tnear", c.data.tnear},
        {"tfar", c.data.tfar},
    };
    j["seed"] = c.seed;
    j["threads"] = c.threads;
    j["sample_views"] = c.sample_views;
    j["interp_neighbors"] = c.interp_neighbors;
    return j;
}

RunConfig config_from_json(const json& j) {
    RunConfig c;
    check_keys(j, "", {"model", "train", "diffusion", "data", "seed", "threads", "sample_views", "interp_neighbors"});
    if (j.contains("model")) {
        const json& m = j.at("model");
        check_keys(m, "model.",
                   {"in_dim", "out_dim", "width", "depth", "w0", "w0_on_input", "output_activation", "mixtures",
                    "latent_dim", "coefficient_mode", "mix_output_layer"});
        get_if(m, "in_dim", c.model.siren.in_dim, "model.");
        get_if(m, "out_dim", c.model.siren.out_dim, "model.");
        get_if(m, "width", c.model.siren.hidden_width, "model.");
        get_if(m, "depth", c.model.siren.hidden_depth, "model.");
        get_if(m, "w0", c.model.siren.w0, "model.");
        get_if(m, "w0_on_input", c.model.siren.w0_on_input, "model.");
        std::string act = "linear";
        if (c.model.siren.output_activation == siren::OutputActivation::kRgbDensity) act = "rgb_density";
        get_enum(m, "output_activation", "model.", act);
        if (act == "linear")
            c.model.siren.output_activation = siren::OutputActivation::kLinear;
        else if (act == "rgb_density")
            c.model.siren.output_activation = siren::OutputActivation::kRgbDensity;
        else
            bad_enum("model.", "output_activation", act);
        get_if(m, "mixtures", c.model.num_mixtures, "model.");
        get_if(m, "latent_dim", c.model.latent_dim, "model.");
        std::string mode = mode_name(c.model.mode);
        get_enum(m, "coefficient_mode", "model.", mode);
        if (mode == "shared")
            c.model.mode = mix::CoefficientMode::kShared;
        else if (mode == "layer_specific")
            c.model.mode = mix::CoefficientMode::kLayerSpecific;
        else if (mode == "latent_projected")
            c.model.mode = mix::CoefficientMode::kLatentProjected;
        else
            bad_enum("model.", "coefficient_mode", mode);
        get_if(m, "mix_output_layer", c.model.mix_output_layer, "model.");
    }
    if (j.contains("train")) {
        const json& t = j.at("train");
        check_keys(t, "train.", {"method", "meta", "autodec"});
        std::string method = method_name(c.method);
        get_enum(t, "method", "train.", method);
        if (method == "meta")
            c.method = Method::kMeta;
        else if (method == "autodec")
            c.method = Method::kAutodec;
        else
            bad_enum("train.", "method", method);
        auto parse_schedule = [](const json& node, const std::string& prefix, train::LrSchedule& out) {
            std::string s = schedule_name(out);
            get_enum(node, "lr_schedule", prefix, s);
            if (s == "constant")
                out = train::LrSchedule::kConstant;
            else if (s == "cosine")
                out = train::LrSchedule::kCosine;
            else
                throw ConfigError("config key " + prefix + "lr_schedule: unknown value '" + s + "'");
        };
        if (t.contains("meta")) {
            const json& mt = t.at("meta");
            check_keys(mt, "train.meta.",
                       {"inner_steps", "inner_lr", "outer_lr", "latent_init_std", "second_order", "batch_size",
                        "epochs", "max_steps", "lr_schedule"});
            get_if(mt, "inner_steps", c.meta.inner_steps, "train.meta.");
            get_if(mt, "inner_lr", c.meta.inner_lr, "train.meta.");
            get_if(mt, "outer_lr", c.meta.outer_lr, "train.meta.");
            get_if(mt, "latent_init_std", c.meta.latent_init_std, "train.meta.");
            get_if(mt, "second_order", c.meta.second_order, "train.meta.");
            get_if(mt, "batch_size", c.meta.batch_size, "train.meta.");
            get_if(mt, "epochs", c.meta.epochs, "train.meta.");
            get_if(mt, "max_steps", c.meta.max_steps, "train.meta.");
            parse_schedule(mt, "train.meta.", c.meta.lr_schedule);
        }
        if (t.contains("autodec")) {
            const json& a = t.at("autodec");
            check_keys(a, "train.autodec.",
                       {"lr", "latent_init_std", "latent_weight_decay", "batch_size", "epochs", "max_steps",
                        "lr_schedule"});
            get_if(a, "lr", c.autodec.lr, "train.autodec.");
            get_if(a, "latent_init_std", c.autodec.latent_init_std, "train.autodec.");
            get_if(a, "latent_weight_decay", c.autodec.latent_weight_decay, "train.autodec.");
            get_if(a, "batch_size", c.autodec.batch_size, "train.autodec.");
            get_if(a, "epochs", c.autodec.epochs, "train.autodec.");
            get_if(a, "max_steps", c.autodec.max_steps, "train.autodec.");
            parse_schedule(a, "train.autodec.", c.autodec.lr_schedule);
        }
    }
    if (j.contains("diffusion")) {
        const json& d = j.at("diffusion");
        check_keys(d, "diffusion.",
                   {"timesteps", "schedule", "denoiser_width", "denoiser_blocks", "lr", "batch_size", "epochs",
                    "max_steps"});
        get_if(d, "timesteps", c.diffusion.timesteps, "diffusion.");
        std::string sched = c.diffusion.schedule == ddpm::NoiseSchedule::kLinear ? "linear" : "cosine";
        get_enum(d, "schedule", "diffusion.", sched);
        if (sched == "linear")
            c.diffusion.schedule = ddpm::NoiseSchedule::kLinear;
        else if (sched == "cosine")
            c.diffusion.schedule = ddpm::NoiseSchedule::kCosine;
        else
            bad_enum("diffusion.", "schedule", sched);
        get_if(d, "denoiser_width", c.diffusion.denoiser_width, "diffusion.");
        get_if(d, "denoiser_blocks", c.diffusion.denoiser_blocks, "diffusion.");
        get_if(d, "lr", c.diffusion.lr, "diffusion.");
        get_if(d, "batch_size", c.diffusion.batch_size, "diffusion.");
        get_if(d, "epochs", c.diffusion.epochs, "diffusion.");
        get_if(d, "max_steps", c.diffusion.max_steps, "diffusion.");
    }
    if (j.contains("data")) {
        const json& d = j.at("data");
        check_keys(d, "data.",
                   {"domain", "path", "synth", "count", "image_size", "voxel_res", "surface_points",
                    "points_per_draw", "views_per_scene", "view_size", "views_per_draw", "pixels_per_view",
                    "samples_per_ray", "tnear", "tfar"});
        std::string domain = domain_name(c.data.domain);
        get_enum(d, "domain", "data.", domain);
        if (domain == "image")
            c.data.domain = Domain::kImage;
        else if (domain == "voxel")
            c.data.domain = Domain::kVoxel;
        else if (domain == "nerf")
            c.data.domain = Domain::kNerf;
        else
            bad_enum("data.", "domain", domain);
        get_if(d, "path", c.data.path, "data.");
        std::string synth = synth_name(c.data.synth);
        get_enum(d, "synth", "data.", synth);
        if (synth == "none")
            c.data.synth = SynthKind::kNone;
        else if (synth == "gradients")
            c.data.synth = SynthKind::kGradients;
        else if (synth == "gaussians-2d")
            c.data.synth = SynthKind::kGaussians2d;
        else if (synth == "spheres-3d")
            c.data.synth = SynthKind::kSpheres3d;
        else if (synth == "lambert-scenes")
            c.data.synth = SynthKind::kLambertScenes;
        else
            bad_enum("data.", "synth", synth);
        get_if(d, "count", c.data.count, "data.");
        get_if(d, "image_size", c.data.image_size, "data.");
        get_if(d, "voxel_res", c.data.voxel_res, "data.");
        get_if(d, "surface_points", c.data.surface_points, "data.");
        get_if(d, "points_per_draw", c.data.points_per_draw, "data.");
        get_if(d, "views_per_scene", c.data.views_per_scene, "data.");
        get_if(d, "view_size", c.data.view_size, "data.");
        get_if(d, "views_per_draw", c.data.views_per_draw, "data.");
        get_if(d, "pixels_per_view", c.data.pixels_per_view, "data.");
        get_if(d, "samples_per_ray", c.data.samples_per_ray, "data.");
        get_if(d, "tnear", c.data.tnear, "data.");
        get_if(d, "tfar", c.data.tfar, "data.");
    }
    get_if(j, "seed", c.seed, "");
    get_if(j, "threads", c.threads, "");
    get_if(j, "sample_views", c.sample_views, "");
    get_if(j, "interp_neighbors", c.interp_neighbors, "");
    return c;
}

}  // namespace

RunConfig default_config() { return RunConfig{}; }

RunConfig parse_config(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    return config_from_json(j);
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open config file " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_config(text);
}

void apply_override(RunConfig& cfg, const std::string& key, const std::string& value) {
    if (key.empty()) throw ConfigError("empty override key");
    json tree = config_to_json(cfg);
    json parsed;
    try {
        parsed = json::parse(value);
    } catch (const json::exception&) {
        parsed = value;
    }
    json* cur = &tree;
    size_t start = 0;
    while (true) {
        const size_t dot = key.find('.', start);
        const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (part.empty()) throw ConfigError("malformed override key: " + key);
        if (dot == std::string::npos) {
            (*cur)[part] = parsed;
            break;
        }
        cur = &((*cur)[part]);
        start = dot + 1;
    }
    cfg = config_from_json(tree);
}

std::string dump_config(const RunConfig& cfg) { return config_to_json(cfg).dump(2); }

// ---- binary helpers -----------------------------------------------------

uint32_t crc32(const void* data, size_t len) {
    static const auto table = [] {
        std::array<uint32_t, 256> t{};
        for (uint32_t i = 0; i < 256; ++i) {
            uint32_t c = i;
            for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
            t[i] = c;
        }
        return t;
    }();
    uint32_t crc = 0xFFFFFFFFu;
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < len; ++i) crc = table[(crc ^ p[i]) & 0xFFu] ^ (crc >> 8);
    return crc ^ 0xFFFFFFFFu;
}

namespace {

struct Writer {
    std::string buf;

    void u8(uint8_t v) { buf.push_back(static_cast<char>(v)); }
    void u32(uint32_t v) {
        for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    }
    void u64(uint64_t v) {
        for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    }
    void f32(float v) { u32(std::bit_cast<uint32_t>(v)); }
    void bytes(const void* p, size_t n) { buf.append(static_cast<const char*>(p), n); }

    void tensor(const Tensor& t) {
        u32(static_cast<uint32_t>(t.rank()));
        for (int64_t d : t.shape()) u64(static_cast<uint64_t>(d));
        for (int64_t i = 0; i < t.numel(); ++i) f32(t[i]);
    }
};

struct Reader {
    const std::string& buf;
    size_t pos = 0;
    std::string context;

    [[noreturn]] void fail(const std::string& what) const {
        throw FormatError(what + " in section '" + context + "' at byte " + std::to_string(pos));
    }
    void need(size_t n) const {
        if (pos + n > buf.size()) fail("truncated data");
    }
    uint8_t u8() {
        need(1);
        return static_cast<uint8_t>(buf[pos++]);
    }
    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
        pos += 4;
        return v;
    }
    uint64_t u64() {
        need(8);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
        pos += 8;
        return v;
    }
    float f32() { return std::bit_cast<float>(u32()); }

    Tensor tensor() {
        const uint32_t rank = u32();
        if (rank > 4) fail("implausible tensor rank " + std::to_string(rank));
        Shape shape;
        for (uint32_t i = 0; i < rank; ++i) shape.push_back(static_cast<int64_t>(u64()));
        const int64_t n = shape_numel(shape);
        if (n < 0 || static_cast<uint64_t>(n) * 4 > buf.size() - pos) fail("tensor payload exceeds section");
        Tensor t(shape);
        for (int64_t i = 0; i < n; ++i) t[i] = f32();
        return t;
    }
};

constexpr uint32_t kSectionConfig = 1;
constexpr uint32_t kSectionBank = 2;
constexpr uint32_t kSectionHead = 3;
constexpr uint32_t kSectionLatents = 4;
constexpr uint32_t kSectionDenoiser = 5;
constexpr uint32_t kSectionStats = 6;

const char* section_name(uint32_t id) {
    switch (id) {
        case kSectionConfig: return "config";
        case kSectionBank: return "bank";
        case kSectionHead: return "head";
        case kSectionLatents: return "latents";
        case kSectionDenoiser: return "denoiser";
        case kSectionStats: return "stats";
        default: return "unknown";
    }
}

void write_file_atomic(const std::string& path, const std::string& contents) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open " + tmp + " for writing");
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        if (!out) throw IoError("short write to " + tmp);
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("cannot rename " + tmp + " to " + path + ": " + ec.message());
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    std::vector<std::pair<uint32_t, std::string>> sections;

    {
        Writer w;
        const std::string cfg = dump_config(ckpt.config);
        w.u64(cfg.size());
        w.bytes(cfg.data(), cfg.size());
        sections.emplace_back(kSectionConfig, std::move(w.buf));
    }
    {
        Writer w;
        w.u32(static_cast<uint32_t>(ckpt.bank.num_mixtures));
        w.u32(static_cast<uint32_t>(ckpt.bank.weights.size()));
        for (size_t i = 0; i < ckpt.bank.weights.size(); ++i) {
            w.tensor(ckpt.bank.weights[i]);
            w.tensor(ckpt.bank.biases[i]);
        }
        sections.emplace_back(kSectionBank, std::move(w.buf));
    }
    {
        Writer w;
        w.u8(ckpt.head.projection.numel() > 0 ? 1 : 0);
        if (ckpt.head.projection.numel() > 0) w.tensor(ckpt.head.projection);
        w.tensor(ckpt.head.bias);
        sections.emplace_back(kSectionHead, std::move(w.buf));
    }
    if (ckpt.latents.has_value()) {
        Writer w;
        w.u64(static_cast<uint64_t>(ckpt.latents->size()));
        for (const auto& row : ckpt.latents->rows) w.tensor(row);
        sections.emplace_back(kSectionLatents, std::move(w.buf));
    }
    if (ckpt.denoiser.has_value()) {
        Writer w;
        const auto& d = *ckpt.denoiser;
        w.u64(static_cast<uint64_t>(d.latent_dim));
        w.u64(static_cast<uint64_t>(d.width));
        w.u64(static_cast<uint64_t>(d.blocks.size()));
        w.tensor(d.in_w);
        w.tensor(d.in_b);
        for (const auto& blk : d.blocks) {
            w.tensor(blk.w1);
            w.tensor(blk.b1);
            w.tensor(blk.temb_w);
            w.tensor(blk.w2);
            w.tensor(blk.b2);
        }
        w.tensor(d.out_w);
        w.tensor(d.out_b);
        sections.emplace_back(kSectionDenoiser, std::move(w.buf));
    }
    if (ckpt.stats.has_value()) {
        Writer w;
        w.tensor(ckpt.stats->mean);
        w.tensor(ckpt.stats->stddev);
        sections.emplace_back(kSectionStats, std::move(w.buf));
    }

    Writer header;
    header.bytes("MNIF", 4);
    header.u32(1);  // format version
    header.u32(ckpt.stage);
    header.u64(ckpt.seed);
    const std::string meta = "mnif-checkpoint";
    header.u32(static_cast<uint32_t>(meta.size()));
    header.bytes(meta.data(), meta.size());
    header.u32(static_cast<uint32_t>(sections.size()));

    // Section table is fixed-size once the count is known; a trailing CRC
    // covers everything before the payloads so header corruption cannot
    // pass unnoticed either.
    const size_t table_bytes = sections.size() * (4 + 8 + 8 + 4) + 4;
    uint64_t offset = header.buf.size() + table_bytes;
    for (const auto& [id, payload] : sections) {
        header.u32(id);
        header.u64(offset);
        header.u64(payload.size());
        header.u32(crc32(payload.data(), payload.size()));
        offset += payload.size();
    }
    header.u32(crc32(header.buf.data(), header.buf.size()));
    for (const auto& [id, payload] : sections) header.bytes(payload.data(), payload.size());
    write_file_atomic(path, header.buf);
}

Checkpoint load_checkpoint(const std::string& path) {
    const std::string file = read_file(path);
    Reader r{file, 0, "header"};
    r.need(4);
    if (file.compare(0, 4, "MNIF") != 0) throw FormatError("bad checkpoint magic in " + path);
    r.pos = 4;
    const uint32_t version = r.u32();
    if (version != 1) throw FormatError("unsupported checkpoint version " + std::to_string(version) + " in " + path);
    Checkpoint ckpt;
    ckpt.stage = r.u32();
    ckpt.seed = r.u64();
    const uint32_t meta_len = r.u32();
    r.need(meta_len);
    r.pos += meta_len;
    const uint32_t n_sections = r.u32();
    if (n_sections > 64) throw FormatError("implausible section count " + std::to_string(n_sections));

    struct Entry {
        uint32_t id;
        uint64_t offset, size;
        uint32_t crc;
    };
    std::vector<Entry> entries;
    for (uint32_t i = 0; i < n_sections; ++i) {
        Entry e{r.u32(), r.u64(), r.u64(), r.u32()};
        entries.push_back(e);
    }
    const size_t header_end = r.pos;
    const uint32_t header_crc = r.u32();
    if (crc32(file.data(), header_end) != header_crc)
        throw FormatError("checksum mismatch in section 'header'");
    for (const auto& e : entries) {
        if (e.offset + e.size > file.size())
            throw FormatError(std::string("section '") + section_name(e.id) + "' is truncated (expects " +
                              std::to_string(e.size) + " bytes at offset " + std::to_string(e.offset) + ")");
        if (crc32(file.data() + e.offset, e.size) != e.crc)
            throw FormatError(std::string("checksum mismatch in section '") + section_name(e.id) + "'");
    }

    bool have_bank = false, have_head = false;
    for (const auto& e : entries) {
        const std::string payload = file.substr(e.offset, e.size);
        Reader s{payload, 0, section_name(e.id)};
        switch (e.id) {
            case kSectionConfig: {
                const uint64_t len = s.u64();
                s.need(len);
                ckpt.config = parse_config(payload.substr(s.pos, len));
                break;
            }
            case kSectionBank: {
                ckpt.bank.num_mixtures = s.u32();
                const uint32_t layers = s.u32();
                if (layers > 64) s.fail("implausible layer count");
                for (uint32_t i = 0; i < layers; ++i) {
                    ckpt.bank.weights.push_back(s.tensor());
                    ckpt.bank.biases.push_back(s.tensor());
                }
                have_bank = true;
                break;
            }
            case kSectionHead: {
                if (s.u8() != 0) ckpt.head.projection = s.tensor();
                ckpt.head.bias = s.tensor();
                have_head = true;
                break;
            }
            case kSectionLatents: {
                const uint64_t rows = s.u64();
                train::LatentTable table;
                for (uint64_t i = 0; i < rows; ++i) table.rows.push_back(s.tensor());
                ckpt.latents = std::move(table);
                break;
            }
            case kSectionDenoiser: {
                ddpm::DenoiserMlp d;
                d.latent_dim = static_cast<int64_t>(s.u64());
                d.width = static_cast<int64_t>(s.u64());
                const uint64_t blocks = s.u64();
                if (blocks > 1024) s.fail("implausible block count");
                d.in_w = s.tensor();
                d.in_b = s.tensor();
                for (uint64_t i = 0; i < blocks; ++i) {
                    ddpm::DenoiserMlp::Block blk;
                    blk.w1 = s.tensor();
                    blk.b1 = s.tensor();
                    blk.temb_w = s.tensor();
                    blk.w2 = s.tensor();
                    blk.b2 = s.tensor();
                    d.blocks.push_back(std::move(blk));
                }
                d.out_w = s.tensor();
                d.out_b = s.tensor();
                ckpt.denoiser = std::move(d);
                break;
            }
            case kSectionStats: {
                ddpm::LatentStats st;
                st.mean = s.tensor();
                st.stddev = s.tensor();
                ckpt.stats = std::move(st);
                break;
            }
            default:
                throw FormatError("unknown section id " + std::to_string(e.id) + " in " + path);
        }
    }
    if (!have_bank || !have_head) throw FormatError("checkpoint " + path + " is missing bank or head sections");
    return ckpt;
}

// ---- images and voxels ----------------------------------------------------

void write_image(const std::string& path, const fields::ImageField& img) {
    if (img.height < 1 || img.width < 1 || static_cast<int64_t>(img.pixels.size()) != img.height * img.width * 3)
        throw ContractError("write_image: malformed image");
    std::string out = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
    out.reserve(out.size() + img.pixels.size());
    for (float v : img.pixels) {
        const float c = std::min(1.0f, std::max(0.0f, v));
        out.push_back(static_cast<char>(static_cast<int>(std::lround(c * 255.0f))));
    }
    write_file_atomic(path, out);
}

namespace {

// Whitespace-and-comment aware integer scanner for the PPM header.
int64_t ppm_int(const std::string& buf, size_t& pos, const std::string& path) {
    while (pos < buf.size()) {
        const char c = buf[pos];
        if (c == '#') {
            while (pos < buf.size() && buf[pos] != '\n') ++pos;
        } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
            ++pos;
        } else {
            break;
        }
    }
    if (pos >= buf.size() || buf[pos] < '0' || buf[pos] > '9')
        throw FormatError("expected integer in " + path + " at byte " + std::to_string(pos));
    int64_t v = 0;
    while (pos < buf.size() && buf[pos] >= '0' && buf[pos] <= '9') {
        v = v * 10 + (buf[pos] - '0');
        ++pos;
    }
    return v;
}

}  // namespace

fields::ImageField read_image(const std::string& path) {
    const std::string buf = read_file(path);
    if (buf.size() < 2 || buf[0] != 'P' || buf[1] != '6')
        throw FormatError("not a P6 ppm file: " + path + " (byte 0)");
    size_t pos = 2;
    const int64_t w = ppm_int(buf, pos, path);
    const int64_t h = ppm_int(buf, pos, path);
    const int64_t maxval = ppm_int(buf, pos, path);
    if (maxval != 255)
        throw FormatError("unsupported maxval " + std::to_string(maxval) + " in " + path + " at byte " +
                          std::to_string(pos));
    if (pos >= buf.size()) throw FormatError("missing header terminator in " + path + " at byte " + std::to_string(pos));
    ++pos;  // single whitespace byte after maxval
    const size_t need = static_cast<size_t>(w * h * 3);
    if (buf.size() - pos < need)
        throw FormatError("truncated pixel payload in " + path + " at byte " + std::to_string(buf.size()) +
                          " (expected " + std::to_string(pos + need) + " bytes)");
    fields::ImageField img;
    img.height = h;
    img.width = w;
    img.pixels.resize(need);
    for (size_t i = 0; i < need; ++i)
        img.pixels[i] = static_cast<float>(static_cast<unsigned char>(buf[pos + i])) / 255.0f;
    return img;
}

void write_voxel(const std::string& path, const fields::VoxelField& v) {
    const int64_t r = v.resolution;
    if (static_cast<int64_t>(v.occupancy.size()) != r * r * r) throw ContractError("write_voxel: malformed grid");
    Writer w;
    w.bytes("VOX1", 4);
    w.u32(static_cast<uint32_t>(r));
    w.u32(static_cast<uint32_t>(r));
    w.u32(static_cast<uint32_t>(r));
    for (uint8_t b : v.occupancy) w.u8(b ? 1 : 0);
    write_file_atomic(path, w.buf);
}

fields::VoxelField read_voxel(const std::string& path) {
    const std::string buf = read_file(path);
    if (buf.size() < 16 || buf.compare(0, 4, "VOX1") != 0)
        throw FormatError("not a VOX1 file: " + path + " (byte 0)");
    Reader r{buf, 4, "voxel"};
    const uint32_t dx = r.u32(), dy = r.u32(), dz = r.u32();
    if (dx != dy || dy != dz) throw FormatError("non-cubic voxel grid in " + path + " at byte 4");
    const size_t need = static_cast<size_t>(dx) * dy * dz;
    if (buf.size() - r.pos < need)
        throw FormatError("truncated voxel payload in " + path + " at byte " + std::to_string(buf.size()));
    fields::VoxelField v;
    v.resolution = static_cast<int64_t>(dx);
    v.occupancy.resize(need);
    for (size_t i = 0; i < need; ++i) {
        const unsigned char b = static_cast<unsigned char>(buf[r.pos + i]);
        if (b > 1)
            throw FormatError("invalid occupancy byte " + std::to_string(b) + " in " + path + " at byte " +
                              std::to_string(r.pos + i));
        v.occupancy[i] = b;
    }
    return v;
}

fields::ImageField tile_images(const std::vector<fields::ImageField>& tiles, int64_t columns) {
    if (tiles.empty() || columns < 1) throw ContractError("tile_images: nothing to tile");
    const int64_t th = tiles.front().height, tw = tiles.front().width;
    for (const auto& t : tiles)
        if (t.height != th || t.width != tw) throw ContractError("tile_images: tiles differ in size");
    const int64_t n = static_cast<int64_t>(tiles.size());
    const int64_t rows = (n + columns - 1) / columns;
    fields::ImageField sheet;
    sheet.height = rows * th;
    sheet.width = columns * tw;
    sheet.pixels.assign(static_cast<size_t>(sheet.height * sheet.width * 3), 0.0f);
    for (int64_t t = 0; t < n; ++t) {
        const int64_t r0 = (t / columns) * th, c0 = (t % columns) * tw;
        for (int64_t i = 0; i < th; ++i)
            for (int64_t j = 0; j < tw; ++j)
                for (int64_t c = 0; c < 3; ++c)
                    sheet.at(r0 + i, c0 + j, c) = tiles[static_cast<size_t>(t)].at(i, j, c);
    }
    return sheet;
}

// ---- synthetic datasets -----------------------------------------------

int64_t SynthDataset::size() const {
    switch (domain) {
        case Domain::kImage: return static_cast<int64_t>(images.size());
        case Domain::kVoxel: return static_cast<int64_t>(voxels.size());
        default: return static_cast<int64_t>(scenes.size());
    }
}

std::vector<fields::Camera> camera_ring(int64_t count, int64_t width, int64_t height, float radius, float elevation) {
    std::vector<fields::Camera> cams;
    for (int64_t v = 0; v < count; ++v) {
        const float theta = 2.0f * 3.14159265f * static_cast<float>(v) / static_cast<float>(count);
        const float ce = std::cos(elevation), se = std::sin(elevation);
        const float px = radius * ce * std::cos(theta);
        const float py = radius * se;
        const float pz = radius * ce * std::sin(theta);

        // Look at the origin with world up (0,1,0).
        float fx = -px, fy = -py, fz = -pz;
        const float fn = std::sqrt(fx * fx + fy * fy + fz * fz);
        fx /= fn;
        fy /= fn;
        fz /= fn;
        // right = normalize(cross(forward, up))
        float rx = -fz, ry = 0.0f, rz = fx;
        const float rn = std::sqrt(rx * rx + ry * ry + rz * rz);
        rx /= rn;
        ry /= rn;
        rz /= rn;
        // up = cross(right, forward)
        const float ux = ry * fz - rz * fy;
        const float uy = rz * fx - rx * fz;
        const float uz = rx * fy - ry * fx;

        fields::Camera cam;
        cam.width = width;
        cam.height = height;
        const float focal = 0.5f * static_cast<float>(width) / std::tan(0.35f);
        cam.fx = focal;
        cam.fy = focal;
        cam.cx = static_cast<float>(width) / 2.0f;
        cam.cy = static_cast<float>(height) / 2.0f;
        cam.rotation = {rx, ux, -fx, ry, uy, -fy, rz, uz, -fz};
        cam.position = {px, py, pz};
        cams.push_back(cam);
    }
    return cams;
}

Tensor voxel_points(const fields::VoxelField& v) {
    std::vector<float> pts;
    const int64_t r = v.resolution;
    for (int64_t z = 0; z < r; ++z)
        for (int64_t y = 0; y < r; ++y)
            for (int64_t x = 0; x < r; ++x)
                if (v.at(x, y, z)) {
                    pts.push_back((static_cast<float>(x) + 0.5f) / static_cast<float>(r) * 2.0f - 1.0f);
                    pts.push_back((static_cast<float>(y) + 0.5f) / static_cast<float>(r) * 2.0f - 1.0f);
                    pts.push_back((static_cast<float>(z) + 0.5f) / static_cast<float>(r) * 2.0f - 1.0f);
                }
    const int64_t n = static_cast<int64_t>(pts.size()) / 3;
    return Tensor({n, 3}, std::move(pts));
}

namespace {

fields::ImageField synth_gradient_image(int64_t size, Rng& rng) {
    fields::ImageField img;
    img.height = size;
    img.width = size;
    img.pixels.resize(static_cast<size_t>(size * size * 3));
    float ax[3], ay[3], base[3];
    for (int c = 0; c < 3; ++c) {
        ax[c] = rng.uniform(-0.2f, 0.2f);
        ay[c] = rng.uniform(-0.2f, 0.2f);
        base[c] = rng.uniform(0.45f, 0.55f);
    }
    for (int64_t i = 0; i < size; ++i)
        for (int64_t j = 0; j < size; ++j) {
            const float x = (static_cast<float>(j) + 0.5f) / static_cast<float>(size) * 2.0f - 1.0f;
            const float y = (static_cast<float>(i) + 0.5f) / static_cast<float>(size) * 2.0f - 1.0f;
            for (int64_t c = 0; c < 3; ++c) img.at(i, j, c) = base[c] + ax[c] * x + ay[c] * y;
        }
    return img;
}

fields::ImageField synth_gaussian_image(int64_t size, Rng& rng) {
    fields::ImageField img;
    img.height = size;
    img.width = size;
    img.pixels.assign(static_cast<size_t>(size * size * 3), 0.1f);
    const int bumps = 3;
    float cx[bumps], cy[bumps], s[bumps], amp[bumps][3];
    for (int b = 0; b < bumps; ++b) {
        cx[b] = rng.uniform(-0.6f, 0.6f);
        cy[b] = rng.uniform(-0.6f, 0.6f);
        s[b] = rng.uniform(0.2f, 0.5f);
        for (int c = 0; c < 3; ++c) amp[b][c] = rng.uniform(0.0f, 0.45f);
    }
    for (int64_t i = 0; i < size; ++i)
        for (int64_t j = 0; j < size; ++j) {
            const float x = (static_cast<float>(j) + 0.5f) / static_cast<float>(size) * 2.0f - 1.0f;
            const float y = (static_cast<float>(i) + 0.5f) / static_cast<float>(size) * 2.0f - 1.0f;
            for (int64_t c = 0; c < 3; ++c) {
                float v = img.at(i, j, c);
                for (int b = 0; b < bumps; ++b) {
                    const float dx = x - cx[b], dy = y - cy[b];
                    v += amp[b][c] * std::exp(-(dx * dx + dy * dy) / (2.0f * s[b] * s[b]));
                }
                img.at(i, j, c) = std::min(1.0f, std::max(0.0f, v));
            }
        }
    return img;
}

fields::VoxelField synth_sphere_voxel(int64_t res, int64_t surface_points, Rng& rng) {
    const float cx = rng.uniform(-0.3f, 0.3f);
    const float cy = rng.uniform(-0.3f, 0.3f);
    const float cz = rng.uniform(-0.3f, 0.3f);
    const float radius = rng.uniform(0.35f, 0.6f);
    auto inside = [&](float x, float y, float z) {
        const float dx = x - cx, dy = y - cy, dz = z - cz;
        return dx * dx + dy * dy + dz * dz <= radius * radius;
    };
    fields::VoxelField v;
    v.resolution = res;
    v.occupancy.resize(static_cast<size_t>(res * res * res));
    for (int64_t z = 0; z < res; ++z)
        for (int64_t y = 0; y < res; ++y)
            for (int64_t x = 0; x < res; ++x) {
                const float px = (static_cast<float>(x) + 0.5f) / static_cast<float>(res) * 2.0f - 1.0f;
                const float py = (static_cast<float>(y) + 0.5f) / static_cast<float>(res) * 2.0f - 1.0f;
                const float pz = (static_cast<float>(z) + 0.5f) / static_cast<float>(res) * 2.0f - 1.0f;
                v.occupancy[static_cast<size_t>((z * res + y) * res + x)] = inside(px, py, pz) ? 1 : 0;
            }
    if (surface_points > 0) {
        fields::SurfacePoints sp;
        sp.coords = Tensor({surface_points, 3});
        sp.targets = Tensor({surface_points, 1});
        for (int64_t i = 0; i < surface_points; ++i) {
            float dx, dy, dz, n;
            do {
                dx = rng.normal();
                dy = rng.normal();
                dz = rng.normal();
                n = std::sqrt(dx * dx + dy * dy + dz * dz);
            } while (n < 1e-6f);
            const float rr = radius + rng.uniform(-0.15f, 0.15f);
            auto clamp1 = [](float a) { return std::min(1.0f, std::max(-1.0f, a)); };
            const float px = clamp1(cx + dx / n * rr);
            const float py = clamp1(cy + dy / n * rr);
            const float pz = clamp1(cz + dz / n * rr);
            sp.coords.at2(i, 0) = px;
            sp.coords.at2(i, 1) = py;
            sp.coords.at2(i, 2) = pz;
            sp.targets.at2(i, 0) = inside(px, py, pz) ? 1.0f : 0.0f;
        }
        v.points = std::move(sp);
    }
    return v;
}

fields::RadianceScene synth_lambert_scene(const DataConfig& cfg, Rng& rng) {
    const float radius = rng.uniform(0.4f, 0.6f);
    const float albedo[3] = {rng.uniform(0.25f, 1.0f), rng.uniform(0.25f, 1.0f), rng.uniform(0.25f, 1.0f)};
    const float lx = 0.35f, ly = 0.65f, lz = 0.4f;
    const float ln = std::sqrt(lx * lx + ly * ly + lz * lz);
    const float light[3] = {lx / ln, ly / ln, lz / ln};

    fields::RadianceScene scene;
    const float ring_radius = 0.5f * (cfg.tnear + cfg.tfar);
    std::vector<fields::Camera> cams = camera_ring(cfg.views_per_scene, cfg.view_size, cfg.view_size,
                                                   ring_radius, 0.35f);
    for (const auto& cam : cams) {
        fields::View view;
        view.camera = cam;
        view.image.height = cam.height;
        view.image.width = cam.width;
        view.image.pixels.assign(static_cast<size_t>(cam.height * cam.width * 3), 0.0f);
        for (int64_t py = 0; py < cam.height; ++py)
            for (int64_t px = 0; px < cam.width; ++px) {
                auto [o, d] = fields::camera_ray(cam, px, py);
                const float b = o[0] * d[0] + o[1] * d[1] + o[2] * d[2];
                const float cterm = o[0] * o[0] + o[1] * o[1] + o[2] * o[2] - radius * radius;
                const float disc = b * b - cterm;
                if (disc < 0.0f) continue;
                const float t = -b - std::sqrt(disc);
                if (t <= 0.0f) continue;
                const float hx = o[0] + t * d[0], hy = o[1] + t * d[1], hz = o[2] + t * d[2];
                const float nx = hx / radius, ny = hy / radius, nz = hz / radius;
                const float lambert = std::max(0.0f, nx * light[0] + ny * light[1] + nz * light[2]);
                const float shade = 0.12f + 0.88f * lambert;
                for (int64_t c = 0; c < 3; ++c)
                    view.image.at(py, px, c) = std::min(1.0f, albedo[c] * shade);
            }
        scene.views.push_back(std::move(view));
    }
    return scene;
}

}  // namespace

SynthDataset synth_dataset(SynthKind kind, int64_t count, uint64_t seed, const DataConfig& cfg) {
    if (kind == SynthKind::kNone) throw ContractError("synth_dataset: kind 'none' names no generator");
    if (count < 1) throw ContractError("synth_dataset: count must be >= 1");
    SynthDataset out;
    Rng root = Rng(seed).fork("synth");
    for (int64_t i = 0; i < count; ++i) {
        Rng rng = root.fork(static_cast<uint64_t>(i));
        switch (kind) {
            case SynthKind::kGradients:
                out.domain = Domain::kImage;
                out.images.push_back(synth_gradient_image(cfg.image_size, rng));
                break;
            case SynthKind::kGaussians2d:
                out.domain = Domain::kImage;
                out.images.push_back(synth_gaussian_image(cfg.image_size, rng));
                break;
            case SynthKind::kSpheres3d:
                out.domain = Domain::kVoxel;
                out.voxels.push_back(synth_sphere_voxel(cfg.voxel_res, cfg.surface_points, rng));
                break;
            default:
                out.domain = Domain::kNerf;
                out.scenes.push_back(synth_lambert_scene(cfg, rng));
                break;
        }
    }
    return out;
}

std::vector<fields::ImageField> load_image_dir(const std::string& dir) {
    namespace fs = std::filesystem;
    std::vector<fs::path> files;
    std::error_code ec;
    for (const auto& entry : fs::directory_iterator(dir, ec))
        if (entry.path().extension() == ".ppm") files.push_back(entry.path());
    if (ec) throw IoError("cannot list directory " + dir + ": " + ec.message());
    std::sort(files.begin(), files.end());
    std::vector<fields::ImageField> out;
    for (const auto& f : files) out.push_back(read_image(f.string()));
    return out;
}

std::vector<fields::VoxelField> load_voxel_dir(const std::string& dir) {
    namespace fs = std::filesystem;
    std::vector<fs::path> files;
    std::error_code ec;
    for (const auto& entry : fs::directory_iterator(dir, ec))
        if (entry.path().extension() == ".vox") files.push_back(entry.path());
    if (ec) throw IoError("cannot list directory " + dir + ": " + ec.message());
    std::sort(files.begin(), files.end());
    std::vector<fields::VoxelField> out;
    for (const auto& f : files) out.push_back(read_voxel(f.string()));
    return out;
}

}  // namespace mnif::io
