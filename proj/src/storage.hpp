#pragma once

#include <optional>
#include <string>
#include <vector>

#include "diffusion.hpp"
#include "fields.hpp"
#include "mixture.hpp"
#include "trainers.hpp"

namespace mnif::io {

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed file contents; the message carries a byte offset where useful.
struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class Domain { kImage, kVoxel, kNerf };
enum class Method { kMeta, kAutodec };
enum class SynthKind { kNone, kGradients, kGaussians2d, kSpheres3d, kLambertScenes };

struct DataConfig {
    Domain domain = Domain::kImage;
    std::string path;
    SynthKind synth = SynthKind::kNone;
    int64_t count = 64;
    int64_t image_size = 16;
    int64_t voxel_res = 16;
    int64_t surface_points = 4096;
    int64_t points_per_draw = 1024;
    int64_t views_per_scene = 8;
    int64_t view_size = 16;
    int64_t views_per_draw = 2;
    int64_t pixels_per_view = 128;
    int64_t samples_per_ray = 32;
    float tnear = 1.0f;
    float tfar = 3.4f;
};

// The full configuration document. Every hyperparameter of every stage is
// addressable by a dotted key; unknown keys are rejected at parse time.
struct RunConfig {
    mix::MnifConfig model;
    Method method = Method::kMeta;
    train::MetaTrainConfig meta;
    train::AutoDecodeConfig autodec;
    ddpm::DiffusionConfig diffusion;
    DataConfig data;
    uint64_t seed = 0;
    int64_t threads = 1;
    int64_t sample_views = 8;
    int64_t interp_neighbors = 4;
};

RunConfig default_config();
RunConfig parse_config(const std::string& json_text);
RunConfig load_config(const std::string& path);
// Dotted-path override, e.g. ("model.width", "64"); the value is parsed as
// a JSON literal and falls back to a string.
void apply_override(RunConfig& cfg, const std::string& key, const std::string& value);
// Canonical (sorted-key) JSON; parse_config(dump_config(c)) == c.
std::string dump_config(const RunConfig& cfg);

// ---- checkpoints -----------------------------------------------------

struct Checkpoint {
    RunConfig config;
    uint32_t stage = 1;  // 1 after context adaptation, 2 once a denoiser is attached
    uint64_t seed = 0;
    mix::BasisBank bank;
    mix::CoefficientHead head;
    std::optional<train::LatentTable> latents;
    std::optional<ddpm::DenoiserMlp> denoiser;
    std::optional<ddpm::LatentStats> stats;
};

// Little-endian sectioned binary with per-section CRC32; files are written
// to a temp name and renamed into place.
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

uint32_t crc32(const void* data, size_t len);

// ---- interchange formats ----------------------------------------------

// Binary PPM (P6, maxval 255); pixels map linearly between [0,255] bytes
// and [0,1] floats.
void write_image(const std::string& path, const fields::ImageField& img);
fields::ImageField read_image(const std::string& path);

// Raw voxel grid: magic "VOX1", three u32 dims, then x-fastest {0,1} bytes.
void write_voxel(const std::string& path, const fields::VoxelField& v);
fields::VoxelField read_voxel(const std::string& path);

fields::ImageField tile_images(const std::vector<fields::ImageField>& tiles, int64_t columns);

// ---- synthetic datasets -----------------------------------------------

struct SynthDataset {
    Domain domain = Domain::kImage;
    std::vector<fields::ImageField> images;
    std::vector<fields::VoxelField> voxels;
    std::vector<fields::RadianceScene> scenes;

    int64_t size() const;
};

// Deterministic desk-scale stand-ins: affine gradient images, gaussian-bump
// images, sphere occupancy grids with near-surface samples, and
// single-sphere diffuse-shaded camera rings.
SynthDataset synth_dataset(SynthKind kind, int64_t count, uint64_t seed, const DataConfig& cfg);

// Ring of inward-looking cameras around the origin.
std::vector<fields::Camera> camera_ring(int64_t count, int64_t width, int64_t height, float radius, float elevation);

// Occupied-cell centers as a point set.
Tensor voxel_points(const fields::VoxelField& v);

std::vector<fields::ImageField> load_image_dir(const std::string& dir);
std::vector<fields::VoxelField> load_voxel_dir(const std::string& dir);

std::string domain_name(Domain d);
std::string method_name(Method m);

}  // namespace mnif::io
