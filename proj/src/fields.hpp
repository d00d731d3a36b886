#pragma once

#include <array>
#include <optional>
#include <vector>

#include "siren.hpp"
#include "trainers.hpp"

namespace mnif::fields {

// RGB image with float pixels in [0,1], row-major. Pixel (row i, col j)
// maps to the center-of-cell coordinate ((j+0.5)/w*2-1, (i+0.5)/h*2-1).
struct ImageField {
    int64_t height = 0;
    int64_t width = 0;
    std::vector<float> pixels;  // height*width*3

    float& at(int64_t i, int64_t j, int64_t c) { return pixels[static_cast<size_t>((i * width + j) * 3 + c)]; }
    float at(int64_t i, int64_t j, int64_t c) const { return pixels[static_cast<size_t>((i * width + j) * 3 + c)]; }
};

Tensor image_grid(int64_t height, int64_t width);
std::pair<Tensor, Tensor> image_to_pairs(const ImageField& img);
ImageField pairs_to_image(const Tensor& targets, int64_t height, int64_t width);

// Optional real-valued near-surface samples attached to a voxel grid.
struct SurfacePoints {
    Tensor coords;   // [n x 3] in [-1,1]^3
    Tensor targets;  // [n x 1] in {0,1}
};

// Dense occupancy grid; cell (x,y,z) lives at flat index (z*R + y)*R + x.
struct VoxelField {
    int64_t resolution = 0;
    std::vector<uint8_t> occupancy;
    std::optional<SurfacePoints> points;

    uint8_t at(int64_t x, int64_t y, int64_t z) const {
        return occupancy[static_cast<size_t>((z * resolution + y) * resolution + x)];
    }
};

Tensor voxel_grid(int64_t resolution);
std::pair<Tensor, Tensor> voxel_to_pairs(const VoxelField& v);
// Uniform subsample without replacement from the stored point set, or from
// the dense grid cells when no point set is attached.
std::pair<Tensor, Tensor> voxel_sample(const VoxelField& v, int64_t n_points, Rng rng);

// Camera-to-world pose; looks down -z in camera space.
struct Camera {
    int64_t width = 0;
    int64_t height = 0;
    float fx = 0, fy = 0, cx = 0, cy = 0;
    std::array<float, 9> rotation{1, 0, 0, 0, 1, 0, 0, 0, 1};  // row-major
    std::array<float, 3> position{0, 0, 0};
};

// Ray through the center of pixel (px, py); direction is unit length.
std::pair<std::array<float, 3>, std::array<float, 3>> camera_ray(const Camera& cam, int64_t px, int64_t py);

struct View {
    Camera camera;
    ImageField image;
};

struct RadianceScene {
    std::vector<View> views;
};

struct RayBatch {
    Tensor origins;     // [n x 3]
    Tensor directions;  // [n x 3], unit norm
    float tnear = 0.0f;
    float tfar = 1.0f;

    int64_t size() const { return origins.numel() == 0 ? 0 : origins.rows(); }
    void validate() const;
};

// Random view/pixel subsample with target colors.
std::pair<RayBatch, Tensor> scene_to_pairs(const RadianceScene& scene, int64_t views, int64_t pixels_per_view,
                                           Rng rng);

// Jittered-uniform depths, one bin per sample, ascending along each ray.
Tensor stratified_depths(int64_t n_rays, int64_t samples, float tnear, float tfar, Rng rng);
// Bin midpoints, no jitter.
Tensor midpoint_depths(int64_t n_rays, int64_t samples, float tnear, float tfar);

// Alpha compositing over a black background: alpha_i = 1 - exp(-sigma_i
// delta_i), w_i = alpha_i prod_{j<i} (1 - alpha_j), pixel = sum w_i c_i.
ad::Var composite(const ad::Var& rgb_flat, const ad::Var& density, const Tensor& deltas);
// Per-sample weights for the same rule, eager.
Tensor composite_weights(const Tensor& density, const Tensor& deltas);
Tensor ray_deltas(const Tensor& depths, float tfar);

ad::Var render_rays(const siren::SirenVars& inr, const siren::SirenConfig& cfg, const RayBatch& rays,
                    const Tensor& depths);
Tensor render_rays(const siren::SirenParams& inr, const siren::SirenConfig& cfg, const RayBatch& rays,
                   int64_t samples_per_ray, Rng rng);

// Dense grid evaluation thresholded to occupancy.
VoxelField voxelize(const siren::SirenParams& inr, const siren::SirenConfig& cfg, int64_t resolution,
                    float threshold = 0.5f);

double voxel_iou(const VoxelField& a, const VoxelField& b);

// Trainer adapters.

class ImageDataset : public train::TrainDataset {
public:
    explicit ImageDataset(std::vector<ImageField> images);
    int64_t size() const override { return static_cast<int64_t>(images_.size()); }
    train::TrainItem item(int64_t index, Rng rng) const override;
    train::TrainItem full_item(int64_t index) const override;
    const ImageField& image(int64_t index) const { return images_[static_cast<size_t>(index)]; }

private:
    std::vector<ImageField> images_;
};

class VoxelDataset : public train::TrainDataset {
public:
    VoxelDataset(std::vector<VoxelField> voxels, int64_t points_per_draw);
    int64_t size() const override { return static_cast<int64_t>(voxels_.size()); }
    train::TrainItem item(int64_t index, Rng rng) const override;
    train::TrainItem full_item(int64_t index) const override;
    const VoxelField& voxel(int64_t index) const { return voxels_[static_cast<size_t>(index)]; }

private:
    std::vector<VoxelField> voxels_;
    int64_t points_per_draw_;
};

// Packs each draw as rays plus pre-sampled depths so items stay plain
// tensors: coords row = [origin(3) | direction(3) | depths(S)].
class SceneDataset : public train::TrainDataset {
public:
    SceneDataset(std::vector<RadianceScene> scenes, int64_t views_per_draw, int64_t pixels_per_view,
                 int64_t samples_per_ray, float tnear, float tfar);
    int64_t size() const override { return static_cast<int64_t>(scenes_.size()); }
    train::TrainItem item(int64_t index, Rng rng) const override;
    train::TrainItem full_item(int64_t index) const override;
    ad::Var predict(const siren::SirenVars& inr, const siren::SirenConfig& cfg,
                    const train::TrainItem& item) const override;
    const RadianceScene& scene(int64_t index) const { return scenes_[static_cast<size_t>(index)]; }
    int64_t samples_per_ray() const { return samples_per_ray_; }
    float tnear() const { return tnear_; }
    float tfar() const { return tfar_; }

private:
    train::TrainItem pack(const RayBatch& rays, const Tensor& colors, const Tensor& depths) const;

    std::vector<RadianceScene> scenes_;
    int64_t views_per_draw_;
    int64_t pixels_per_view_;
    int64_t samples_per_ray_;
    float tnear_;
    float tfar_;
};

}  // namespace mnif::fields
