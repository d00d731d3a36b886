#include "fields.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mnif::fields {

namespace {

std::vector<int64_t> sample_without_replacement(int64_t available, int64_t n, Rng& rng) {
    std::vector<int64_t> idx(static_cast<size_t>(available));
    std::iota(idx.begin(), idx.end(), 0);
    for (int64_t i = 0; i < n; ++i) {
        const int64_t j = i + static_cast<int64_t>(rng.next_u64() % static_cast<uint64_t>(available - i));
        std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(j)]);
    }
    idx.resize(static_cast<size_t>(n));
    return idx;
}

float cell_coord(int64_t index, int64_t extent) {
    return (static_cast<float>(index) + 0.5f) / static_cast<float>(extent) * 2.0f - 1.0f;
}

}  // namespace

Tensor image_grid(int64_t height, int64_t width) {
    Tensor coords({height * width, 2});
    for (int64_t i = 0; i < height; ++i)
        for (int64_t j = 0; j < width; ++j) {
            const int64_t r = i * width + j;
            coords.at2(r, 0) = cell_coord(j, width);
            coords.at2(r, 1) = cell_coord(i, height);
        }
    return coords;
}

std::pair<Tensor, Tensor> image_to_pairs(const ImageField& img) {
    if (img.height < 1 || img.width < 1 || static_cast<int64_t>(img.pixels.size()) != img.height * img.width * 3)
        throw ContractError("image_to_pairs: malformed image");
    Tensor targets({img.height * img.width, 3}, img.pixels);
    return {image_grid(img.height, img.width), std::move(targets)};
}

ImageField pairs_to_image(const Tensor& targets, int64_t height, int64_t width) {
    if (targets.rank() != 2 || targets.cols() != 3 || targets.rows() != height * width)
        throw ShapeError("pairs_to_image: targets " + targets.shape_string() + " do not form a " +
                         std::to_string(height) + "x" + std::to_string(width) + " image");
    ImageField img;
    img.height = height;
    img.width = width;
    img.pixels = targets.data();
    return img;
}

Tensor voxel_grid(int64_t resolution) {
    const int64_t r = resolution;
    Tensor coords({r * r * r, 3});
    int64_t row = 0;
    for (int64_t z = 0; z < r; ++z)
        for (int64_t y = 0; y < r; ++y)
            for (int64_t x = 0; x < r; ++x, ++row) {
                coords.at2(row, 0) = cell_coord(x, r);
                coords.at2(row, 1) = cell_coord(y, r);
                coords.at2(row, 2) = cell_coord(z, r);
            }
    return coords;
}

std::pair<Tensor, Tensor> voxel_to_pairs(const VoxelField& v) {
    const int64_t n = v.resolution * v.resolution * v.resolution;
    if (static_cast<int64_t>(v.occupancy.size()) != n) throw ContractError("voxel_to_pairs: malformed voxel grid");
    Tensor targets({n, 1});
    for (int64_t i = 0; i < n; ++i) targets[i] = static_cast<float>(v.occupancy[static_cast<size_t>(i)]);
    return {voxel_grid(v.resolution), std::move(targets)};
}

std::pair<Tensor, Tensor> voxel_sample(const VoxelField& v, int64_t n_points, Rng rng) {
    Tensor all_coords, all_targets;
    if (v.points.has_value()) {
        all_coords = v.points->coords;
        all_targets = v.points->targets;
    } else {
        std::tie(all_coords, all_targets) = voxel_to_pairs(v);
    }
    const int64_t available = all_coords.rows();
    if (n_points > available)
        throw ContractError("voxel_sample: requested " + std::to_string(n_points) + " of " +
                            std::to_string(available) + " points");
    std::vector<int64_t> pick = sample_without_replacement(available, n_points, rng);
    Tensor coords({n_points, 3}), targets({n_points, 1});
    for (int64_t i = 0; i < n_points; ++i) {
        const int64_t s = pick[static_cast<size_t>(i)];
        for (int64_t c = 0; c < 3; ++c) coords.at2(i, c) = all_coords.at2(s, c);
        targets.at2(i, 0) = all_targets.at2(s, 0);
    }
    return {std::move(coords), std::move(targets)};
}

std::pair<std::array<float, 3>, std::array<float, 3>> camera_ray(const Camera& cam, int64_t px, int64_t py) {
    const float x = (static_cast<float>(px) + 0.5f - cam.cx) / cam.fx;
    const float y = -((static_cast<float>(py) + 0.5f - cam.cy) / cam.fy);
    const float z = -1.0f;
    const float inv_norm = 1.0f / std::sqrt(x * x + y * y + z * z);
    const float cx = x * inv_norm, cy = y * inv_norm, cz = z * inv_norm;
    const auto& r = cam.rotation;
    std::array<float, 3> dir{r[0] * cx + r[1] * cy + r[2] * cz, r[3] * cx + r[4] * cy + r[5] * cz,
                             r[6] * cx + r[7] * cy + r[8] * cz};
    return {cam.position, dir};
}

void RayBatch::validate() const {
    if (origins.rank() != 2 || origins.cols() != 3 || !directions.same_shape(origins))
        throw ShapeError("ray batch: expected matching [n x 3] origins and directions, got " +
                         origins.shape_string() + " and " + directions.shape_string());
    if (!(tfar > tnear)) throw ContractError("ray batch: far bound must exceed near bound");
    for (int64_t i = 0; i < size(); ++i) {
        const float n2 = directions.at2(i, 0) * directions.at2(i, 0) + directions.at2(i, 1) * directions.at2(i, 1) +
                         directions.at2(i, 2) * directions.at2(i, 2);
        if (std::abs(std::sqrt(n2) - 1.0f) > 1e-5f)
            throw ContractError("ray batch: direction " + std::to_string(i) + " is not unit length");
    }
}

std::pair<RayBatch, Tensor> scene_to_pairs(const RadianceScene& scene, int64_t views, int64_t pixels_per_view,
                                           Rng rng) {
    const int64_t available_views = static_cast<int64_t>(scene.views.size());
    if (available_views == 0) throw ContractError("scene_to_pairs: scene has no views");
    if (views > available_views)
        throw ContractError("scene_to_pairs: requested " + std::to_string(views) + " of " +
                            std::to_string(available_views) + " views");
    Rng view_rng = rng.fork("views");
    std::vector<int64_t> view_idx = sample_without_replacement(available_views, views, view_rng);

    const int64_t n = views * pixels_per_view;
    RayBatch rays;
    rays.origins = Tensor({n, 3});
    rays.directions = Tensor({n, 3});
    Tensor colors({n, 3});
    int64_t row = 0;
    for (int64_t v = 0; v < views; ++v) {
        const View& view = scene.views[static_cast<size_t>(view_idx[static_cast<size_t>(v)])];
        const int64_t total_px = view.image.height * view.image.width;
        if (pixels_per_view > total_px)
            throw ContractError("scene_to_pairs: requested " + std::to_string(pixels_per_view) + " of " +
                                std::to_string(total_px) + " pixels");
        Rng px_rng = rng.fork("pixels").fork(static_cast<uint64_t>(v));
        std::vector<int64_t> px_idx = sample_without_replacement(total_px, pixels_per_view, px_rng);
        for (int64_t p = 0; p < pixels_per_view; ++p, ++row) {
            const int64_t flat = px_idx[static_cast<size_t>(p)];
            const int64_t py = flat / view.image.width;
            const int64_t px = flat % view.image.width;
            auto [o, d] = camera_ray(view.camera, px, py);
            for (int64_t c = 0; c < 3; ++c) {
                rays.origins.at2(row, c) = o[static_cast<size_t>(c)];
                rays.directions.at2(row, c) = d[static_cast<size_t>(c)];
                colors.at2(row, c) = view.image.at(py, px, c);
            }
        }
    }
    return {std::move(rays), std::move(colors)};
}

Tensor stratified_depths(int64_t n_rays, int64_t samples, float tnear, float tfar, Rng rng) {
    Tensor depths({n_rays, samples});
    const float span = (tfar - tnear) / static_cast<float>(samples);
    for (int64_t i = 0; i < n_rays; ++i)
        for (int64_t s = 0; s < samples; ++s)
            depths.at2(i, s) = tnear + span * (static_cast<float>(s) + static_cast<float>(rng.uniform()));
    return depths;
}

Tensor midpoint_depths(int64_t n_rays, int64_t samples, float tnear, float tfar) {
    Tensor depths({n_rays, samples});
    const float span = (tfar - tnear) / static_cast<float>(samples);
    for (int64_t i = 0; i < n_rays; ++i)
        for (int64_t s = 0; s < samples; ++s) depths.at2(i, s) = tnear + span * (static_cast<float>(s) + 0.5f);
    return depths;
}

Tensor ray_deltas(const Tensor& depths, float tfar) {
    const int64_t n = depths.rows(), s = depths.cols();
    Tensor deltas({n, s});
    for (int64_t i = 0; i < n; ++i) {
        for (int64_t j = 0; j + 1 < s; ++j) deltas.at2(i, j) = depths.at2(i, j + 1) - depths.at2(i, j);
        deltas.at2(i, s - 1) = tfar - depths.at2(i, s - 1);
    }
    return deltas;
}

ad::Var composite(const ad::Var& rgb_flat, const ad::Var& density, const Tensor& deltas) {
    const int64_t n = density->value.rows(), s = density->value.cols();
    if (rgb_flat->value.rows() != n * s || rgb_flat->value.cols() != 3)
        throw ShapeError("composite: rgb " + rgb_flat->value.shape_string() + " does not match " +
                         std::to_string(n) + " rays x " + std::to_string(s) + " samples");
    check_same_shape(density->value, deltas, "composite");

    ad::Var sig_delta = ad::mul(density, ad::constant(deltas));
    ad::Var alpha = ad::add_scalar(ad::neg(ad::exp(ad::neg(sig_delta))), 1.0f);  // 1 - e^(-sigma delta)
    ad::Var rgb_mat = ad::reshape(rgb_flat, {n, s * 3});

    ad::Var transmit = ad::constant(Tensor::full({n}, 1.0f));
    ad::Var pixel = ad::constant(Tensor({n, 3}));
    for (int64_t i = 0; i < s; ++i) {
        ad::Var alpha_i = ad::reshape(ad::slice_cols(alpha, i, i + 1), {n});
        ad::Var w_i = ad::mul(transmit, alpha_i);
        ad::Var c_i = ad::slice_cols(rgb_mat, 3 * i, 3 * i + 3);
        pixel = ad::add(pixel, ad::mul_colvec(c_i, w_i));
        if (i + 1 < s) transmit = ad::mul(transmit, ad::add_scalar(ad::neg(alpha_i), 1.0f));
    }
    return pixel;
}

Tensor composite_weights(const Tensor& density, const Tensor& deltas) {
    check_same_shape(density, deltas, "composite_weights");
    const int64_t n = density.rows(), s = density.cols();
    Tensor weights({n, s});
    for (int64_t i = 0; i < n; ++i) {
        double transmit = 1.0;
        for (int64_t j = 0; j < s; ++j) {
            const double a = 1.0 - std::exp(-static_cast<double>(density.at2(i, j)) * deltas.at2(i, j));
            weights.at2(i, j) = static_cast<float>(transmit * a);
            transmit *= 1.0 - a;
        }
    }
    return weights;
}

namespace {

ad::Var render_points(const siren::SirenVars& inr, const siren::SirenConfig& cfg, const Tensor& points,
                      const Tensor& deltas) {
    if (cfg.out_dim != 4 || cfg.output_activation != siren::OutputActivation::kRgbDensity)
        throw ContractError("render: network must emit rgb plus a nonnegative density channel");
    ad::Var raw = siren::forward(inr, cfg, ad::constant(points));
    ad::Var rgb = ad::slice_cols(raw, 0, 3);
    ad::Var density = ad::reshape(ad::slice_cols(raw, 3, 4), {deltas.rows(), deltas.cols()});
    return composite(rgb, density, deltas);
}

Tensor ray_points(const RayBatch& rays, const Tensor& depths) {
    const int64_t n = rays.size(), s = depths.cols();
    Tensor points({n * s, 3});
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < s; ++j) {
            const float t = depths.at2(i, j);
            for (int64_t c = 0; c < 3; ++c)
                points.at2(i * s + j, c) = rays.origins.at2(i, c) + t * rays.directions.at2(i, c);
        }
    return points;
}

}  // namespace

ad::Var render_rays(const siren::SirenVars& inr, const siren::SirenConfig& cfg, const RayBatch& rays,
                    const Tensor& depths) {
    rays.validate();
    if (depths.rank() != 2 || depths.rows() != rays.size())
        throw ShapeError("render_rays: depths " + depths.shape_string() + " do not match " +
                         std::to_string(rays.size()) + " rays");
    return render_points(inr, cfg, ray_points(rays, depths), ray_deltas(depths, rays.tfar));
}

Tensor render_rays(const siren::SirenParams& inr, const siren::SirenConfig& cfg, const RayBatch& rays,
                   int64_t samples_per_ray, Rng rng) {
    rays.validate();
    Tensor depths = stratified_depths(rays.size(), samples_per_ray, rays.tnear, rays.tfar, rng);
    return render_rays(siren::to_vars(inr, false), cfg, rays, depths)->value;
}

VoxelField voxelize(const siren::SirenParams& inr, const siren::SirenConfig& cfg, int64_t resolution,
                    float threshold) {
    if (cfg.out_dim != 1) throw ContractError("voxelize: network must emit a single occupancy channel");
    VoxelField out;
    out.resolution = resolution;
    const int64_t total = resolution * resolution * resolution;
    out.occupancy.resize(static_cast<size_t>(total));
    Tensor grid = voxel_grid(resolution);
    siren::SirenVars vars = siren::to_vars(inr, false);
    const int64_t chunk = 8192;
    for (int64_t lo = 0; lo < total; lo += chunk) {
        const int64_t hi = std::min(lo + chunk, total);
        Tensor block({hi - lo, 3});
        for (int64_t r = lo; r < hi; ++r)
            for (int64_t c = 0; c < 3; ++c) block.at2(r - lo, c) = grid.at2(r, c);
        ad::Var pred = siren::forward(vars, cfg, ad::constant(block));
        for (int64_t r = lo; r < hi; ++r)
            out.occupancy[static_cast<size_t>(r)] = pred->value.at2(r - lo, 0) >= threshold ? 1 : 0;
        ad::release(std::move(pred));
    }
    return out;
}

double voxel_iou(const VoxelField& a, const VoxelField& b) {
    if (a.resolution != b.resolution) throw ContractError("voxel_iou: resolution mismatch");
    int64_t inter = 0, uni = 0;
    for (size_t i = 0; i < a.occupancy.size(); ++i) {
        const bool va = a.occupancy[i] != 0, vb = b.occupancy[i] != 0;
        inter += (va && vb) ? 1 : 0;
        uni += (va || vb) ? 1 : 0;
    }
    return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

ImageDataset::ImageDataset(std::vector<ImageField> images) : images_(std::move(images)) {
    if (images_.empty()) throw ContractError("image dataset is empty");
}

train::TrainItem ImageDataset::item(int64_t index, Rng) const { return full_item(index); }

train::TrainItem ImageDataset::full_item(int64_t index) const {
    auto [coords, targets] = image_to_pairs(images_[static_cast<size_t>(index)]);
    return {std::move(coords), std::move(targets)};
}

VoxelDataset::VoxelDataset(std::vector<VoxelField> voxels, int64_t points_per_draw)
    : voxels_(std::move(voxels)), points_per_draw_(points_per_draw) {
    if (voxels_.empty()) throw ContractError("voxel dataset is empty");
    if (points_per_draw_ < 1) throw ContractError("points_per_draw must be >= 1");
}

train::TrainItem VoxelDataset::item(int64_t index, Rng rng) const {
    const VoxelField& v = voxels_[static_cast<size_t>(index)];
    const int64_t available = v.points.has_value() ? v.points->coords.rows()
                                                   : v.resolution * v.resolution * v.resolution;
    auto [coords, targets] = voxel_sample(v, std::min(points_per_draw_, available), rng);
    return {std::move(coords), std::move(targets)};
}

train::TrainItem VoxelDataset::full_item(int64_t index) const {
    auto [coords, targets] = voxel_to_pairs(voxels_[static_cast<size_t>(index)]);
    return {std::move(coords), std::move(targets)};
}

SceneDataset::SceneDataset(std::vector<RadianceScene> scenes, int64_t views_per_draw, int64_t pixels_per_view,
                           int64_t samples_per_ray, float tnear, float tfar)
    : scenes_(std::move(scenes)),
      views_per_draw_(views_per_draw),
      pixels_per_view_(pixels_per_view),
      samples_per_ray_(samples_per_ray),
      tnear_(tnear),
      tfar_(tfar) {
    if (scenes_.empty()) throw ContractError("scene dataset is empty");
    if (views_per_draw_ < 1 || pixels_per_view_ < 1 || samples_per_ray_ < 1)
        throw ContractError("invalid scene sampling configuration");
}

train::TrainItem SceneDataset::pack(const RayBatch& rays, const Tensor& colors, const Tensor& depths) const {
    const int64_t n = rays.size(), s = depths.cols();
    Tensor coords({n, 6 + s});
    for (int64_t i = 0; i < n; ++i) {
        for (int64_t c = 0; c < 3; ++c) {
            coords.at2(i, c) = rays.origins.at2(i, c);
            coords.at2(i, 3 + c) = rays.directions.at2(i, c);
        }
        for (int64_t j = 0; j < s; ++j) coords.at2(i, 6 + j) = depths.at2(i, j);
    }
    return {std::move(coords), colors};
}

train::TrainItem SceneDataset::item(int64_t index, Rng rng) const {
    const RadianceScene& sc = scenes_[static_cast<size_t>(index)];
    const int64_t views = std::min<int64_t>(views_per_draw_, static_cast<int64_t>(sc.views.size()));
    auto [rays, colors] = scene_to_pairs(sc, views, pixels_per_view_, rng.fork("rays"));
    rays.tnear = tnear_;
    rays.tfar = tfar_;
    Tensor depths = stratified_depths(rays.size(), samples_per_ray_, tnear_, tfar_, rng.fork("depths"));
    return pack(rays, colors, depths);
}

train::TrainItem SceneDataset::full_item(int64_t index) const {
    const RadianceScene& sc = scenes_[static_cast<size_t>(index)];
    int64_t n = 0;
    for (const auto& v : sc.views) n += v.image.height * v.image.width;
    RayBatch rays;
    rays.origins = Tensor({n, 3});
    rays.directions = Tensor({n, 3});
    rays.tnear = tnear_;
    rays.tfar = tfar_;
    Tensor colors({n, 3});
    int64_t row = 0;
    for (const auto& view : sc.views)
        for (int64_t py = 0; py < view.image.height; ++py)
            for (int64_t px = 0; px < view.image.width; ++px, ++row) {
                auto [o, d] = camera_ray(view.camera, px, py);
                for (int64_t c = 0; c < 3; ++c) {
                    rays.origins.at2(row, c) = o[static_cast<size_t>(c)];
                    rays.directions.at2(row, c) = d[static_cast<size_t>(c)];
                    colors.at2(row, c) = view.image.at(py, px, c);
                }
            }
    Tensor depths = midpoint_depths(n, samples_per_ray_, tnear_, tfar_);
    return pack(rays, colors, depths);
}

ad::Var SceneDataset::predict(const siren::SirenVars& inr, const siren::SirenConfig& cfg,
                              const train::TrainItem& item) const {
    const int64_t n = item.coords.rows();
    const int64_t s = item.coords.cols() - 6;
    Tensor points({n * s, 3});
    Tensor depths({n, s});
    for (int64_t i = 0; i < n; ++i) {
        for (int64_t j = 0; j < s; ++j) {
            const float t = item.coords.at2(i, 6 + j);
            depths.at2(i, j) = t;
            for (int64_t c = 0; c < 3; ++c)
                points.at2(i * s + j, c) = item.coords.at2(i, c) + t * item.coords.at2(i, 3 + c);
        }
    }
    return render_points(inr, cfg, points, ray_deltas(depths, tfar_));
}

}  // namespace mnif::fields
