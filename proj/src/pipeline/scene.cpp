#include "vff/pipeline/scene.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

namespace vff {

namespace {

constexpr std::uint64_t kEncoderSeed = 0x5eedf00d;
constexpr int kPlacementAttempts = 2000;

bool box_inside_grid(const Box3D& box, const GridSpec& grid) {
  const Eigen::Vector3d lo = grid.origin;
  const Eigen::Vector3d hi = grid.origin + grid.voxel_size.cwiseProduct(
                                               Eigen::Vector3d(grid.dims[0], grid.dims[1], grid.dims[2]));
  for (const auto& c : box.corners())
    for (int a = 0; a < 3; ++a)
      if (c[a] <= lo[a] || c[a] >= hi[a]) return false;
  return true;
}

void paint(Tensor& image, const ImageBox& box, const std::array<double, 3>& rgb, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> noise(-0.05, 0.05);
  const int h = static_cast<int>(image.dim(1)), w = static_cast<int>(image.dim(2));
  for (int y = std::max(0, static_cast<int>(std::floor(box.y0))); y < std::min(h, static_cast<int>(std::ceil(box.y1))); ++y)
    for (int x = std::max(0, static_cast<int>(std::floor(box.x0))); x < std::min(w, static_cast<int>(std::ceil(box.x1)));
         ++x)
      for (int c = 0; c < 3; ++c) image.at(c, y, x) = std::clamp(rgb[c] + noise(rng), 0.0, 1.0);
}

}  // namespace

FeatureSource parse_feature_source(const std::string& name) {
  if (name == "random") return FeatureSource::Random;
  if (name == "pattern") return FeatureSource::Pattern;
  throw std::invalid_argument("unknown feature source '" + name + "'");
}

std::string to_string(FeatureSource source) { return source == FeatureSource::Random ? "random" : "pattern"; }

GridSpec SceneSpec::default_grid(int n) {
  GridSpec g;
  g.dims = {n, n, n};
  g.voxel_size = {16.0 / n, 16.0 / n, 4.0 / n};
  g.origin = {4.0, -8.0, -3.0};
  return g;
}

KittiCalib SceneSpec::camera() const { return calib ? *calib : make_pinhole_calib(intrinsics); }

void SceneSpec::validate() const {
  grid.validate();
  if (image.width <= 0 || image.height <= 0 || image.stride <= 0) throw std::invalid_argument("bad image geometry");
  if (objects == 0) throw std::invalid_argument("a scene needs at least one object");
  if (points_per_object == 0) throw std::invalid_argument("objects need at least one point");
  if (channels == 0) throw std::invalid_argument("feature channels must be positive");
}

Scene gen_scene(const SceneSpec& spec) {
  spec.validate();
  Scene s;
  s.calib = spec.camera();
  s.image_geometry = spec.image;
  s.grid = spec.grid;
  const Mat34 cam = s.calib.lidar_to_image();
  std::mt19937_64 rng(spec.seed);

  const Eigen::Vector3d lo = spec.grid.origin;
  const Eigen::Vector3d ext = spec.grid.voxel_size.cwiseProduct(
      Eigen::Vector3d(spec.grid.dims[0], spec.grid.dims[1], spec.grid.dims[2]));
  std::uniform_real_distribution<double> ux(lo.x(), lo.x() + ext.x()), uy(lo.y(), lo.y() + ext.y());
  std::uniform_real_distribution<double> len(3.0, 4.5), wid(1.5, 2.0), hgt(1.4, 1.7);
  std::uniform_real_distribution<double> yaw(-std::numbers::pi, std::numbers::pi), unit(0.0, 1.0);

  for (std::size_t i = 0; i < spec.objects; ++i) {
    bool placed = false;
    for (int attempt = 0; attempt < kPlacementAttempts && !placed; ++attempt) {
      Box3D b;
      b.size = {len(rng), wid(rng), std::min(hgt(rng), 0.9 * ext.z())};
      b.center = {ux(rng), uy(rng), lo.z() + 0.5 * b.size.z() + 0.01};
      b.yaw = yaw(rng);
      if (!box_inside_grid(b, spec.grid)) continue;
      const auto px = project_box(cam, b);
      if (!px || px->x0 < 0.0 || px->y0 < 0.0 || px->x1 > spec.image.width || px->y1 > spec.image.height) continue;
      if (px->x1 - px->x0 < spec.image.stride || px->y1 - px->y0 < spec.image.stride) continue;
      if (std::any_of(s.boxes3d.begin(), s.boxes3d.end(), [&](const Box3D& o) { return boxes_collide_bev(o, b); })) {
        continue;
      }
      s.boxes3d.push_back(b);
      s.boxes2d.push_back(*px);
      placed = true;
    }
    if (!placed) throw std::runtime_error("could not place object " + std::to_string(i) + " inside the camera view");
  }

  for (const Box3D& b : s.boxes3d) {
    const Eigen::Matrix3d rot = Eigen::AngleAxisd(b.yaw, Eigen::Vector3d::UnitZ()).toRotationMatrix();
    for (std::size_t k = 0; k < spec.points_per_object; ++k) {
      const Eigen::Vector3d local((unit(rng) - 0.5) * b.size.x(), (unit(rng) - 0.5) * b.size.y(),
                                  (unit(rng) - 0.5) * b.size.z());
      const Eigen::Vector3d p = b.center + rot * local;
      s.cloud.points.push_back({p.x(), p.y(), p.z(), unit(rng)});
    }
  }
  std::uniform_real_distribution<double> gx(lo.x(), lo.x() + ext.x()), gy(lo.y(), lo.y() + ext.y());
  for (std::size_t k = 0; k < spec.ground_points; ++k) {
    s.cloud.points.push_back({gx(rng), gy(rng), lo.z() + 0.5 * spec.grid.voxel_size.z(), 0.1 * unit(rng)});
  }

  const int h = spec.image.height, w = spec.image.width;
  s.image = Tensor({3, static_cast<std::size_t>(h), static_cast<std::size_t>(w)});
  std::uniform_real_distribution<double> bg(0.0, 0.5);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int ch = 0; ch < 3; ++ch) {
        s.image.at(ch, y, x) =
            spec.source == FeatureSource::Random ? bg(rng) : (((x / 8) + (y / 8)) % 2 == 0 ? 0.1 : 0.4) + 0.05 * ch;
      }
  // Far objects first so nearer ones end up on top.
  std::vector<std::size_t> order(s.boxes3d.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::vector<double> depth(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) depth[i] = project_world(cam, s.boxes3d[i].center).depth;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return depth[a] > depth[b]; });
  for (std::size_t i : order) {
    const double shade = 0.1 * static_cast<double>(i % 4);
    paint(s.image, s.boxes2d[i], {0.9, 0.6 + shade, 0.2}, rng);
  }
  s.features = encode_features(s.image, spec.image.stride, spec.channels);
  return s;
}

Tensor encode_features(const Tensor& image, int stride, std::size_t channels) {
  if (image.rank() != 3 || image.dim(0) != 3) throw std::invalid_argument("encoder expects a [3,H,W] image");
  if (stride <= 0) throw std::invalid_argument("stride must be positive");
  std::mt19937_64 rng(kEncoderSeed);
  std::uniform_real_distribution<double> wd(-2.0, 2.0), bd(-0.5, 0.5);
  std::vector<double> w(channels * 3), b(channels);
  for (double& x : w) x = wd(rng);
  for (double& x : b) x = bd(rng);

  const std::size_t h = image.dim(1), wi = image.dim(2);
  const std::size_t s = static_cast<std::size_t>(stride);
  const std::size_t fh = (h + s - 1) / s, fw = (wi + s - 1) / s;
  Tensor out({channels, fh, fw});
  for (std::size_t v = 0; v < fh; ++v)
    for (std::size_t u = 0; u < fw; ++u) {
      double rgb[3] = {0.0, 0.0, 0.0};
      std::size_t n = 0;
      for (std::size_t y = v * s; y < std::min(h, (v + 1) * s); ++y)
        for (std::size_t x = u * s; x < std::min(wi, (u + 1) * s); ++x, ++n)
          for (int c = 0; c < 3; ++c) rgb[c] += image.at(c, y, x);
      for (double& x : rgb) x /= static_cast<double>(n);
      for (std::size_t c = 0; c < channels; ++c) {
        out.at(c, v, u) = std::tanh(w[c * 3] * rgb[0] + w[c * 3 + 1] * rgb[1] + w[c * 3 + 2] * rgb[2] + b[c]);
      }
    }
  return out;
}

}  // namespace vff
