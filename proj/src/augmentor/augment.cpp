#include "vff/augmentor/augment.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>

#include "vff/geometry/projection.hpp"

namespace vff {

namespace {

void check_image(const Tensor& image) {
  if (image.rank() != 3) throw std::invalid_argument("image must be [C,H,W], got " + image.shape_str());
}

}  // namespace

AffineFit fit_affine(std::span<const Eigen::Vector2d> src, std::span<const Eigen::Vector2d> dst) {
  if (src.size() != dst.size()) throw std::invalid_argument("correspondence lists differ in length");
  if (src.size() < 3) throw std::invalid_argument("affine fit needs at least 3 correspondences");
  const auto n = static_cast<Eigen::Index>(src.size());

  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  for (const auto& p : src) mean += p;
  mean /= static_cast<double>(n);
  Eigen::MatrixX2d centered(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) centered.row(i) = (src[static_cast<std::size_t>(i)] - mean).transpose();
  const Eigen::JacobiSVD<Eigen::MatrixX2d> svd(centered);
  const auto sv = svd.singularValues();
  if (!(sv(1) > 1e-9 * std::max(sv(0), 1.0))) throw std::invalid_argument("affine fit correspondences are collinear");

  Eigen::MatrixX3d a(n, 3);
  Eigen::MatrixX2d b(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& s = src[static_cast<std::size_t>(i)];
    a.row(i) << s.x(), s.y(), 1.0;
    b.row(i) = dst[static_cast<std::size_t>(i)].transpose();
  }
  const Eigen::Matrix<double, 3, 2> x = a.colPivHouseholderQr().solve(b);

  AffineFit fit;
  fit.affine = x.transpose();
  double sq = 0.0;
  for (std::size_t i = 0; i < src.size(); ++i) sq += (apply_affine(fit.affine, src[i]) - dst[i]).squaredNorm();
  fit.residual = std::sqrt(sq / static_cast<double>(src.size()));
  return fit;
}

Tensor warp_image(const Tensor& image, const Affine2& affine) {
  check_image(image);
  const Affine2 inv = invert_affine(affine);
  const std::size_t channels = image.dim(0), h = image.dim(1), w = image.dim(2);
  Tensor out(image.shape());
  auto sample = [&](std::size_t c, long y, long x) {
    if (y < 0 || x < 0 || y >= static_cast<long>(h) || x >= static_cast<long>(w)) return 0.0;
    return image.at(c, static_cast<std::size_t>(y), static_cast<std::size_t>(x));
  };
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const Eigen::Vector2d s = apply_affine(inv, {x + 0.5, y + 0.5}) - Eigen::Vector2d(0.5, 0.5);
      const double fx = std::floor(s.x()), fy = std::floor(s.y());
      const double tx = s.x() - fx, ty = s.y() - fy;
      const long ix = static_cast<long>(fx), iy = static_cast<long>(fy);
      for (std::size_t c = 0; c < channels; ++c) {
        out.at(c, y, x) = (1 - ty) * ((1 - tx) * sample(c, iy, ix) + tx * sample(c, iy, ix + 1)) +
                          ty * ((1 - tx) * sample(c, iy + 1, ix) + tx * sample(c, iy + 1, ix + 1));
      }
    }
  }
  return out;
}

Tensor mirror_image(const Tensor& image) {
  check_image(image);
  Tensor out(image.shape());
  const std::size_t channels = image.dim(0), h = image.dim(1), w = image.dim(2);
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) out.at(c, y, w - 1 - x) = image.at(c, y, x);
  return out;
}

PointCloud transform_points(const PointCloud& points, const Eigen::Matrix3d& m) {
  PointCloud out;
  out.points.reserve(points.size());
  for (const LidarPoint& p : points.points) {
    const Eigen::Vector3d q = m * p.xyz();
    out.points.push_back({q.x(), q.y(), q.z(), p.intensity});
  }
  return out;
}

AugmentedScene apply_flip(const PointCloud& points, const Tensor& image, AlignMode mode) {
  check_image(image);
  AugmentedScene out;
  out.record.flip = true;
  out.points.points.reserve(points.size());
  for (const LidarPoint& p : points.points) out.points.points.push_back({p.x, -p.y, p.z, p.intensity});
  if (mode == AlignMode::ImageOps) {
    out.record.affine2d << -1.0, 0.0, static_cast<double>(image.dim(2)), 0.0, 1.0, 0.0;
    out.image = mirror_image(image);
  } else {
    out.image = image;
  }
  return out;
}

AugmentedScene apply_rescale(const PointCloud& points, const Tensor& image, double factor, const Mat34& camera,
                             const RescaleOptions& opts) {
  check_image(image);
  if (!(factor >= opts.min_factor && factor <= opts.max_factor)) {
    throw std::invalid_argument("rescale factor " + std::to_string(factor) + " outside [" +
                                std::to_string(opts.min_factor) + ", " + std::to_string(opts.max_factor) + "]");
  }
  AugmentedScene out;
  out.record.rescale = factor;
  out.points = transform_points(points, factor * Eigen::Matrix3d::Identity());
  if (factor == 1.0 || opts.mode == AlignMode::Reproject) {
    out.image = image;
    return out;
  }

  const double w = static_cast<double>(image.dim(2)), h = static_cast<double>(image.dim(1));
  std::vector<std::size_t> visible;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const ContinuousPixel before = project_world(camera, points.points[i].xyz());
    const ContinuousPixel after = project_world(camera, out.points.points[i].xyz());
    const auto in_image = [&](const ContinuousPixel& px) {
      return px.depth > 0.0 && px.pixel.x() >= 0.0 && px.pixel.y() >= 0.0 && px.pixel.x() < w && px.pixel.y() < h;
    };
    if (in_image(before) && in_image(after)) visible.push_back(i);
  }
  std::vector<std::size_t> chosen;
  std::mt19937_64 rng(opts.seed);
  std::sample(visible.begin(), visible.end(), std::back_inserter(chosen), opts.correspondences, rng);

  std::vector<Eigen::Vector2d> src, dst;
  for (std::size_t i : chosen) {
    src.push_back(project_world(camera, points.points[i].xyz()).pixel);
    dst.push_back(project_world(camera, out.points.points[i].xyz()).pixel);
  }
  const AffineFit fit = fit_affine(src, dst);
  out.record.affine2d = fit.affine;
  out.record.fit_residual = fit.residual;
  out.image = warp_image(image, fit.affine);
  return out;
}

RotatedPoints apply_rotate(const PointCloud& points, double radians, double max_abs) {
  if (!(std::abs(radians) <= max_abs)) {
    throw std::invalid_argument("rotation " + std::to_string(radians) + " exceeds +-" + std::to_string(max_abs));
  }
  RotatedPoints out;
  out.record.rotate = radians;
  out.points = radians == 0.0 ? points : transform_points(points, rotation_z(radians));
  return out;
}

}  // namespace vff
