#pragma once

#include <cstdint>
#include <span>

#include "vff/geometry/augment_record.hpp"
#include "vff/geometry/calib.hpp"
#include "vff/numerics/tensor.hpp"

namespace vff {

/// How image-side correspondence is kept for sample-static ops. ImageOps
/// mirrors/warps the image; Reproject leaves it untouched and relies on the
/// recorded point transform alone (for rigs where image ops cannot align).
enum class AlignMode { ImageOps, Reproject };

struct AffineFit {
  Affine2 affine = identity_affine();
  double residual = 0.0;  // RMS pixel error over the correspondences
};

/// Least-squares affine taking src[i] to dst[i]. Needs at least three
/// non-collinear sources; throws std::invalid_argument otherwise.
AffineFit fit_affine(std::span<const Eigen::Vector2d> src, std::span<const Eigen::Vector2d> dst);

/// Resamples a [C,H,W] image so that content at pixel p moves to affine(p).
/// Bilinear, zero outside the source. Pixel (x, y) covers [x, x+1) x [y, y+1).
Tensor warp_image(const Tensor& image, const Affine2& affine);

/// Mirrors each row: pixel x goes to W-1-x.
Tensor mirror_image(const Tensor& image);

struct AugmentedScene {
  PointCloud points;
  Tensor image;
  AugmentRecord record;
};

/// Mirrors points across the x-z plane (y -> -y) and the image left-right.
AugmentedScene apply_flip(const PointCloud& points, const Tensor& image, AlignMode mode = AlignMode::ImageOps);

struct RescaleOptions {
  double min_factor = 0.5;
  double max_factor = 2.0;
  std::size_t correspondences = 100;
  std::uint64_t seed = 0;
  AlignMode mode = AlignMode::ImageOps;
};

/// Scales point coordinates by `factor` and warps the image by an affine
/// fitted to the projections of up to `correspondences` random visible
/// points before and after scaling under `camera`.
AugmentedScene apply_rescale(const PointCloud& points, const Tensor& image, double factor, const Mat34& camera,
                             const RescaleOptions& opts = {});

struct RotatedPoints {
  PointCloud points;
  AugmentRecord record;
};

/// Rotates points about +z. The image is left alone; projection composes
/// the inverse rotation instead.
RotatedPoints apply_rotate(const PointCloud& points, double radians, double max_abs = 0.7853981633974483);

/// m * p for every point; intensity is kept.
PointCloud transform_points(const PointCloud& points, const Eigen::Matrix3d& m);

}  // namespace vff
