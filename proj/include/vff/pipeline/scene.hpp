#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "vff/geometry/boxes.hpp"
#include "vff/geometry/calib.hpp"
#include "vff/geometry/grid.hpp"
#include "vff/geometry/projection.hpp"
#include "vff/numerics/tensor.hpp"

namespace vff {

/// Background of the synthetic RGB image.
enum class FeatureSource { Random, Pattern };

FeatureSource parse_feature_source(const std::string& name);
std::string to_string(FeatureSource source);

struct SceneSpec {
  GridSpec grid = default_grid();
  PinholeIntrinsics intrinsics{64.0, 64.0, 64.0, 32.0};
  std::optional<KittiCalib> calib;  // replaces the pinhole camera when set
  ImageGeometry image{64, 128, 4};
  std::size_t objects = 2;
  std::size_t points_per_object = 32;
  std::size_t ground_points = 0;
  FeatureSource source = FeatureSource::Random;
  std::size_t channels = 32;
  std::uint64_t seed = 0;

  /// 16^3 voxels over x in [4,20), y in [-8,8), z in [-3,1).
  static GridSpec default_grid(int n = 16);
  KittiCalib camera() const;
  void validate() const;
};

struct Scene {
  PointCloud cloud;
  Tensor image;     // [3,H,W] in [0,1]
  Tensor features;  // [C,H/stride,W/stride] encoded from `image`
  std::vector<Box3D> boxes3d;
  std::vector<ImageBox> boxes2d;  // projected 3D boxes, inside the image
  KittiCalib calib;
  ImageGeometry image_geometry;
  GridSpec grid;
};

/// Places `objects` non-colliding boxes fully inside the grid and the
/// image, fills each with `points_per_object` points and paints its
/// projected box into the image. Same SceneSpec, same bytes. Throws
/// std::runtime_error when an object cannot be placed in view.
Scene gen_scene(const SceneSpec& spec);

/// Fixed feature encoder: mean RGB of each stride x stride cell, then
/// tanh(W rgb + b) with W, b drawn from a constant seed.
Tensor encode_features(const Tensor& image, int stride, std::size_t channels);

}  // namespace vff
