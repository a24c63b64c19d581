#pragma once

#include <Eigen/Geometry>

#include <cmath>
#include <random>

#include "vff/geometry/calib.hpp"
#include "vff/geometry/grid.hpp"
#include "vff/geometry/projection.hpp"

namespace fixture {

// 128x64 image, stride 4 (32x16 feature map), camera on the LiDAR origin
// looking down +x, principal point at the image center.
inline vff::ImageGeometry toy_image() { return {64, 128, 4}; }

inline vff::PinholeIntrinsics toy_intrinsics() { return {64.0, 64.0, 64.0, 32.0}; }

inline vff::KittiCalib toy_calib() { return vff::make_pinhole_calib(toy_intrinsics()); }

// 16^3 voxels covering x in [4,20), y in [-8,8), z in [-3,1).
inline vff::GridSpec toy_grid(int n = 16) {
  vff::GridSpec g;
  g.dims = {n, n, n};
  g.voxel_size = {16.0 / n, 16.0 / n, 4.0 / n};
  g.origin = {4.0, -8.0, -3.0};
  return g;
}

// 16 m cube in front of the camera: x in [4,20), y and z in [-8,8).
inline vff::GridSpec cube_grid(int n = 16) {
  vff::GridSpec g;
  g.dims = {n, n, n};
  g.voxel_size = {16.0 / n, 16.0 / n, 16.0 / n};
  g.origin = {4.0, -8.0, -8.0};
  return g;
}

// A KITTI-like calibration: camera offset from the LiDAR and slightly rotated.
inline vff::KittiCalib random_calib(std::mt19937_64& rng, const vff::ImageGeometry& image, double min_focal = 40.0,
                                    double max_focal = 90.0) {
  std::uniform_real_distribution<double> focal(min_focal, max_focal), jitter(-6.0, 6.0), angle(-0.08, 0.08), offset(-0.3, 0.3);
  vff::PinholeIntrinsics k;
  k.fx = focal(rng);
  k.fy = k.fx * (1.0 + 0.05 * angle(rng));
  k.cx = image.width / 2.0 + jitter(rng);
  k.cy = image.height / 2.0 + jitter(rng);
  vff::KittiCalib c = vff::make_pinhole_calib(k, {offset(rng), offset(rng), offset(rng)});
  const Eigen::Matrix3d r = (Eigen::AngleAxisd(angle(rng), Eigen::Vector3d::UnitX()) *
                             Eigen::AngleAxisd(angle(rng), Eigen::Vector3d::UnitY()) *
                             Eigen::AngleAxisd(angle(rng), Eigen::Vector3d::UnitZ()))
                                .toRotationMatrix();
  c.R0_rect = r;
  return c;
}

// 64x64 image at stride 4: a 16x16 feature map.
inline vff::ImageGeometry square_image() { return {64, 64, 4}; }

// Wide angle so that most cells of the small map see the cube grid.
inline vff::ProjectionTransform random_transform(std::uint64_t seed, const vff::GridSpec& grid) {
  std::mt19937_64 rng(seed);
  const vff::ImageGeometry image = square_image();
  return vff::compose_projection(grid, random_calib(rng, image, 16.0, 32.0), {}, image);
}

}  // namespace fixture
