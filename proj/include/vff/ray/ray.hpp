#pragma once

#include <span>
#include <vector>

#include "vff/geometry/grid.hpp"
#include "vff/geometry/projection.hpp"
#include "vff/geometry/voxel_field.hpp"
#include "vff/sampler/sampler.hpp"

namespace vff {

/// Every voxel whose center projects into one feature cell, nearest first.
struct Ray {
  FeatureCell pixel;
  std::size_t view = 0;             // camera view the pixel belongs to
  std::vector<VoxelIndex> voxels;   // ascending depth, ties by linear index
  std::vector<double> depths;       // homogeneous depth of each voxel center
  std::vector<std::size_t> anchors; // positions in `voxels` holding LiDAR points

  std::size_t size() const { return voxels.size(); }
  bool empty() const { return voxels.empty(); }
};

/// Walks the back-projected line of the cell center through the grid and
/// tests a neighbourhood of each visited cell with the projection
/// predicate. The neighbourhood half-width per axis grows with depth so it
/// covers the cell's whole viewing frustum. Throws std::invalid_argument
/// when the pixel is off the feature map or the transform is singular.
Ray construct_ray(const ProjectionTransform& vt, const GridSpec& grid, const FeatureCell& pixel);

/// Exhaustive scan of the grid with the same predicate and ordering.
/// Rejects grids with more than 64^3 voxels.
std::vector<VoxelIndex> brute_force_ray_oracle(const ProjectionTransform& vt, const GridSpec& grid,
                                               const FeatureCell& pixel);

/// Fills ray.anchors with the positions of occupied voxels, in ray order.
Ray mark_anchors(Ray ray, const VoxelField& field);

/// One ray per pixel, built on up to `threads` threads; output order follows `pixels`.
std::vector<Ray> construct_rays(const ProjectionTransform& vt, const GridSpec& grid,
                                std::span<const FeatureCell> pixels, unsigned threads = 1);

}  // namespace vff
