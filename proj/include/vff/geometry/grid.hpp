#pragma once

#include <Eigen/Core>

#include <array>
#include <compare>
#include <cstdint>
#include <optional>
#include <string>

namespace vff {

struct VoxelIndex {
  int x = 0;
  int y = 0;
  int z = 0;

  auto operator<=>(const VoxelIndex&) const = default;
};

std::string to_string(const VoxelIndex& v);

/// Axis-aligned voxel grid in the LiDAR (world) frame.
struct GridSpec {
  Eigen::Vector3d origin = Eigen::Vector3d::Zero();
  Eigen::Vector3d voxel_size = Eigen::Vector3d::Ones();
  std::array<int, 3> dims{1, 1, 1};

  /// Throws std::invalid_argument when sizes or dims are not positive.
  void validate() const;

  bool contains(const VoxelIndex& v) const {
    return v.x >= 0 && v.y >= 0 && v.z >= 0 && v.x < dims[0] && v.y < dims[1] && v.z < dims[2];
  }
  std::int64_t voxel_count() const { return std::int64_t{dims[0]} * dims[1] * dims[2]; }

  /// x-major linearisation; ordering by linear index equals ordering by (x, y, z).
  std::int64_t linear(const VoxelIndex& v) const {
    return (std::int64_t{v.x} * dims[1] + v.y) * dims[2] + v.z;
  }
  VoxelIndex from_linear(std::int64_t i) const;

  /// Center of voxel v in world meters.
  Eigen::Vector3d world_of(const VoxelIndex& v) const;
  /// Voxel containing world point p, or nullopt outside the grid.
  std::optional<VoxelIndex> index_of(const Eigen::Vector3d& p) const;

  /// Homogeneous map from integer voxel coordinates to voxel-center world coordinates.
  Eigen::Matrix4d voxel_to_world() const;

  /// Grid-normalised coordinates in [0,1]^3: index / (dim - 1), 0 for unit dims.
  Eigen::Vector3d normalized(const VoxelIndex& v) const;
};

}  // namespace vff
