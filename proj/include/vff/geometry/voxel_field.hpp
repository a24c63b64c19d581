#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "vff/geometry/calib.hpp"
#include "vff/geometry/grid.hpp"

namespace vff {

using Feature = std::vector<double>;

/// Sparse voxel field: every occupied voxel owns a feature vector of
/// `channels()` values; any other voxel reads as the zero vector.
class VoxelField {
 public:
  VoxelField() = default;
  VoxelField(GridSpec grid, std::size_t channels);

  const GridSpec& grid() const { return grid_; }
  std::size_t channels() const { return channels_; }

  bool occupied(const VoxelIndex& v) const { return entries_.contains(grid_.linear(v)); }
  bool occupied(std::int64_t linear) const { return entries_.contains(linear); }
  std::size_t occupancy_count() const { return entries_.size(); }

  /// Feature of v, or zeros when v is empty.
  Feature read(const VoxelIndex& v) const;
  /// Overwrites v's feature and marks it occupied.
  void set(const VoxelIndex& v, Feature value);
  /// Adds `delta` to v's feature (empty voxels start at zero) and marks it occupied.
  void add(const VoxelIndex& v, std::span<const double> delta);

  /// Occupied voxels keyed by linear index, ascending.
  const std::map<std::int64_t, Feature>& entries() const { return entries_; }

  bool operator==(const VoxelField& other) const;

 private:
  void check(const VoxelIndex& v, std::size_t len) const;

  GridSpec grid_;
  std::size_t channels_ = 0;
  std::map<std::int64_t, Feature> entries_;
};

struct VoxelizeResult {
  VoxelField field;
  std::size_t dropped = 0;  // points outside the grid
};

/// Marks each in-bounds point's voxel occupied; the feature is the mean of
/// the (x, y, z, intensity) quadruples that fall into it.
VoxelizeResult voxelize(const PointCloud& cloud, const GridSpec& grid);

}  // namespace vff
