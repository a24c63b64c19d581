#include "vff/geometry/voxel_field.hpp"

#include <stdexcept>

namespace vff {

VoxelField::VoxelField(GridSpec grid, std::size_t channels) : grid_(std::move(grid)), channels_(channels) {
  grid_.validate();
  if (channels_ == 0) throw std::invalid_argument("voxel field needs at least one channel");
}

void VoxelField::check(const VoxelIndex& v, std::size_t len) const {
  if (!grid_.contains(v)) throw std::out_of_range("voxel " + to_string(v) + " outside grid");
  if (len != channels_) {
    throw std::invalid_argument("feature length " + std::to_string(len) + " does not match field channels " +
                                std::to_string(channels_));
  }
}

Feature VoxelField::read(const VoxelIndex& v) const {
  const auto it = entries_.find(grid_.linear(v));
  return it == entries_.end() ? Feature(channels_, 0.0) : it->second;
}

void VoxelField::set(const VoxelIndex& v, Feature value) {
  check(v, value.size());
  entries_[grid_.linear(v)] = std::move(value);
}

void VoxelField::add(const VoxelIndex& v, std::span<const double> delta) {
  check(v, delta.size());
  auto [it, inserted] = entries_.try_emplace(grid_.linear(v), Feature(channels_, 0.0));
  for (std::size_t c = 0; c < channels_; ++c) it->second[c] += delta[c];
}

bool VoxelField::operator==(const VoxelField& other) const {
  return channels_ == other.channels_ && grid_.dims == other.grid_.dims && grid_.origin == other.grid_.origin &&
         grid_.voxel_size == other.grid_.voxel_size && entries_ == other.entries_;
}

VoxelizeResult voxelize(const PointCloud& cloud, const GridSpec& grid) {
  VoxelizeResult result{VoxelField(grid, 4), 0};
  std::map<std::int64_t, std::pair<Feature, std::size_t>> sums;
  for (const LidarPoint& p : cloud.points) {
    const auto idx = grid.index_of(p.xyz());
    if (!idx) {
      ++result.dropped;
      continue;
    }
    auto& [sum, count] = sums.try_emplace(grid.linear(*idx), Feature(4, 0.0), 0).first->second;
    sum[0] += p.x;
    sum[1] += p.y;
    sum[2] += p.z;
    sum[3] += p.intensity;
    ++count;
  }
  for (auto& [linear, acc] : sums) {
    for (double& v : acc.first) v /= static_cast<double>(acc.second);
    result.field.set(grid.from_linear(linear), std::move(acc.first));
  }
  return result;
}

}  // namespace vff
