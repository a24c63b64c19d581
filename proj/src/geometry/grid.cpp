#include "vff/geometry/grid.hpp"

#include <cmath>
#include <stdexcept>

namespace vff {

std::string to_string(const VoxelIndex& v) {
  return "(" + std::to_string(v.x) + "," + std::to_string(v.y) + "," + std::to_string(v.z) + ")";
}

void GridSpec::validate() const {
  for (int a = 0; a < 3; ++a) {
    if (dims[a] <= 0) throw std::invalid_argument("grid dims must be positive");
    if (!(voxel_size[a] > 0.0) || !std::isfinite(voxel_size[a])) throw std::invalid_argument("voxel size must be positive");
    if (!std::isfinite(origin[a])) throw std::invalid_argument("grid origin must be finite");
  }
}

VoxelIndex GridSpec::from_linear(std::int64_t i) const {
  const int z = static_cast<int>(i % dims[2]);
  i /= dims[2];
  const int y = static_cast<int>(i % dims[1]);
  return {static_cast<int>(i / dims[1]), y, z};
}

Eigen::Vector3d GridSpec::world_of(const VoxelIndex& v) const {
  return {origin.x() + (v.x + 0.5) * voxel_size.x(), origin.y() + (v.y + 0.5) * voxel_size.y(),
          origin.z() + (v.z + 0.5) * voxel_size.z()};
}

std::optional<VoxelIndex> GridSpec::index_of(const Eigen::Vector3d& p) const {
  VoxelIndex v;
  int* out[3] = {&v.x, &v.y, &v.z};
  for (int a = 0; a < 3; ++a) {
    const double f = std::floor((p[a] - origin[a]) / voxel_size[a]);
    if (!(f >= 0.0 && f < dims[a])) return std::nullopt;
    *out[a] = static_cast<int>(f);
  }
  return v;
}

Eigen::Matrix4d GridSpec::voxel_to_world() const {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  for (int a = 0; a < 3; ++a) {
    m(a, a) = voxel_size[a];
    m(a, 3) = origin[a] + 0.5 * voxel_size[a];
  }
  return m;
}

Eigen::Vector3d GridSpec::normalized(const VoxelIndex& v) const {
  const int idx[3] = {v.x, v.y, v.z};
  Eigen::Vector3d n;
  for (int a = 0; a < 3; ++a) n[a] = dims[a] > 1 ? static_cast<double>(idx[a]) / (dims[a] - 1) : 0.0;
  return n;
}

}  // namespace vff
