#include "vff/geometry/projection.hpp"

#include <Eigen/Geometry>
#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace vff {

PixelHit project_coords(const ProjectionTransform& vt, double x, double y, double z) {
  const Mat34& m = vt.matrix;
  const double hx = m(0, 0) * x + m(0, 1) * y + m(0, 2) * z + m(0, 3);
  const double hy = m(1, 0) * x + m(1, 1) * y + m(1, 2) * z + m(1, 3);
  const double hz = m(2, 0) * x + m(2, 1) * y + m(2, 2) * z + m(2, 3);
  PixelHit hit;
  hit.depth = hz;
  if (!(hz > 0.0)) {
    hit.status = ProjectionStatus::Behind;
    return hit;
  }
  const double stride = vt.image.stride;
  const double fu = std::floor(hx / hz / stride);
  const double fv = std::floor(hy / hz / stride);
  const bool inside = fu >= 0.0 && fv >= 0.0 && fu < vt.image.feature_width() && fv < vt.image.feature_height();
  // Clamp before narrowing so far-off cells stay representable.
  hit.u = static_cast<int>(std::clamp(fu, -1e9, 1e9));
  hit.v = static_cast<int>(std::clamp(fv, -1e9, 1e9));
  hit.status = inside ? ProjectionStatus::Inside : ProjectionStatus::OutOfBounds;
  return hit;
}

PixelHit project(const ProjectionTransform& vt, const VoxelIndex& v) { return project_coords(vt, v.x, v.y, v.z); }

ContinuousPixel project_world(const Mat34& camera, const Eigen::Vector3d& p) {
  const Eigen::Vector3d h = camera * p.homogeneous();
  return {{h.x() / h.z(), h.y() / h.z()}, h.z()};
}

Mat34 augmented_camera(const KittiCalib& calib, const AugmentRecord& augment) {
  const Eigen::Matrix3d s = augment.point_transform();
  const Eigen::FullPivLU<Eigen::Matrix3d> lu(s);
  if (!lu.isInvertible()) throw std::invalid_argument("augmentation point transform is singular");
  if (!affine_invertible(augment.affine2d)) throw std::invalid_argument("augmentation image affine is singular");
  Eigen::Matrix4d s_inv = Eigen::Matrix4d::Identity();
  s_inv.topLeftCorner<3, 3>() = lu.inverse();
  return affine_homogeneous(augment.affine2d) * calib.lidar_to_image() * s_inv;
}

ProjectionTransform compose_projection(const GridSpec& grid, const KittiCalib& calib, const AugmentRecord& augment,
                                       const ImageGeometry& image) {
  grid.validate();
  if (image.height <= 0 || image.width <= 0 || image.stride <= 0) {
    throw std::invalid_argument("image geometry must have positive size and stride");
  }
  ProjectionTransform vt;
  vt.matrix = augmented_camera(calib, augment) * grid.voxel_to_world();
  vt.image = image;
  const Eigen::Matrix3d left = vt.matrix.leftCols<3>();
  const Eigen::FullPivLU<Eigen::Matrix3d> lu(left);
  if (!lu.isInvertible()) throw std::invalid_argument("composed voxel-to-image matrix is singular");
  return vt;
}

}  // namespace vff
