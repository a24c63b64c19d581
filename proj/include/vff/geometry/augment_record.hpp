#pragma once

#include <Eigen/Core>

namespace vff {

/// 2x3 affine acting on continuous pixel coordinates (x right, y down).
using Affine2 = Eigen::Matrix<double, 2, 3>;

Affine2 identity_affine();
Eigen::Vector2d apply_affine(const Affine2& a, const Eigen::Vector2d& p);
/// Affine applying `first` and then `second`.
Affine2 compose_affine(const Affine2& first, const Affine2& second);
Affine2 invert_affine(const Affine2& a);
bool affine_invertible(const Affine2& a);
/// Embeds the affine into a 3x3 homogeneous matrix (last row 0 0 1).
Eigen::Matrix3d affine_homogeneous(const Affine2& a);

/// Exact record of a sample-static augmentation. Points are transformed as
/// p' = rescale * Rz(rotate) * Flip * p, Flip mirroring y (the camera-forward
/// vertical plane of a KITTI LiDAR frame). The image is transformed by
/// `affine2d`; rotation is never applied to the image and is recovered by
/// reprojection instead.
struct AugmentRecord {
  bool flip = false;
  double rescale = 1.0;
  double rotate = 0.0;
  Affine2 affine2d = identity_affine();
  double fit_residual = 0.0;

  Eigen::Matrix3d point_transform() const;
  /// The record of applying *this first and `next` afterwards.
  AugmentRecord then(const AugmentRecord& next) const;
};

Eigen::Matrix3d rotation_z(double radians);
Eigen::Matrix3d flip_y();

}  // namespace vff
