#include "vff/geometry/augment_record.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace vff {

Affine2 identity_affine() {
  Affine2 a;
  a << 1, 0, 0, 0, 1, 0;
  return a;
}

Eigen::Vector2d apply_affine(const Affine2& a, const Eigen::Vector2d& p) {
  return {a(0, 0) * p.x() + a(0, 1) * p.y() + a(0, 2), a(1, 0) * p.x() + a(1, 1) * p.y() + a(1, 2)};
}

Eigen::Matrix3d affine_homogeneous(const Affine2& a) {
  Eigen::Matrix3d h = Eigen::Matrix3d::Identity();
  h.topRows<2>() = a;
  return h;
}

Affine2 compose_affine(const Affine2& first, const Affine2& second) {
  return (affine_homogeneous(second) * affine_homogeneous(first)).topRows<2>();
}

bool affine_invertible(const Affine2& a) {
  const double det = a(0, 0) * a(1, 1) - a(0, 1) * a(1, 0);
  const double scale = std::max({std::abs(a(0, 0)), std::abs(a(0, 1)), std::abs(a(1, 0)), std::abs(a(1, 1)), 1e-300});
  return std::isfinite(det) && std::abs(det) > 1e-12 * scale * scale;
}

Affine2 invert_affine(const Affine2& a) {
  if (!affine_invertible(a)) throw std::invalid_argument("affine is not invertible");
  return affine_homogeneous(a).inverse().topRows<2>();
}

Eigen::Matrix3d rotation_z(double radians) {
  const double c = std::cos(radians), s = std::sin(radians);
  Eigen::Matrix3d r;
  r << c, -s, 0, s, c, 0, 0, 0, 1;
  return r;
}

Eigen::Matrix3d flip_y() { return Eigen::Vector3d(1.0, -1.0, 1.0).asDiagonal(); }

Eigen::Matrix3d AugmentRecord::point_transform() const {
  Eigen::Matrix3d m = rescale * rotation_z(rotate);
  if (flip) m = m * flip_y();
  return m;
}

AugmentRecord AugmentRecord::then(const AugmentRecord& next) const {
  // next.S * this.S = s2 s1 R2 F2 R1 F1, and F R(t) = R(-t) F.
  AugmentRecord out;
  out.flip = flip != next.flip;
  out.rescale = rescale * next.rescale;
  out.rotate = next.rotate + (next.flip ? -rotate : rotate);
  out.affine2d = compose_affine(affine2d, next.affine2d);
  out.fit_residual = std::max(fit_residual, next.fit_residual);
  return out;
}

}  // namespace vff
