#pragma once

#include <Eigen/Core>

#include <array>
#include <optional>

#include "vff/geometry/augment_record.hpp"
#include "vff/geometry/calib.hpp"

namespace vff {

/// Upright 3D box in the LiDAR frame: center, (length, width, height) along
/// the box's own (x, y, z) axes, and yaw about +z.
struct Box3D {
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  Eigen::Vector3d size = Eigen::Vector3d::Ones();
  double yaw = 0.0;

  bool contains(const Eigen::Vector3d& p, double tol = 1e-9) const;
  std::array<Eigen::Vector3d, 8> corners() const;
  bool operator==(const Box3D&) const = default;
};

/// True when the bird's-eye footprints overlap (separating-axis test).
bool boxes_collide_bev(const Box3D& a, const Box3D& b);

/// The box carried through an augmentation's point transform.
Box3D transform_box(const Box3D& box, const AugmentRecord& augment);

/// Half-open integer pixel rectangle [x0, x1) x [y0, y1).
struct PixelRect {
  int x0 = 0;
  int y0 = 0;
  int x1 = 0;
  int y1 = 0;

  int width() const { return x1 - x0; }
  int height() const { return y1 - y0; }
  bool empty() const { return x1 <= x0 || y1 <= y0; }
  bool contains(int x, int y) const { return x >= x0 && x < x1 && y >= y0 && y < y1; }
  PixelRect clipped(int width, int height) const;
  bool operator==(const PixelRect&) const = default;
};

/// Continuous image-space box, e.g. the hull of projected box corners.
struct ImageBox {
  double x0 = 0.0;
  double y0 = 0.0;
  double x1 = 0.0;
  double y1 = 0.0;

  Eigen::Vector2d center() const { return {(x0 + x1) / 2.0, (y0 + y1) / 2.0}; }
  double diagonal() const;
  /// Smallest integer rectangle covering the box.
  PixelRect cover() const;
  ImageBox scaled(double factor) const { return {x0 * factor, y0 * factor, x1 * factor, y1 * factor}; }
};

/// Bounding box of the projected corners; nullopt when any corner is behind the camera.
std::optional<ImageBox> project_box(const Mat34& camera, const Box3D& box);

/// Bounding box of the four corners after an affine.
ImageBox transform_image_box(const ImageBox& box, const Affine2& affine);

}  // namespace vff
