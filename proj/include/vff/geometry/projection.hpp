#pragma once

#include <Eigen/Core>

#include "vff/geometry/augment_record.hpp"
#include "vff/geometry/calib.hpp"
#include "vff/geometry/grid.hpp"

namespace vff {

struct ImageGeometry {
  int height = 0;
  int width = 0;
  int stride = 4;  // image pixels per feature cell

  int feature_height() const { return (height + stride - 1) / stride; }
  int feature_width() const { return (width + stride - 1) / stride; }
};

/// Voxel -> image mapping: homogeneous integer voxel coordinates to
/// homogeneous image pixels, plus the feature stride and image size.
struct ProjectionTransform {
  Mat34 matrix = Mat34::Zero();
  ImageGeometry image;
};

enum class ProjectionStatus { Inside, Behind, OutOfBounds };

struct PixelHit {
  ProjectionStatus status = ProjectionStatus::Behind;
  int u = 0;  // feature-grid column
  int v = 0;  // feature-grid row
  double depth = 0.0;

  bool inside() const { return status == ProjectionStatus::Inside; }
};

/// Feature cell of a voxel center: floor(x/z / stride), floor(y/z / stride).
/// Behind when the homogeneous depth is not positive; OutOfBounds when the
/// cell lies outside the feature map (u, v are still filled in).
PixelHit project(const ProjectionTransform& vt, const VoxelIndex& v);

/// Same predicate on arbitrary (fractional) voxel coordinates.
PixelHit project_coords(const ProjectionTransform& vt, double x, double y, double z);

/// Continuous pixel of a world point under a 3x4 camera matrix, with its depth.
struct ContinuousPixel {
  Eigen::Vector2d pixel = Eigen::Vector2d::Zero();
  double depth = 0.0;
};
ContinuousPixel project_world(const Mat34& camera, const Eigen::Vector3d& p);

/// Camera matrix for augmented world points: A * P * S^-1, where S is the
/// augmented point transform and A the image affine. Throws when the
/// composed left 3x3 block is singular.
Mat34 augmented_camera(const KittiCalib& calib, const AugmentRecord& augment);

/// Voxel -> augmented-image transform for a grid laid out in the augmented frame.
ProjectionTransform compose_projection(const GridSpec& grid, const KittiCalib& calib, const AugmentRecord& augment,
                                       const ImageGeometry& image);

}  // namespace vff
