#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "vff/geometry/boxes.hpp"
#include "vff/geometry/calib.hpp"
#include "vff/numerics/tensor.hpp"

namespace vff {

/// A ground-truth object cut from a source frame: its LiDAR points, box,
/// image crop and where that crop sits in the image.
struct SampledObject {
  PointCloud points;
  Box3D box3d;
  Tensor crop;      // [C, rect.height(), rect.width()]
  PixelRect rect;   // crop placement in image pixels
  double depth = 0.0;  // camera depth of the box center

  /// Throws std::invalid_argument when points leave the box or the crop does not match rect.
  void validate() const;
};

/// Cuts the object inside `box` out of a frame. The crop is the projected
/// box hull clipped to the image; depth is the box center's camera depth.
SampledObject extract_object(const PointCloud& points, const Tensor& image, const Box3D& box, const Mat34& camera);

struct PasteResult {
  PointCloud points;
  Tensor image;
  std::vector<std::size_t> z_order;  // object indices in paint order, far to near
  std::size_t removed = 0;           // points hidden by a nearer crop
};

/// Copy-paste of database objects into a scene. Crops are painted far to
/// near by depth (clipped at the image border). A point is dropped when its
/// pixel lies under the crop of a nearer object other than its own. Object
/// footprints must not collide with each other.
PasteResult gt_sample_paste(const PointCloud& scene_points, const Tensor& scene_image,
                            const std::vector<SampledObject>& objects, const Mat34& camera);

struct GtEntry {
  std::string label;
  SampledObject object;
};

/// Directory layout: index.json lists {label, points, meta, crop} file names
/// per entry; points use the KITTI .bin layout, meta is JSON with box3d,
/// rect and depth, crop is little-endian float32 CHW after a shape triple.
void save_gt_database(const std::filesystem::path& dir, const std::vector<GtEntry>& entries);
std::vector<GtEntry> load_gt_database(const std::filesystem::path& dir);

}  // namespace vff
