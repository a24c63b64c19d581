#pragma once

#include <Eigen/Core>

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace vff {

using Mat34 = Eigen::Matrix<double, 3, 4>;

/// The three matrices of a KITTI object calibration file that map a LiDAR
/// point onto the left color image.
struct KittiCalib {
  Mat34 P2 = Mat34::Zero();
  Eigen::Matrix3d R0_rect = Eigen::Matrix3d::Identity();
  Mat34 Tr_velo_to_cam = Mat34::Zero();

  /// P2 * R0_rect * Tr_velo_to_cam, mapping homogeneous LiDAR points to homogeneous pixels.
  Mat34 lidar_to_image() const;
};

/// Parses "key: v0 v1 ..." lines. P2 and Tr_velo_to_cam need 12 values,
/// R0_rect needs 9; other keys are ignored. Throws std::runtime_error on a
/// missing key ("missing P2"), a malformed number or a wrong value count.
KittiCalib parse_kitti_calib(std::string_view text);

struct PinholeIntrinsics {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
};

/// Calibration of an ideal camera looking along LiDAR +x (camera x = -y,
/// camera y = -z, camera z = x), shifted by `translation` in camera axes.
KittiCalib make_pinhole_calib(const PinholeIntrinsics& k, const Eigen::Vector3d& translation = Eigen::Vector3d::Zero());
std::string format_kitti_calib(const KittiCalib& calib);
KittiCalib load_kitti_calib(const std::filesystem::path& path);

struct LidarPoint {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double intensity = 0.0;

  Eigen::Vector3d xyz() const { return {x, y, z}; }
  bool operator==(const LidarPoint&) const = default;
};

struct PointCloud {
  std::vector<LidarPoint> points;

  std::size_t size() const { return points.size(); }
  bool operator==(const PointCloud&) const = default;
};

/// KITTI velodyne layout: little-endian float32 (x, y, z, intensity) records.
PointCloud read_kitti_bin(const std::filesystem::path& path);
void write_kitti_bin(const std::filesystem::path& path, const PointCloud& cloud);

}  // namespace vff
