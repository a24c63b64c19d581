#include <gtest/gtest.h>

#include <Eigen/Dense>

#include <cmath>
#include <filesystem>
#include <map>
#include <random>

#include "fixtures.hpp"
#include "vff/geometry/augment_record.hpp"
#include "vff/geometry/calib.hpp"
#include "vff/geometry/grid.hpp"
#include "vff/geometry/projection.hpp"
#include "vff/geometry/voxel_field.hpp"

using namespace vff;

namespace {

constexpr const char* kKittiCalib =
    "P0: 7.070493e+02 0.000000e+00 6.040814e+02 0.000000e+00 0.000000e+00 7.070493e+02 1.805066e+02 "
    "0.000000e+00 0.000000e+00 0.000000e+00 1.000000e+00 0.000000e+00\n"
    "P2: 7.070493e+02 0.000000e+00 6.040814e+02 4.575831e+01 0.000000e+00 7.070493e+02 1.805066e+02 "
    "-3.454157e-01 0.000000e+00 0.000000e+00 1.000000e+00 4.981016e-03\n"
    "R0_rect: 9.999128e-01 1.009263e-02 -8.511932e-03 -1.012729e-02 9.999406e-01 -4.037671e-03 "
    "8.470675e-03 4.123522e-03 9.999556e-01\n"
    "Tr_velo_to_cam: 6.927964e-03 -9.999722e-01 -2.757829e-03 -2.457729e-02 -1.162982e-03 2.749836e-03 "
    "-9.999955e-01 -6.127237e-02 9.999753e-01 6.931141e-03 -1.151719e-03 -3.321029e-01\n"
    "Tr_imu_to_velo: 9.999976e-01 7.553071e-04 -2.035826e-03 -8.086759e-01 -7.854027e-04 9.998898e-01 "
    "-1.482298e-02 3.195559e-01 2.024406e-03 1.482454e-02 9.998881e-01 -7.997231e-01\n";

constexpr const char* kIdentityCalib =
    "P2: 1 0 0 0 0 1 0 0 0 0 1 0\n"
    "R0_rect: 1 0 0 0 1 0 0 0 1\n"
    "Tr_velo_to_cam: 1 0 0 0 0 1 0 0 0 0 1 0\n";

// Explicit per-element products; never touches the pre-composed matrix.
Eigen::Vector3d camera_oracle(const KittiCalib& c, const Eigen::Vector3d& p) {
  double cam[3], rect[3], img[3];
  for (int r = 0; r < 3; ++r) {
    cam[r] = c.Tr_velo_to_cam(r, 3);
    for (int k = 0; k < 3; ++k) cam[r] += c.Tr_velo_to_cam(r, k) * p[k];
  }
  for (int r = 0; r < 3; ++r) {
    rect[r] = 0.0;
    for (int k = 0; k < 3; ++k) rect[r] += c.R0_rect(r, k) * cam[k];
  }
  for (int r = 0; r < 3; ++r) {
    img[r] = c.P2(r, 3);
    for (int k = 0; k < 3; ++k) img[r] += c.P2(r, k) * rect[k];
  }
  return {img[0], img[1], img[2]};
}

Eigen::Vector3d center_oracle(const GridSpec& g, const VoxelIndex& v) {
  return {g.origin.x() + (v.x + 0.5) * g.voxel_size.x(), g.origin.y() + (v.y + 0.5) * g.voxel_size.y(),
          g.origin.z() + (v.z + 0.5) * g.voxel_size.z()};
}

Eigen::Vector3d random_point(std::mt19937_64& rng, const GridSpec& g) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::Vector3d p;
  for (int a = 0; a < 3; ++a) p[a] = g.origin[a] + u(rng) * g.dims[a] * g.voxel_size[a];
  return p;
}

}  // namespace

TEST(Calib, ParsesIdentityFixture) {
  const KittiCalib c = parse_kitti_calib(kIdentityCalib);
  Mat34 expected = Mat34::Zero();
  expected.leftCols<3>().setIdentity();
  EXPECT_EQ(c.lidar_to_image(), expected);
}

TEST(Calib, KittiFixtureMapsKnownPoint) {
  const KittiCalib c = parse_kitti_calib(kKittiCalib);
  EXPECT_DOUBLE_EQ(c.P2(0, 3), 45.75831);
  EXPECT_DOUBLE_EQ(c.Tr_velo_to_cam(2, 3), -0.3321029);
  const ContinuousPixel px = project_world(c.lidar_to_image(), {10.0, 1.0, -1.0});
  EXPECT_NEAR(px.pixel.x(), 533.5710678079944, 1e-9);
  EXPECT_NEAR(px.pixel.y(), 246.16967726806487, 1e-9);
  EXPECT_NEAR(px.depth, 9.67605018, 1e-8);
}

TEST(Calib, MissingKeyIsReported) {
  try {
    parse_kitti_calib("R0_rect: 1 0 0 0 1 0 0 0 1\nTr_velo_to_cam: 1 0 0 0 0 1 0 0 0 0 1 0\n");
    FAIL() << "expected an exception";
  } catch (const std::runtime_error& e) {
    EXPECT_STREQ(e.what(), "missing P2");
  }
}

TEST(Calib, MalformedNumberIsReported) {
  try {
    parse_kitti_calib("P2: 1 0 0 0 0 1 0 0 0 0 1 abc\nR0_rect: 1 0 0 0 1 0 0 0 1\n");
    FAIL() << "expected an exception";
  } catch (const std::runtime_error& e) {
    EXPECT_STREQ(e.what(), "malformed number 'abc' for P2");
  }
}

TEST(Calib, WrongValueCountIsReported) {
  try {
    parse_kitti_calib("P2: 1 0 0 0 0 1 0 0 0 0 1\nR0_rect: 1 0 0 0 1 0 0 0 1\nTr_velo_to_cam: 1 0 0 0 0 1 0 0 0 0 1 0\n");
    FAIL() << "expected an exception";
  } catch (const std::runtime_error& e) {
    EXPECT_STREQ(e.what(), "P2 expects 12 values, got 11");
  }
}

TEST(Calib, FormatRoundTripsExactly) {
  std::mt19937_64 rng(3);
  const KittiCalib c = fixture::random_calib(rng, fixture::toy_image());
  const KittiCalib back = parse_kitti_calib(format_kitti_calib(c));
  EXPECT_EQ(back.P2, c.P2);
  EXPECT_EQ(back.R0_rect, c.R0_rect);
  EXPECT_EQ(back.Tr_velo_to_cam, c.Tr_velo_to_cam);
}

TEST(Calib, PointFileRoundTrip) {
  PointCloud cloud;
  cloud.points = {{1.5, -2.25, 0.125, 0.5}, {10.0, 3.0, -1.75, 0.0}, {-0.0625, 8.0, 2.0, 1.0}};
  const auto path = std::filesystem::temp_directory_path() / "vff_points_roundtrip.bin";
  write_kitti_bin(path, cloud);
  EXPECT_EQ(std::filesystem::file_size(path), 48u);
  EXPECT_EQ(read_kitti_bin(path), cloud);
  std::filesystem::resize_file(path, 47);
  EXPECT_THROW(read_kitti_bin(path), std::runtime_error);
  std::filesystem::remove(path);
}

TEST(Grid, CenterAndIndexRoundTrip) {
  const GridSpec g = fixture::toy_grid(8);
  for (std::int64_t i = 0; i < g.voxel_count(); ++i) {
    const VoxelIndex v = g.from_linear(i);
    EXPECT_EQ(g.linear(v), i);
    EXPECT_EQ(g.world_of(v), center_oracle(g, v));
    const auto back = g.index_of(g.world_of(v));
    ASSERT_TRUE(back.has_value());
    EXPECT_EQ(*back, v);
  }
  EXPECT_FALSE(g.index_of({3.99, 0.0, 0.0}).has_value());
  EXPECT_FALSE(g.index_of({20.0, 0.0, 0.0}).has_value());
}

TEST(Grid, LinearOrderMatchesLexicographicOrder) {
  const GridSpec g = fixture::toy_grid(4);
  for (std::int64_t i = 1; i < g.voxel_count(); ++i) EXPECT_LT(g.from_linear(i - 1), g.from_linear(i));
}

TEST(Grid, NormalizedCoordinatesSpanUnitCube) {
  const GridSpec g = fixture::toy_grid(8);
  EXPECT_EQ(g.normalized({0, 0, 0}), Eigen::Vector3d::Zero());
  EXPECT_EQ(g.normalized({7, 7, 7}), Eigen::Vector3d::Ones());
  EXPECT_DOUBLE_EQ(g.normalized({7, 0, 0}).x(), 1.0);
}

TEST(Grid, RejectsInvalidSpec) {
  GridSpec g = fixture::toy_grid(4);
  g.dims[1] = 0;
  EXPECT_THROW(g.validate(), std::invalid_argument);
  g = fixture::toy_grid(4);
  g.voxel_size.z() = -1.0;
  EXPECT_THROW(g.validate(), std::invalid_argument);
}

TEST(Projection, IdentityCalibrationGivesVoxelToWorld) {
  const GridSpec g = fixture::toy_grid(4);
  const ProjectionTransform vt = compose_projection(g, parse_kitti_calib(kIdentityCalib), {}, {64, 64, 1});
  EXPECT_TRUE(vt.matrix.isApprox(g.voxel_to_world().topRows<3>(), 1e-15));
}

TEST(Projection, OpticalAxisHitsPrincipalPoint) {
  // Voxel centers at y = 0, z = 0 lie on the optical axis of the toy camera.
  GridSpec g;
  g.origin = {2.0, -0.5, -0.5};
  g.voxel_size = {1.0, 1.0, 1.0};
  g.dims = {10, 1, 1};
  const ProjectionTransform vt = compose_projection(g, fixture::toy_calib(), {}, fixture::toy_image());
  for (int x = 0; x < 10; ++x) {
    const ContinuousPixel px = project_world(fixture::toy_calib().lidar_to_image(), g.world_of({x, 0, 0}));
    EXPECT_DOUBLE_EQ(px.pixel.x(), 64.0);
    EXPECT_DOUBLE_EQ(px.pixel.y(), 32.0);
    EXPECT_DOUBLE_EQ(px.depth, 2.5 + x);
    const PixelHit hit = project_coords(vt, x, 0.0, 0.0);
    EXPECT_TRUE(hit.inside());
    EXPECT_NEAR(hit.depth, 2.5 + x, 1e-12);
  }
}

TEST(Projection, PointsBehindCameraAreFlagged) {
  GridSpec g;
  g.origin = {-4.0, -2.0, -2.0};
  g.voxel_size = {1.0, 1.0, 1.0};
  g.dims = {2, 4, 4};
  const ProjectionTransform vt = compose_projection(g, fixture::toy_calib(), {}, fixture::toy_image());
  for (int y = 0; y < 4; ++y)
    for (int z = 0; z < 4; ++z) EXPECT_EQ(project(vt, {0, y, z}).status, ProjectionStatus::Behind);
}

TEST(Projection, FarOffCellsAreOutOfBounds) {
  const GridSpec g = fixture::toy_grid(16);
  const ProjectionTransform vt = compose_projection(g, fixture::toy_calib(), {}, fixture::toy_image());
  // Nearest slab corner: y = -7.5 at x = 4.5 lands far right of a 128 px image.
  const PixelHit hit = project(vt, {0, 0, 8});
  EXPECT_EQ(hit.status, ProjectionStatus::OutOfBounds);
  EXPECT_GE(hit.u, fixture::toy_image().feature_width());
}

TEST(Projection, MatchesExplicitMultiplyOracleOnEveryVoxel) {
  std::mt19937_64 rng(11);
  const ImageGeometry image = fixture::toy_image();
  const GridSpec g = fixture::toy_grid(8);
  for (int trial = 0; trial < 5; ++trial) {
    const KittiCalib calib = fixture::random_calib(rng, image);
    const ProjectionTransform vt = compose_projection(g, calib, {}, image);
    int inside = 0;
    for (std::int64_t i = 0; i < g.voxel_count(); ++i) {
      const VoxelIndex v = g.from_linear(i);
      const Eigen::Vector3d h = camera_oracle(calib, center_oracle(g, v));
      const PixelHit hit = project(vt, v);
      ASSERT_GT(h.z(), 0.0);
      const int u = static_cast<int>(std::floor(h.x() / h.z() / image.stride));
      const int w = static_cast<int>(std::floor(h.y() / h.z() / image.stride));
      const bool in = u >= 0 && w >= 0 && u < image.feature_width() && w < image.feature_height();
      EXPECT_EQ(hit.u, u) << to_string(v);
      EXPECT_EQ(hit.v, w) << to_string(v);
      EXPECT_EQ(hit.inside(), in) << to_string(v);
      EXPECT_NEAR(hit.depth, h.z(), 1e-9);
      inside += in;
    }
    EXPECT_GT(inside, 0);
  }
}

TEST(Projection, FlipTwoPathAgreement) {
  std::mt19937_64 rng(5);
  const ImageGeometry image = fixture::toy_image();
  const KittiCalib calib = fixture::random_calib(rng, image);
  AugmentRecord rec;
  rec.flip = true;
  rec.affine2d << -1, 0, image.width, 0, 1, 0;
  const Mat34 cam = augmented_camera(calib, rec);
  const GridSpec g = fixture::toy_grid();
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const Eigen::Vector3d p = random_point(rng, g);
    const Eigen::Vector3d p_aug(p.x(), -p.y(), p.z());
    const Eigen::Vector2d direct = project_world(calib.lidar_to_image(), p).pixel;
    const Eigen::Vector2d mirrored(image.width - direct.x(), direct.y());
    worst = std::max(worst, (project_world(cam, p_aug).pixel - mirrored).norm());
  }
  EXPECT_LT(worst, 1e-9);
}

TEST(Projection, ScaleAndRotateTwoPathAgreement) {
  std::mt19937_64 rng(6);
  const ImageGeometry image = fixture::toy_image();
  const KittiCalib calib = fixture::random_calib(rng, image);
  const GridSpec g = fixture::toy_grid();
  AugmentRecord rec;
  rec.rescale = 1.05;
  rec.rotate = 0.2;
  rec.affine2d << 1.1, 0.0, -3.0, 0.0, 0.9, 2.0;
  const Mat34 cam = augmented_camera(calib, rec);
  const Eigen::Matrix3d s = rec.rescale * rotation_z(rec.rotate);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const Eigen::Vector3d p = random_point(rng, g);
    const Eigen::Vector2d expected = apply_affine(rec.affine2d, project_world(calib.lidar_to_image(), p).pixel);
    worst = std::max(worst, (project_world(cam, s * p).pixel - expected).norm());
  }
  EXPECT_LT(worst, 1e-9);
}

TEST(Projection, AugmentedVoxelCentersMatchAugmentedCamera) {
  std::mt19937_64 rng(8);
  const ImageGeometry image = fixture::toy_image();
  const KittiCalib calib = fixture::random_calib(rng, image);
  AugmentRecord rec;
  rec.flip = true;
  rec.rotate = -0.1;
  rec.rescale = 0.95;
  rec.affine2d << -0.95, 0.0, 0.95 * image.width, 0.0, 0.95, 1.0;
  const GridSpec g = fixture::toy_grid(8);
  const ProjectionTransform vt = compose_projection(g, calib, rec, image);
  const Mat34 cam = augmented_camera(calib, rec);
  for (std::int64_t i = 0; i < g.voxel_count(); ++i) {
    const VoxelIndex v = g.from_linear(i);
    const ContinuousPixel px = project_world(cam, center_oracle(g, v));
    const PixelHit hit = project(vt, v);
    EXPECT_NEAR(hit.depth, px.depth, 1e-9);
    EXPECT_EQ(hit.u, static_cast<int>(std::floor(px.pixel.x() / image.stride))) << to_string(v);
    EXPECT_EQ(hit.v, static_cast<int>(std::floor(px.pixel.y() / image.stride))) << to_string(v);
  }
}

TEST(Projection, SingularAugmentationIsRejected) {
  AugmentRecord rec;
  rec.rescale = 0.0;
  EXPECT_THROW(compose_projection(fixture::toy_grid(4), fixture::toy_calib(), rec, fixture::toy_image()),
               std::invalid_argument);
  rec = {};
  rec.affine2d.setZero();
  EXPECT_THROW(compose_projection(fixture::toy_grid(4), fixture::toy_calib(), rec, fixture::toy_image()),
               std::invalid_argument);
}

TEST(AugmentRecordTest, ComposesFlipsAndAffines) {
  AugmentRecord a;
  a.flip = true;
  a.affine2d << -1, 0, 100, 0, 1, 0;
  AugmentRecord b;
  b.rescale = 2.0;
  b.affine2d << 2, 0, 0, 0, 2, 0;
  const AugmentRecord ab = a.then(b);
  EXPECT_TRUE(ab.flip);
  EXPECT_DOUBLE_EQ(ab.rescale, 2.0);
  const Eigen::Vector2d p(10.0, 5.0);
  EXPECT_TRUE(apply_affine(ab.affine2d, p).isApprox(apply_affine(b.affine2d, apply_affine(a.affine2d, p))));
  EXPECT_TRUE(ab.point_transform().isApprox(b.point_transform() * a.point_transform(), 1e-15));
  EXPECT_FALSE(a.then(a).flip);
}

TEST(AugmentRecordTest, ComposedRotationMatchesMatrixProduct) {
  AugmentRecord a;
  a.flip = true;
  a.rotate = 0.3;
  AugmentRecord b;
  b.rotate = -0.1;
  b.rescale = 1.2;
  EXPECT_TRUE(a.then(b).point_transform().isApprox(b.point_transform() * a.point_transform(), 1e-14));
  EXPECT_TRUE(b.then(a).point_transform().isApprox(a.point_transform() * b.point_transform(), 1e-14));
}

TEST(Voxelize, SinglePointOccupiesItsVoxel) {
  const GridSpec g = fixture::toy_grid(16);
  PointCloud cloud;
  cloud.points = {{10.2, 0.3, -1.1, 0.7}};
  const VoxelizeResult r = voxelize(cloud, g);
  EXPECT_EQ(r.field.occupancy_count(), 1u);
  EXPECT_EQ(r.dropped, 0u);
  const VoxelIndex v{6, 8, 7};
  ASSERT_TRUE(r.field.occupied(v));
  EXPECT_EQ(r.field.read(v), (Feature{10.2, 0.3, -1.1, 0.7}));
  EXPECT_EQ(r.field.read({0, 0, 0}), Feature(4, 0.0));
}

TEST(Voxelize, AveragesPointsSharingAVoxel) {
  const GridSpec g = fixture::toy_grid(16);
  PointCloud cloud;
  cloud.points = {{10.25, 0.25, -1.125, 0.5}, {10.75, 0.75, -1.0625, 1.0}, {50.0, 0.0, 0.0, 1.0}};
  const VoxelizeResult r = voxelize(cloud, g);
  EXPECT_EQ(r.field.occupancy_count(), 1u);
  EXPECT_EQ(r.dropped, 1u);
  EXPECT_EQ(r.field.read({6, 8, 7}), (Feature{10.5, 0.5, -1.09375, 0.75}));
}

TEST(Voxelize, OccupancyMatchesBruteForceBinning) {
  const GridSpec g = fixture::toy_grid(16);
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> x(2.0, 22.0), y(-10.0, 10.0), z(-4.0, 2.0), it(0.0, 1.0);
  PointCloud cloud;
  for (int i = 0; i < 1000; ++i) cloud.points.push_back({x(rng), y(rng), z(rng), it(rng)});

  std::map<VoxelIndex, int> counts;
  std::size_t outside = 0;
  for (const LidarPoint& p : cloud.points) {
    const double c[3] = {p.x, p.y, p.z};
    int idx[3];
    bool ok = true;
    for (int a = 0; a < 3; ++a) {
      idx[a] = static_cast<int>(std::floor((c[a] - g.origin[a]) / g.voxel_size[a]));
      ok = ok && idx[a] >= 0 && idx[a] < g.dims[a];
    }
    if (ok) {
      ++counts[{idx[0], idx[1], idx[2]}];
    } else {
      ++outside;
    }
  }
  const VoxelizeResult r = voxelize(cloud, g);
  EXPECT_EQ(r.dropped, outside);
  ASSERT_EQ(r.field.occupancy_count(), counts.size());
  for (const auto& [v, n] : counts) EXPECT_TRUE(r.field.occupied(v)) << to_string(v);
}

TEST(VoxelFieldTest, AddAccumulatesAndChecksShape) {
  VoxelField f(fixture::toy_grid(4), 2);
  const double d[2] = {1.0, 2.0};
  f.add({1, 2, 3}, d);
  f.add({1, 2, 3}, d);
  EXPECT_EQ(f.read({1, 2, 3}), (Feature{2.0, 4.0}));
  EXPECT_EQ(f.occupancy_count(), 1u);
  EXPECT_THROW(f.set({0, 0, 0}, Feature{1.0}), std::invalid_argument);
  EXPECT_THROW(f.set({4, 0, 0}, Feature{1.0, 2.0}), std::out_of_range);
}
