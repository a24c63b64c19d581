#include <gtest/gtest.h>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <numbers>
#include <random>
#include <set>

#include "fixtures.hpp"
#include "vff/augmentor/augment.hpp"
#include "vff/augmentor/paste.hpp"
#include "vff/geometry/boxes.hpp"
#include "vff/geometry/projection.hpp"

using namespace vff;

namespace {

Tensor random_image(std::mt19937_64& rng, std::size_t c, std::size_t h, std::size_t w) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Tensor t({c, h, w});
  for (double& v : t.data()) v = u(rng);
  return t;
}

// Points spread over the toy grid volume, most of them in view.
PointCloud random_cloud(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> x(5.0, 19.0), y(-4.0, 4.0), z(-2.5, 0.5), it(0.0, 1.0);
  PointCloud cloud;
  for (int i = 0; i < n; ++i) cloud.points.push_back({x(rng), y(rng), z(rng), it(rng)});
  return cloud;
}

SampledObject make_object(const Box3D& box, const Mat34& camera, const vff::ImageGeometry& image, double shade,
                          std::mt19937_64& rng, int n_points) {
  SampledObject o;
  o.box3d = box;
  std::uniform_real_distribution<double> u(-0.45, 0.45);
  for (int i = 0; i < n_points; ++i) {
    const Eigen::Vector3d local(u(rng) * box.size.x(), u(rng) * box.size.y(), u(rng) * box.size.z());
    const Eigen::Vector3d p = box.center + Eigen::AngleAxisd(box.yaw, Eigen::Vector3d::UnitZ()) * local;
    o.points.points.push_back({p.x(), p.y(), p.z(), shade});
  }
  o.rect = project_box(camera, box)->cover().clipped(image.width, image.height);
  o.depth = project_world(camera, box.center).depth;
  o.crop = Tensor({1, static_cast<std::size_t>(o.rect.height()), static_cast<std::size_t>(o.rect.width())});
  for (std::size_t i = 0; i < o.crop.size(); ++i) o.crop[i] = shade + 1e-3 * static_cast<double>(i);
  return o;
}

}  // namespace

TEST(FitAffine, IdentityPairs) {
  std::vector<Eigen::Vector2d> pts = {{0, 0}, {10, 0}, {0, 10}, {7, 3}};
  const AffineFit fit = fit_affine(pts, pts);
  EXPECT_TRUE(fit.affine.isApprox(identity_affine(), 1e-12));
  EXPECT_LT(fit.residual, 1e-12);
}

TEST(FitAffine, RecoversKnownAffine) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 200.0);
  Affine2 truth;
  truth << 1.07, -0.03, 4.5, 0.02, 0.96, -7.25;
  std::vector<Eigen::Vector2d> src, dst;
  for (int i = 0; i < 100; ++i) {
    src.emplace_back(u(rng), u(rng));
    dst.push_back(apply_affine(truth, src.back()));
  }
  const AffineFit fit = fit_affine(src, dst);
  EXPECT_LT((fit.affine - truth).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_LT(fit.residual, 1e-9);
}

TEST(FitAffine, NoisyPairsStayWithinNoiseBound) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 200.0), noise(-0.5, 0.5);
  Affine2 truth;
  truth << 0.9, 0.1, 3.0, -0.05, 1.1, 1.0;
  std::vector<Eigen::Vector2d> src, dst;
  for (int i = 0; i < 100; ++i) {
    src.emplace_back(u(rng), u(rng));
    dst.push_back(apply_affine(truth, src.back()) + Eigen::Vector2d(noise(rng), noise(rng)));
  }
  EXPECT_LE(fit_affine(src, dst).residual, 0.5 * std::sqrt(2.0));
}

TEST(FitAffine, RejectsDegenerateInput) {
  const std::vector<Eigen::Vector2d> line = {{0, 0}, {1, 1}, {2, 2}, {5, 5}};
  EXPECT_THROW(fit_affine(line, line), std::invalid_argument);
  const std::vector<Eigen::Vector2d> two = {{0, 0}, {1, 0}};
  EXPECT_THROW(fit_affine(two, two), std::invalid_argument);
}

TEST(WarpImage, IdentityAndIntegerShift) {
  std::mt19937_64 rng(3);
  const Tensor img = random_image(rng, 2, 6, 9);
  EXPECT_EQ(warp_image(img, identity_affine()).values(), img.values());
  Affine2 shift;
  shift << 1, 0, 2, 0, 1, 1;
  const Tensor out = warp_image(img, shift);
  for (std::size_t y = 0; y < 6; ++y)
    for (std::size_t x = 0; x < 9; ++x) {
      const double expected = (x >= 2 && y >= 1) ? img.at(1, y - 1, x - 2) : 0.0;
      EXPECT_EQ(out.at(1, y, x), expected);
    }
}

TEST(Flip, DoubleFlipIsIdentity) {
  std::mt19937_64 rng(4);
  const PointCloud cloud = random_cloud(rng, 50);
  const Tensor img = random_image(rng, 3, 8, 12);
  const AugmentedScene once = apply_flip(cloud, img);
  const AugmentedScene twice = apply_flip(once.points, once.image);
  EXPECT_EQ(twice.points, cloud);
  EXPECT_EQ(twice.image.values(), img.values());
  const AugmentRecord both = once.record.then(twice.record);
  EXPECT_FALSE(both.flip);
  EXPECT_TRUE(both.affine2d.isApprox(identity_affine(), 0.0));
}

TEST(Flip, MirrorsPixelColumn) {
  // Centered principal point: the mirrored point lands in column W-1-u under the same camera.
  const ImageGeometry image = fixture::toy_image();
  const Mat34 cam = fixture::toy_calib().lidar_to_image();
  std::mt19937_64 rng(5);
  const PointCloud cloud = random_cloud(rng, 200);
  const AugmentedScene flipped = apply_flip(cloud, Tensor({1, 64, 128}));
  int checked = 0;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const ContinuousPixel a = project_world(cam, cloud.points[i].xyz());
    const ContinuousPixel b = project_world(cam, flipped.points.points[i].xyz());
    if (a.pixel.x() < 0 || a.pixel.x() >= image.width) continue;
    EXPECT_EQ(static_cast<int>(std::floor(b.pixel.x())), image.width - 1 - static_cast<int>(std::floor(a.pixel.x())));
    EXPECT_EQ(std::floor(b.pixel.y()), std::floor(a.pixel.y()));
    ++checked;
  }
  EXPECT_GT(checked, 100);
}

TEST(Flip, AugmentedCameraMirrorsOffCenterCamera) {
  std::mt19937_64 rng(6);
  const ImageGeometry image = fixture::toy_image();
  const KittiCalib calib = fixture::random_calib(rng, image);
  const PointCloud cloud = random_cloud(rng, 200);
  const AugmentedScene flipped = apply_flip(cloud, Tensor({1, 64, 128}));
  const Mat34 cam = augmented_camera(calib, flipped.record);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const ContinuousPixel a = project_world(calib.lidar_to_image(), cloud.points[i].xyz());
    const ContinuousPixel b = project_world(cam, flipped.points.points[i].xyz());
    EXPECT_NEAR(b.pixel.x(), image.width - a.pixel.x(), 1e-9);
    EXPECT_NEAR(b.pixel.y(), a.pixel.y(), 1e-9);
  }
}

TEST(Flip, SymmetricSceneKeepsPixelMultiset) {
  std::mt19937_64 rng(7);
  PointCloud half = random_cloud(rng, 60), sym;
  for (const auto& p : half.points) {
    sym.points.push_back(p);
    sym.points.push_back({p.x, -p.y, p.z, p.intensity});
  }
  const Mat34 cam = fixture::toy_calib().lidar_to_image();
  const auto pixels = [&](const PointCloud& c) {
    std::multiset<std::pair<double, double>> out;
    for (const auto& p : c.points) {
      const auto px = project_world(cam, p.xyz());
      out.insert({std::floor(px.pixel.x()), std::floor(px.pixel.y())});
    }
    return out;
  };
  EXPECT_EQ(pixels(apply_flip(sym, Tensor({1, 2, 2})).points), pixels(sym));
}

TEST(Flip, ReprojectModeLeavesImage) {
  std::mt19937_64 rng(8);
  const Tensor img = random_image(rng, 1, 4, 5);
  const AugmentedScene s = apply_flip(random_cloud(rng, 3), img, AlignMode::Reproject);
  EXPECT_EQ(s.image.values(), img.values());
  EXPECT_TRUE(s.record.affine2d.isApprox(identity_affine(), 0.0));
}

TEST(Rescale, UnitFactorIsIdentity) {
  std::mt19937_64 rng(9);
  const PointCloud cloud = random_cloud(rng, 300);
  const Tensor img = random_image(rng, 1, 64, 128);
  const AugmentedScene s = apply_rescale(cloud, img, 1.0, fixture::toy_calib().lidar_to_image());
  EXPECT_EQ(s.points, cloud);
  EXPECT_EQ(s.image.values(), img.values());
  EXPECT_EQ(s.record.affine2d, identity_affine());
  EXPECT_EQ(s.record.fit_residual, 0.0);
}

TEST(Rescale, FittedResidualBelowHalfPixel) {
  std::mt19937_64 rng(10);
  const ImageGeometry image = fixture::toy_image();
  const KittiCalib calib = fixture::random_calib(rng, image);
  const PointCloud cloud = random_cloud(rng, 500);
  const AugmentedScene s = apply_rescale(cloud, Tensor({1, 64, 128}), 1.05, calib.lidar_to_image(), {.seed = 3});
  EXPECT_GT(s.record.fit_residual, 0.0);
  EXPECT_LT(s.record.fit_residual, 0.5);
  for (std::size_t i = 0; i < cloud.size(); ++i) EXPECT_EQ(s.points.points[i].xyz(), 1.05 * cloud.points[i].xyz());
}

TEST(Rescale, InverseRoundTripReturnsWithinOnePixel) {
  std::mt19937_64 rng(11);
  const ImageGeometry image = fixture::toy_image();
  const KittiCalib calib = fixture::random_calib(rng, image);
  const PointCloud cloud = random_cloud(rng, 500);
  const Tensor img({1, 64, 128});
  const AugmentedScene a = apply_rescale(cloud, img, 0.95, calib.lidar_to_image(), {.seed = 1});
  const AugmentedScene b =
      apply_rescale(a.points, a.image, 1.0 / 0.95, augmented_camera(calib, a.record), {.seed = 2});
  const AugmentRecord total = a.record.then(b.record);
  const Mat34 cam = augmented_camera(calib, total);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const ContinuousPixel before = project_world(calib.lidar_to_image(), cloud.points[i].xyz());
    const ContinuousPixel after = project_world(cam, b.points.points[i].xyz());
    EXPECT_LT((apply_affine(total.affine2d, before.pixel) - before.pixel).norm(), 1.0);
    EXPECT_LT((after.pixel - before.pixel).norm(), 1.0);
  }
}

TEST(Rescale, RejectsOutOfRangeFactor) {
  const Mat34 cam = fixture::toy_calib().lidar_to_image();
  EXPECT_THROW(apply_rescale({}, Tensor({1, 2, 2}), 0.49, cam), std::invalid_argument);
  EXPECT_THROW(apply_rescale({}, Tensor({1, 2, 2}), 2.01, cam), std::invalid_argument);
}

TEST(Rotate, ZeroIsIdentity) {
  std::mt19937_64 rng(12);
  const PointCloud cloud = random_cloud(rng, 20);
  const RotatedPoints r = apply_rotate(cloud, 0.0);
  EXPECT_EQ(r.points, cloud);
  EXPECT_EQ(r.record.point_transform(), Eigen::Matrix3d::Identity());
}

TEST(Rotate, ReprojectsToOriginalPixel) {
  std::mt19937_64 rng(13);
  const ImageGeometry image = fixture::toy_image();
  const KittiCalib calib = fixture::random_calib(rng, image);
  const PointCloud cloud = random_cloud(rng, 300);
  const RotatedPoints r = apply_rotate(cloud, std::numbers::pi / 8);
  const Mat34 cam = augmented_camera(calib, r.record);
  double worst = 0.0;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto a = project_world(calib.lidar_to_image(), cloud.points[i].xyz()).pixel;
    const auto b = project_world(cam, r.points.points[i].xyz()).pixel;
    worst = std::max(worst, (a - b).norm());
  }
  EXPECT_LT(worst, 1e-9);
}

TEST(Rotate, InverseRestoresPoints) {
  std::mt19937_64 rng(14);
  const PointCloud cloud = random_cloud(rng, 100);
  const PointCloud back = apply_rotate(apply_rotate(cloud, 0.6).points, -0.6).points;
  for (std::size_t i = 0; i < cloud.size(); ++i)
    EXPECT_LT((back.points[i].xyz() - cloud.points[i].xyz()).norm(), 1e-12);
  EXPECT_THROW(apply_rotate(cloud, 0.8), std::invalid_argument);
}

TEST(Alignment, VoxelProjectionFollowsRecordedAffine) {
  // Flip, rescale and rotate chained; every surviving point's voxel projects
  // into the feature cell of its original pixel carried through the affine.
  std::mt19937_64 rng(15);
  const ImageGeometry image = fixture::toy_image();
  const KittiCalib calib = fixture::random_calib(rng, image);
  const PointCloud cloud = random_cloud(rng, 400);
  const Tensor img({1, 64, 128});
  const AugmentedScene f = apply_flip(cloud, img);
  const AugmentedScene s = apply_rescale(f.points, f.image, 1.05, augmented_camera(calib, f.record), {.seed = 9});
  const RotatedPoints r = apply_rotate(s.points, 0.1);
  const AugmentRecord rec = f.record.then(s.record).then(r.record);

  GridSpec grid;
  grid.origin = {-30.0, -30.0, -10.0};
  grid.voxel_size = {0.05, 0.05, 0.05};
  grid.dims = {1200, 1200, 400};
  const ProjectionTransform vt = compose_projection(grid, calib, rec, image);
  int checked = 0;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto v = grid.index_of(r.points.points[i].xyz());
    ASSERT_TRUE(v.has_value());
    const PixelHit hit = project(vt, *v);
    const Eigen::Vector2d target =
        apply_affine(rec.affine2d, project_world(calib.lidar_to_image(), cloud.points[i].xyz()).pixel);
    // A 5 cm voxel spans well under a pixel here; the feature cell is 4 px.
    const Eigen::Vector2d cell((hit.u + 0.5) * image.stride, (hit.v + 0.5) * image.stride);
    EXPECT_LE((cell - target).cwiseAbs().maxCoeff(), image.stride / 2.0 + 1.0);
    ++checked;
  }
  EXPECT_EQ(checked, 400);
}

TEST(Paste, NoObjectsLeavesSceneUnchanged) {
  std::mt19937_64 rng(16);
  const PointCloud cloud = random_cloud(rng, 30);
  const Tensor img = random_image(rng, 1, 64, 128);
  const PasteResult r = gt_sample_paste(cloud, img, {}, fixture::toy_calib().lidar_to_image());
  EXPECT_EQ(r.points, cloud);
  EXPECT_EQ(r.image.values(), img.values());
  EXPECT_TRUE(r.z_order.empty());
  EXPECT_EQ(r.removed, 0u);
}

TEST(Paste, DisjointObjectAppendsPoints) {
  std::mt19937_64 rng(17);
  const ImageGeometry image = fixture::toy_image();
  const Mat34 cam = fixture::toy_calib().lidar_to_image();
  PointCloud scene;
  scene.points = {{12.0, 5.0, -1.0, 0.1}, {15.0, 6.0, 0.0, 0.2}};
  const SampledObject obj = make_object({{8.0, -3.0, -1.0}, {2.0, 1.0, 1.0}, 0.3}, cam, image, 2.0, rng, 25);
  const PasteResult r = gt_sample_paste(scene, Tensor({1, 64, 128}), {obj}, cam);
  EXPECT_EQ(r.points.size(), scene.size() + obj.points.size());
  EXPECT_EQ(r.removed, 0u);
  EXPECT_EQ(r.z_order, std::vector<std::size_t>{0});
}

TEST(Paste, OverlappingCropsMatchZBufferOracle) {
  std::mt19937_64 rng(18);
  const ImageGeometry image = fixture::toy_image();
  const Mat34 cam = fixture::toy_calib().lidar_to_image();
  // Near object listed first so painting order differs from input order.
  const std::vector<SampledObject> objects = {
      make_object({{5.0, 0.5, -0.5}, {1.0, 1.0, 1.0}, 0.0}, cam, image, 5.0, rng, 40),
      make_object({{10.0, 0.0, -0.5}, {2.0, 1.6, 1.5}, 0.2}, cam, image, 10.0, rng, 80),
  };
  ASSERT_FALSE(objects[0].rect.clipped(128, 64).empty());
  PointCloud scene = random_cloud(rng, 400);
  const Tensor img = random_image(rng, 1, 64, 128);
  const PasteResult r = gt_sample_paste(scene, img, objects, cam);
  EXPECT_EQ(r.z_order, (std::vector<std::size_t>{1, 0}));

  // Per-pixel z-buffer: every covering object sorted by depth.
  std::map<std::pair<int, int>, std::vector<std::pair<double, std::size_t>>> zbuf;
  for (std::size_t j = 0; j < objects.size(); ++j) {
    const PixelRect rc = objects[j].rect;
    for (int y = std::max(rc.y0, 0); y < std::min(rc.y1, 64); ++y)
      for (int x = std::max(rc.x0, 0); x < std::min(rc.x1, 128); ++x) zbuf[{x, y}].push_back({objects[j].depth, j});
  }
  for (auto& [px, list] : zbuf) std::sort(list.begin(), list.end());

  int overlap = 0;
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 128; ++x) {
      const auto it = zbuf.find({x, y});
      double expected = img.at(0, y, x);
      if (it != zbuf.end()) {
        const SampledObject& top = objects[it->second.front().second];
        expected = top.crop.at(0, y - top.rect.y0, x - top.rect.x0);
        overlap += it->second.size() > 1;
      }
      ASSERT_EQ(r.image.at(0, y, x), expected) << x << "," << y;
    }
  EXPECT_GT(overlap, 0);

  const auto visible = [&](const LidarPoint& p, std::optional<std::size_t> owner) {
    const ContinuousPixel px = project_world(cam, p.xyz());
    const auto it = zbuf.find({static_cast<int>(std::floor(px.pixel.x())), static_cast<int>(std::floor(px.pixel.y()))});
    if (px.depth <= 0 || it == zbuf.end()) return true;
    for (const auto& [depth, j] : it->second) {
      if (owner && j == *owner) continue;
      return !(depth < px.depth);
    }
    return true;
  };
  PointCloud expected;
  for (const auto& p : scene.points)
    if (visible(p, std::nullopt)) expected.points.push_back(p);
  std::size_t far_hidden = 0;
  for (std::size_t j = 0; j < objects.size(); ++j)
    for (const auto& p : objects[j].points.points) {
      if (visible(p, j)) {
        expected.points.push_back(p);
      } else {
        far_hidden += j == 1;
      }
    }
  EXPECT_EQ(r.points, expected);
  EXPECT_GT(far_hidden, 0u);
  EXPECT_EQ(r.removed, scene.size() + 120 - expected.size());
}

TEST(Paste, CropOutsideImageIsClipped) {
  std::mt19937_64 rng(19);
  const ImageGeometry image = fixture::toy_image();
  const Mat34 cam = fixture::toy_calib().lidar_to_image();
  SampledObject o = make_object({{6.0, 0.0, -0.5}, {1.0, 1.0, 1.0}, 0.0}, cam, image, 3.0, rng, 5);
  // Slide the crop past the right border.
  o.rect.x0 += 120;
  o.rect.x1 += 120;
  const PasteResult r = gt_sample_paste({}, Tensor({1, 64, 128}), {o}, cam);
  for (int y = o.rect.y0; y < o.rect.y1; ++y)
    for (int x = o.rect.x0; x < 128; ++x) EXPECT_EQ(r.image.at(0, y, x), o.crop.at(0, y - o.rect.y0, x - o.rect.x0));
}

TEST(Paste, RejectsCollidingObjects) {
  std::mt19937_64 rng(20);
  const ImageGeometry image = fixture::toy_image();
  const Mat34 cam = fixture::toy_calib().lidar_to_image();
  const SampledObject a = make_object({{8.0, 0.0, -0.5}, {2.0, 2.0, 1.0}, 0.0}, cam, image, 1.0, rng, 5);
  const SampledObject b = make_object({{8.5, 0.5, -0.5}, {2.0, 2.0, 1.0}, 0.7}, cam, image, 2.0, rng, 5);
  EXPECT_THROW(gt_sample_paste({}, Tensor({1, 64, 128}), {a, b}, cam), std::invalid_argument);
}

TEST(GtDatabase, RoundTrip) {
  const Mat34 cam = fixture::toy_calib().lidar_to_image();
  PointCloud scene;
  scene.points = {{8.0, 0.25, -0.5, 0.5}, {8.25, -0.25, -0.25, 1.0}, {15.0, 4.0, 0.0, 0.0}};
  Tensor img({3, 64, 128});
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = static_cast<double>(i % 7) * 0.25;
  const SampledObject obj = extract_object(scene, img, {{8.0, 0.0, -0.5}, {1.0, 1.0, 1.0}, 0.0}, cam);
  EXPECT_EQ(obj.points.size(), 2u);
  EXPECT_EQ(obj.depth, 8.0);
  EXPECT_EQ(obj.crop.dim(0), 3u);

  const auto dir = std::filesystem::temp_directory_path() / "vff_gt_db_test";
  std::filesystem::remove_all(dir);
  save_gt_database(dir, {{"car", obj}});
  const auto loaded = load_gt_database(dir);
  ASSERT_EQ(loaded.size(), 1u);
  EXPECT_EQ(loaded[0].label, "car");
  EXPECT_EQ(loaded[0].object.points, obj.points);
  EXPECT_EQ(loaded[0].object.box3d, obj.box3d);
  EXPECT_EQ(loaded[0].object.rect, obj.rect);
  EXPECT_EQ(loaded[0].object.depth, obj.depth);
  EXPECT_EQ(loaded[0].object.crop.values(), obj.crop.values());
  std::filesystem::remove_all(dir);
}

TEST(Boxes, BevCollisionAndTransform) {
  const Box3D a{{0, 0, 0}, {2, 1, 1}, 0.0};
  EXPECT_TRUE(boxes_collide_bev(a, {{1.5, 0, 0}, {2, 1, 1}, 0.0}));
  EXPECT_FALSE(boxes_collide_bev(a, {{2.1, 0, 0}, {2, 1, 1}, 0.0}));
  EXPECT_TRUE(boxes_collide_bev(a, {{1.6, 0.9, 0}, {2, 0.2, 1}, std::numbers::pi / 4}));
  AugmentRecord rec;
  rec.flip = true;
  rec.rotate = 0.3;
  rec.rescale = 1.1;
  const Box3D b{{5, 2, -1}, {4, 2, 1.5}, 0.4};
  const Box3D t = transform_box(b, rec);
  for (const auto& c : b.corners()) EXPECT_TRUE(t.contains(rec.point_transform() * c, 1e-9));
}
