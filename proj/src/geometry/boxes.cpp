#include "vff/geometry/boxes.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "vff/geometry/projection.hpp"

namespace vff {

namespace {

std::array<Eigen::Vector2d, 4> footprint(const Box3D& b) {
  const double c = std::cos(b.yaw), s = std::sin(b.yaw);
  const Eigen::Vector2d ax(c, s), ay(-s, c);
  const Eigen::Vector2d ctr = b.center.head<2>();
  const Eigen::Vector2d hx = ax * (b.size.x() / 2.0), hy = ay * (b.size.y() / 2.0);
  return {ctr + hx + hy, ctr + hx - hy, ctr - hx - hy, ctr - hx + hy};
}

bool separated(const std::array<Eigen::Vector2d, 4>& a, const std::array<Eigen::Vector2d, 4>& b,
               const Eigen::Vector2d& axis) {
  double amin = std::numeric_limits<double>::infinity(), amax = -amin, bmin = amin, bmax = -amin;
  for (const auto& p : a) {
    amin = std::min(amin, p.dot(axis));
    amax = std::max(amax, p.dot(axis));
  }
  for (const auto& p : b) {
    bmin = std::min(bmin, p.dot(axis));
    bmax = std::max(bmax, p.dot(axis));
  }
  return amax < bmin || bmax < amin;
}

}  // namespace

bool Box3D::contains(const Eigen::Vector3d& p, double tol) const {
  const Eigen::Vector3d d = p - center;
  const double c = std::cos(yaw), s = std::sin(yaw);
  const double lx = c * d.x() + s * d.y();
  const double ly = -s * d.x() + c * d.y();
  return std::abs(lx) <= size.x() / 2.0 + tol && std::abs(ly) <= size.y() / 2.0 + tol &&
         std::abs(d.z()) <= size.z() / 2.0 + tol;
}

std::array<Eigen::Vector3d, 8> Box3D::corners() const {
  std::array<Eigen::Vector3d, 8> out;
  const auto fp = footprint(*this);
  for (int i = 0; i < 4; ++i) {
    out[i] = {fp[i].x(), fp[i].y(), center.z() - size.z() / 2.0};
    out[i + 4] = {fp[i].x(), fp[i].y(), center.z() + size.z() / 2.0};
  }
  return out;
}

bool boxes_collide_bev(const Box3D& a, const Box3D& b) {
  const auto fa = footprint(a), fb = footprint(b);
  for (const auto& f : {fa, fb}) {
    for (int e = 0; e < 2; ++e) {
      const Eigen::Vector2d edge = f[e + 1] - f[e];
      if (separated(fa, fb, Eigen::Vector2d(-edge.y(), edge.x()))) return false;
    }
  }
  return true;
}

Box3D transform_box(const Box3D& box, const AugmentRecord& augment) {
  Box3D out;
  out.center = augment.point_transform() * box.center;
  out.size = box.size * augment.rescale;
  out.yaw = (augment.flip ? -box.yaw : box.yaw) + augment.rotate;
  return out;
}

PixelRect PixelRect::clipped(int width, int height) const {
  PixelRect r{std::clamp(x0, 0, width), std::clamp(y0, 0, height), std::clamp(x1, 0, width), std::clamp(y1, 0, height)};
  if (r.empty()) r = {r.x0, r.y0, r.x0, r.y0};
  return r;
}

double ImageBox::diagonal() const { return std::hypot(x1 - x0, y1 - y0); }

PixelRect ImageBox::cover() const {
  return {static_cast<int>(std::floor(x0)), static_cast<int>(std::floor(y0)), static_cast<int>(std::ceil(x1)),
          static_cast<int>(std::ceil(y1))};
}

std::optional<ImageBox> project_box(const Mat34& camera, const Box3D& box) {
  ImageBox out{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
               -std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  for (const auto& c : box.corners()) {
    const ContinuousPixel px = project_world(camera, c);
    if (!(px.depth > 0.0)) return std::nullopt;
    out.x0 = std::min(out.x0, px.pixel.x());
    out.y0 = std::min(out.y0, px.pixel.y());
    out.x1 = std::max(out.x1, px.pixel.x());
    out.y1 = std::max(out.y1, px.pixel.y());
  }
  return out;
}

ImageBox transform_image_box(const ImageBox& box, const Affine2& affine) {
  ImageBox out{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
               -std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  for (const Eigen::Vector2d& c : {Eigen::Vector2d(box.x0, box.y0), Eigen::Vector2d(box.x1, box.y0),
                                   Eigen::Vector2d(box.x0, box.y1), Eigen::Vector2d(box.x1, box.y1)}) {
    const Eigen::Vector2d p = apply_affine(affine, c);
    out.x0 = std::min(out.x0, p.x());
    out.y0 = std::min(out.y0, p.y());
    out.x1 = std::max(out.x1, p.x());
    out.y1 = std::max(out.y1, p.y());
  }
  return out;
}

}  // namespace vff
