#include "vff/ray/ray.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "vff/numerics/parallel.hpp"

namespace vff {

namespace {

struct Member {
  double depth;
  std::int64_t linear;
  VoxelIndex v;
};

bool hits(const ProjectionTransform& vt, const VoxelIndex& v, const FeatureCell& pixel, double* depth) {
  const PixelHit h = project(vt, v);
  *depth = h.depth;
  return h.inside() && h.u == pixel.u && h.v == pixel.v;
}

Ray finish(const FeatureCell& pixel, std::vector<Member> members) {
  std::sort(members.begin(), members.end(), [](const Member& a, const Member& b) {
    return a.depth != b.depth ? a.depth < b.depth : a.linear < b.linear;
  });
  members.erase(std::unique(members.begin(), members.end(),
                            [](const Member& a, const Member& b) { return a.linear == b.linear; }),
                members.end());
  Ray ray;
  ray.pixel = pixel;
  for (const Member& m : members) {
    ray.voxels.push_back(m.v);
    ray.depths.push_back(m.depth);
  }
  return ray;
}

void check_pixel(const ProjectionTransform& vt, const FeatureCell& pixel) {
  if (pixel.u < 0 || pixel.v < 0 || pixel.u >= vt.image.feature_width() || pixel.v >= vt.image.feature_height()) {
    throw std::invalid_argument("pixel (" + std::to_string(pixel.u) + "," + std::to_string(pixel.v) +
                                ") is outside the feature map");
  }
}

}  // namespace

Ray construct_ray(const ProjectionTransform& vt, const GridSpec& grid, const FeatureCell& pixel) {
  check_pixel(vt, pixel);
  grid.validate();
  const Eigen::Matrix3d m3 = vt.matrix.leftCols<3>();
  const Eigen::Vector3d m4 = vt.matrix.col(3);
  const Eigen::FullPivLU<Eigen::Matrix3d> lu(m3);
  if (!lu.isInvertible()) throw std::invalid_argument("voxel-to-image matrix is singular");
  const Eigen::Matrix3d minv = lu.inverse();

  // X(t) = c + t d is the voxel-space point of depth t on the cell-center line.
  const double s = vt.image.stride;
  const Eigen::Vector3d c = -minv * m4;
  const Eigen::Vector3d d = minv * Eigen::Vector3d((pixel.u + 0.5) * s, (pixel.v + 0.5) * s, 1.0);
  Eigen::Vector3d half;  // lateral reach per unit depth of the cell's frustum
  for (int a = 0; a < 3; ++a) half[a] = 0.5 * s * (std::abs(minv(a, 0)) + std::abs(minv(a, 1)));

  double t_lo = std::numeric_limits<double>::infinity(), t_hi = -t_lo;
  for (int corner = 0; corner < 8; ++corner) {
    const Eigen::Vector3d p((corner & 1) ? grid.dims[0] - 1 : 0, (corner & 2) ? grid.dims[1] - 1 : 0,
                            (corner & 4) ? grid.dims[2] - 1 : 0);
    const double t = m3.row(2).dot(p) + m4[2];
    t_lo = std::min(t_lo, t);
    t_hi = std::max(t_hi, t);
  }
  std::vector<Member> members;
  if (!(t_hi > 0.0)) return finish(pixel, members);
  t_lo = std::max(t_lo, 0.0);

  // Clip to the grid of centers grown by the frustum reach at the far depth.
  double t0 = t_lo, t1 = t_hi;
  for (int a = 0; a < 3 && t0 <= t1; ++a) {
    const double reach = t_hi * half[a] + 0.5;
    const double lo = -reach, hi = grid.dims[a] - 1 + reach;
    if (d[a] == 0.0) {
      if (c[a] < lo || c[a] > hi) t0 = t1 + 1.0;
      continue;
    }
    double ta = (lo - c[a]) / d[a], tb = (hi - c[a]) / d[a];
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
  }
  if (t0 > t1) return finish(pixel, members);

  // Amanatides-Woo walk over unit cells centered on integer coordinates.
  const Eigen::Vector3d start = c + t0 * d;
  std::array<long, 3> cell{}, step{};
  Eigen::Vector3d t_next, t_delta;
  for (int a = 0; a < 3; ++a) {
    cell[a] = static_cast<long>(std::floor(start[a] + 0.5));
    if (d[a] > 0.0) {
      step[a] = 1;
      t_next[a] = t0 + (cell[a] + 0.5 - start[a]) / d[a];
      t_delta[a] = 1.0 / d[a];
    } else if (d[a] < 0.0) {
      step[a] = -1;
      t_next[a] = t0 + (cell[a] - 0.5 - start[a]) / d[a];
      t_delta[a] = -1.0 / d[a];
    } else {
      step[a] = 0;
      t_next[a] = std::numeric_limits<double>::infinity();
      t_delta[a] = std::numeric_limits<double>::infinity();
    }
  }

  while (true) {
    const double t_exit = std::min({t_next[0], t_next[1], t_next[2], t1});
    std::array<long, 3> lo{}, hi{};
    bool any = true;
    for (int a = 0; a < 3; ++a) {
      // One extra voxel beyond the frustum bound absorbs rounding in the walk.
      const long margin = static_cast<long>(std::floor(t_exit * half[a] + 0.5)) + 1;
      lo[a] = std::max(cell[a] - margin, 0L);
      hi[a] = std::min(cell[a] + margin, static_cast<long>(grid.dims[a]) - 1);
      any = any && lo[a] <= hi[a];
    }
    if (any) {
      for (long x = lo[0]; x <= hi[0]; ++x)
        for (long y = lo[1]; y <= hi[1]; ++y)
          for (long z = lo[2]; z <= hi[2]; ++z) {
            const VoxelIndex v{static_cast<int>(x), static_cast<int>(y), static_cast<int>(z)};
            double depth = 0.0;
            if (hits(vt, v, pixel, &depth)) members.push_back({depth, grid.linear(v), v});
          }
    }
    if (t_exit >= t1) break;
    const int axis = t_next[0] <= t_next[1] ? (t_next[0] <= t_next[2] ? 0 : 2) : (t_next[1] <= t_next[2] ? 1 : 2);
    cell[axis] += step[axis];
    t_next[axis] += t_delta[axis];
  }
  return finish(pixel, std::move(members));
}

std::vector<VoxelIndex> brute_force_ray_oracle(const ProjectionTransform& vt, const GridSpec& grid,
                                               const FeatureCell& pixel) {
  grid.validate();
  if (grid.voxel_count() > std::int64_t{64} * 64 * 64) {
    throw std::invalid_argument("brute-force ray oracle is limited to 64^3 voxels");
  }
  check_pixel(vt, pixel);
  std::vector<Member> members;
  for (std::int64_t i = 0; i < grid.voxel_count(); ++i) {
    const VoxelIndex v = grid.from_linear(i);
    double depth = 0.0;
    if (hits(vt, v, pixel, &depth)) members.push_back({depth, i, v});
  }
  return finish(pixel, std::move(members)).voxels;
}

Ray mark_anchors(Ray ray, const VoxelField& field) {
  ray.anchors.clear();
  for (std::size_t i = 0; i < ray.voxels.size(); ++i)
    if (field.occupied(ray.voxels[i])) ray.anchors.push_back(i);
  return ray;
}

std::vector<Ray> construct_rays(const ProjectionTransform& vt, const GridSpec& grid,
                                std::span<const FeatureCell> pixels, unsigned threads) {
  std::vector<Ray> rays(pixels.size());
  parallel_for(pixels.size(), threads, [&](std::size_t i) { rays[i] = construct_ray(vt, grid, pixels[i]); });
  return rays;
}

}  // namespace vff
