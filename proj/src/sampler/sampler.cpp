#include "vff/sampler/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <iterator>
#include <stdexcept>
#include <string>

#include "vff/numerics/losses.hpp"

namespace vff {

std::vector<FeatureCell> project_to_cells(const PointCloud& points, const Mat34& camera, const ImageGeometry& image) {
  ProjectionTransform vt;
  vt.matrix = camera;
  vt.image = image;
  std::vector<FeatureCell> cells;
  for (const LidarPoint& p : points.points) {
    const PixelHit hit = project_coords(vt, p.x, p.y, p.z);
    if (hit.inside()) cells.push_back({hit.u, hit.v});
  }
  return cells;
}

std::vector<std::size_t> WindowPartition::kept() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < windows.size(); ++i)
    if (windows[i].count > 0) out.push_back(i);
  return out;
}

bool WindowPartition::in_kept(const FeatureCell& c) const {
  if (c.u < 0 || c.v < 0 || c.u >= width || c.v >= height) return false;
  const int cols = (width + window - 1) / window;
  return windows[static_cast<std::size_t>((c.v / window) * cols + c.u / window)].count > 0;
}

WindowPartition partition_windows(int width, int height, std::span<const FeatureCell> projected, int w) {
  if (w < 1) throw std::invalid_argument("window size must be at least 1, got " + std::to_string(w));
  if (width <= 0 || height <= 0) throw std::invalid_argument("feature map dims must be positive");
  WindowPartition part;
  part.window = w;
  part.width = width;
  part.height = height;
  const int cols = (width + w - 1) / w, rows = (height + w - 1) / w;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      part.windows.push_back({c * w, r * w, std::min((c + 1) * w, width), std::min((r + 1) * w, height), 0});
  for (const FeatureCell& cell : projected) {
    if (cell.u < 0 || cell.v < 0 || cell.u >= width || cell.v >= height) continue;
    ++part.windows[static_cast<std::size_t>((cell.v / w) * cols + cell.u / w)].count;
  }
  return part;
}

PixelSampleSet heuristic_sample(const WindowPartition& partition, SampleMode mode, std::size_t n, std::mt19937_64& rng) {
  if (n < 1) throw std::invalid_argument("sample count must be at least 1");
  PixelSampleSet out;
  const std::vector<std::size_t> kept = partition.kept();
  if (kept.empty()) return out;

  std::vector<std::vector<FeatureCell>> remaining;
  std::vector<double> weights;
  std::size_t available = 0;
  for (std::size_t i : kept) {
    const Window& win = partition.windows[i];
    std::vector<FeatureCell> cells;
    for (int v = win.v0; v < win.v1; ++v)
      for (int u = win.u0; u < win.u1; ++u) cells.push_back({u, v});
    available += cells.size();
    remaining.push_back(std::move(cells));
    const double count = static_cast<double>(win.count);
    weights.push_back(mode == SampleMode::Uniformity ? 1.0 : mode == SampleMode::Density ? count : 1.0 / count);
  }

  const std::size_t target = std::min(n, available);
  std::discrete_distribution<std::size_t> pick_window(weights.begin(), weights.end());
  while (out.pixels.size() < target) {
    const std::size_t w = pick_window(rng);
    auto& cells = remaining[w];
    std::uniform_int_distribution<std::size_t> pick_cell(0, cells.size() - 1);
    const std::size_t k = pick_cell(rng);
    out.pixels.push_back(cells[k]);
    cells[k] = cells.back();
    cells.pop_back();
    if (cells.empty()) {
      weights[w] = 0.0;
      if (out.pixels.size() < target) pick_window = std::discrete_distribution<std::size_t>(weights.begin(), weights.end());
    }
  }
  std::sort(out.pixels.begin(), out.pixels.end());
  return out;
}

std::vector<FeatureCell> threshold_cells(const Tensor& probs, const WindowPartition& partition, double threshold) {
  if (probs.rank() != 3 || probs.dim(0) != 1 || probs.dim(1) != static_cast<std::size_t>(partition.height) ||
      probs.dim(2) != static_cast<std::size_t>(partition.width)) {
    throw std::invalid_argument("probability map " + probs.shape_str() + " does not match the window partition");
  }
  std::vector<FeatureCell> out;
  for (int v = 0; v < partition.height; ++v)
    for (int u = 0; u < partition.width; ++u)
      if (probs.at(0, static_cast<std::size_t>(v), static_cast<std::size_t>(u)) > threshold &&
          partition.in_kept({u, v}))
        out.push_back({u, v});
  return out;
}

PixelSampleSet importance_sample(const Tensor& feature, const Module2D& head, const WindowPartition& partition,
                                 std::size_t n, std::mt19937_64& rng, double threshold) {
  if (head.out_channels() != 1) throw std::invalid_argument("sampler head must output one channel");
  Tensor probs = head.forward(feature);
  for (double& p : probs.data()) p = sigmoid(p);
  const std::vector<FeatureCell> candidates = threshold_cells(probs, partition, threshold);
  PixelSampleSet out;
  std::sample(candidates.begin(), candidates.end(), std::back_inserter(out.pixels), n, rng);
  for (const FeatureCell& c : out.pixels)
    out.scores.push_back(probs.at(0, static_cast<std::size_t>(c.v), static_cast<std::size_t>(c.u)));
  return out;
}

ImageBox to_feature_box(const ImageBox& b, int stride) {
  const double s = stride;
  return {b.x0 / s - 0.5, b.y0 / s - 0.5, b.x1 / s - 0.5, b.y1 / s - 0.5};
}

Target2D gaussian_target_2d(std::span<const ImageBox> boxes, int height, int width) {
  if (height <= 0 || width <= 0) throw std::invalid_argument("target dims must be positive");
  Target2D target;
  target.map = Tensor({1, static_cast<std::size_t>(height), static_cast<std::size_t>(width)});
  constexpr double tol = 1e-9;
  for (const ImageBox& b : boxes) {
    if (!(b.x0 >= -0.5 - tol && b.y0 >= -0.5 - tol && b.x1 <= width - 0.5 + tol && b.y1 <= height - 0.5 + tol &&
          b.x0 <= b.x1 && b.y0 <= b.y1)) {
      throw std::invalid_argument("box outside the target map");
    }
    if (b.x1 == b.x0 || b.y1 == b.y0) {
      ++target.skipped;
      continue;
    }
    const Eigen::Vector2d c = b.center();
    const double sigma = b.diagonal() / 6.0;
    const double denom = 2.0 * sigma * sigma;
    const int u0 = static_cast<int>(std::ceil(b.x0)), u1 = static_cast<int>(std::floor(b.x1));
    const int v0 = static_cast<int>(std::ceil(b.y0)), v1 = static_cast<int>(std::floor(b.y1));
    for (int v = std::max(v0, 0); v <= std::min(v1, height - 1); ++v) {
      for (int u = std::max(u0, 0); u <= std::min(u1, width - 1); ++u) {
        const double du = u - c.x(), dv = v - c.y();
        double& cell = target.map.at(0, static_cast<std::size_t>(v), static_cast<std::size_t>(u));
        cell = std::max(cell, std::exp(-(du * du + dv * dv) / denom));
      }
    }
  }
  return target;
}

double sampler_loss(const Tensor& probs, const Tensor& target, double lambda) {
  return lambda * bce_loss(probs, target);
}

Var sampler_loss(Tape& tape, Var probs, const Tensor& target, double lambda) {
  return ops::scale(tape, ops::bce_loss(tape, probs, target), lambda);
}

}  // namespace vff
