#pragma once

#include <compare>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "vff/geometry/boxes.hpp"
#include "vff/geometry/calib.hpp"
#include "vff/geometry/projection.hpp"
#include "vff/numerics/autodiff.hpp"
#include "vff/numerics/layers.hpp"
#include "vff/numerics/tensor.hpp"

namespace vff {

/// A cell of the feature map: column u, row v.
struct FeatureCell {
  int u = 0;
  int v = 0;

  // Row-major order.
  friend auto operator<=>(const FeatureCell& a, const FeatureCell& b) {
    if (auto c = a.v <=> b.v; c != 0) return c;
    return a.u <=> b.u;
  }
  bool operator==(const FeatureCell&) const = default;
};

/// Feature cells hit by the points under `camera` (one entry per visible point).
std::vector<FeatureCell> project_to_cells(const PointCloud& points, const Mat34& camera, const ImageGeometry& image);

struct Window {
  int u0 = 0;
  int v0 = 0;
  int u1 = 0;  // exclusive
  int v1 = 0;  // exclusive
  std::size_t count = 0;

  std::size_t area() const { return static_cast<std::size_t>(u1 - u0) * static_cast<std::size_t>(v1 - v0); }
  bool contains(const FeatureCell& c) const { return c.u >= u0 && c.u < u1 && c.v >= v0 && c.v < v1; }
};

/// Non-overlapping w x w tiling of a feature map (edge windows may be
/// smaller), row-major, with the number of projected points in each.
struct WindowPartition {
  int window = 64;
  int width = 0;
  int height = 0;
  std::vector<Window> windows;

  /// Indices of windows holding at least one point.
  std::vector<std::size_t> kept() const;
  /// Whether `c` lies in a kept window.
  bool in_kept(const FeatureCell& c) const;
};

/// Throws std::invalid_argument for w < 1 or non-positive dims. Cells
/// outside the map are ignored.
WindowPartition partition_windows(int width, int height, std::span<const FeatureCell> projected, int w = 64);

enum class SampleMode { Uniformity, Density, Sparsity };

struct PixelSampleSet {
  std::vector<FeatureCell> pixels;  // unique, row-major
  std::vector<double> scores;       // sampler probability per pixel, importance mode only
};

/// Draws min(n, available) distinct cells from kept windows. Each draw
/// picks a window with probability proportional to 1 (uniformity), its
/// count (density) or 1/count (sparsity), then a remaining cell of it
/// uniformly; exhausted windows drop out.
PixelSampleSet heuristic_sample(const WindowPartition& partition, SampleMode mode, std::size_t n, std::mt19937_64& rng);

/// Cells of kept windows whose probability exceeds `threshold`, row-major.
std::vector<FeatureCell> threshold_cells(const Tensor& probs, const WindowPartition& partition, double threshold = 0.5);

/// Runs the head on `feature` [C,H,W], thresholds sigmoid(output) and draws
/// min(n, candidates) of the candidates uniformly without replacement.
PixelSampleSet importance_sample(const Tensor& feature, const Module2D& head, const WindowPartition& partition,
                                 std::size_t n, std::mt19937_64& rng, double threshold = 0.5);

/// Feature-map coordinates of an image-pixel box: cell u is centered on
/// image x = (u + 0.5) * stride.
ImageBox to_feature_box(const ImageBox& image_box, int stride);

struct Target2D {
  Tensor map;               // [1, H, W]
  std::size_t skipped = 0;  // zero-area boxes
};

/// Inside each box (cells with x0 <= u <= x1, y0 <= v <= y1) the value is
/// exp(-|c - center|^2 / (2 sigma^2)) with sigma = diagonal / 6; the max is
/// taken over overlapping boxes and cells outside every box are 0. Boxes
/// must lie within [-0.5, dim - 0.5].
Target2D gaussian_target_2d(std::span<const ImageBox> boxes, int height, int width);

inline constexpr double kSamplerLossWeight = 2.0;

/// lambda * mean BCE between head probabilities and the target map.
double sampler_loss(const Tensor& probs, const Tensor& target, double lambda = kSamplerLossWeight);
Var sampler_loss(Tape& tape, Var probs, const Tensor& target, double lambda = kSamplerLossWeight);

}  // namespace vff
