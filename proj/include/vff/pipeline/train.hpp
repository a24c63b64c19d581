#pragma once

#include <span>
#include <vector>

#include "vff/pipeline/run.hpp"

namespace vff {

/// Fixed inputs of the fusion loss for one scene: encoder features, the 2D
/// target and a fixed set of rays flattened into per-voxel rows.
struct TrainingExample {
  Tensor features;    // [C,h,w]
  Tensor target2d;    // [1,h,w]
  Tensor coords;      // [N,3] grid-normalised voxel coordinates
  Tensor image_rows;  // [N,C] feature of each row's pixel
  Tensor target3d;    // [N]
  std::vector<std::size_t> ray_sizes;
};

/// Rays come from density sampling of `rays_per_scene` cells on the
/// unaugmented scene.
TrainingExample make_training_example(const Scene& scene, const PipelineConfig& cfg, std::uint64_t seed);

/// lambda_s * BCE(sigmoid(head(F)), Y) + ray loss, with weights
/// sigmoid(<F^I, coord MLP>). Image features enter as constants.
Var vff_loss(Tape& tape, const TrainingExample& ex, Heads& heads, const PipelineConfig& cfg);
double vff_loss_value(const TrainingExample& ex, Heads& heads, const PipelineConfig& cfg);

struct WeightStats {
  double anchor_mean = 0.0;  // rows with target 1
  double far_mean = 0.0;     // rows with target 0
  std::size_t anchors = 0;
  std::size_t far = 0;
};
WeightStats weight_stats(std::span<const TrainingExample> examples, Heads& heads);

struct TrainResult {
  std::vector<double> losses;  // mean loss before each update, then the final value
};

/// Plain gradient descent on the mean loss over `examples`. Throws
/// std::runtime_error naming the step when the loss becomes non-finite.
TrainResult train_heads(std::span<const TrainingExample> examples, Heads& heads, const PipelineConfig& cfg);

/// Mean of each `window`-long run of consecutive values.
std::vector<double> moving_average(std::span<const double> values, std::size_t window);

}  // namespace vff
