#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vff/geometry/grid.hpp"
#include "vff/geometry/voxel_field.hpp"
#include "vff/numerics/autodiff.hpp"
#include "vff/numerics/kernels.hpp"
#include "vff/numerics/layers.hpp"
#include "vff/ray/ray.hpp"

namespace vff {

enum class FusionMode { Single, LocalAggregate, LocalPropagate, RayWise };

FusionMode parse_fusion_mode(const std::string& name);
std::string to_string(FusionMode mode);

struct FusionConfig {
  FusionMode mode = FusionMode::RayWise;
  double radius = 1.0;  // voxels
  double lambda_r = 5.0;
  double top_fraction = 0.25;
  double infer_threshold = 0.05;
  kernels::FocalParams focal{};

  /// Gaussian standard deviation of the ball weights and 3D targets.
  double sigma() const { return radius / 2.0; }
  /// Throws std::invalid_argument on a negative radius or fractions outside (0,1].
  void validate() const;
};

/// Coordinate MLP input: the voxel's grid-normalised position.
Feature coord_embed(const VoxelIndex& v, const GridSpec& grid, const Mlp& mlp);

/// sigmoid(<image_feat, embed>); throws std::invalid_argument on a length mismatch.
double ray_weight(std::span<const double> image_feat, std::span<const double> embed);

/// Channel vector of one feature-map cell of a [C,H,W] tensor.
Feature pixel_feature(const Tensor& feature_map, const FeatureCell& cell);

/// Fusion kernel f: one dense layer over the concatenation [image_feat, embed].
Mlp make_fusion_kernel(std::size_t image_channels, std::size_t embed_channels, std::size_t field_channels,
                       std::uint64_t seed);
Feature apply_fusion_kernel(const Mlp& kernel, std::span<const double> image_feat, std::span<const double> embed);

/// Per-voxel embeddings and weights of one ray.
struct RayScores {
  std::vector<Feature> embeds;
  std::vector<double> weights;
};

RayScores score_ray(const Ray& ray, const Feature& image_feat, const GridSpec& grid, const Mlp& mlp);

/// One ray voxel competing for the frame's fusion budget.
struct ScoredVoxel {
  std::size_t ray = 0;
  std::size_t pos = 0;  // position within the ray
  std::int64_t linear = 0;
  double weight = 0.0;
};

/// Budget k = ceil(top_fraction * occupancy_count).
std::size_t fusion_budget(std::size_t occupancy_count, double top_fraction);

/// The k highest-weight candidates (ties by ascending linear index), or all
/// of them when fewer. With `threshold`, only weights above it compete.
/// Returned in (ray, pos) order.
std::vector<ScoredVoxel> select_top(std::vector<ScoredVoxel> candidates, std::size_t occupancy_count,
                                    double top_fraction, std::optional<double> threshold = std::nullopt);

struct FusionOutcome {
  VoxelField field;
  std::size_t candidates = 0;  // scored ray voxels
  std::size_t fused = 0;       // voxel updates committed
  std::vector<ScoredVoxel> selected;  // ray-wise mode only
};

/// Ray-wise commit: each selected voxel gains weight * f([F^I, F']);
/// empty voxels start from zero and become occupied. Zero weights are
/// skipped so they leave the field untouched. The budget counts the
/// occupancy of `field` before any update.
FusionOutcome commit_ray_wise(const VoxelField& field, std::span<const Ray> rays, std::span<const Feature> image_feats,
                              std::span<const RayScores> scores, const Mlp& kernel, const FusionConfig& cfg,
                              bool inference);

/// Anchor voxels only, each gaining f([F^I, F']) with weight 1.
FusionOutcome fuse_single(const VoxelField& field, std::span<const Ray> rays, std::span<const Feature> image_feats,
                          std::span<const RayScores> scores, const Mlp& kernel);

/// Gaussian-ball fusion around anchors with radius r and sigma = r/2.
/// Aggregate: each anchor gains the weighted sum of f over ray voxels in
/// its ball. Propagate: each ray voxel in an anchor's ball gains that
/// anchor's f scaled by the ball weight. Voxels outside every ball are left alone.
FusionOutcome fuse_local(const VoxelField& field, std::span<const Ray> rays, std::span<const Feature> image_feats,
                         std::span<const RayScores> scores, const Mlp& kernel, FusionMode mode, double radius);

/// Per-ray image features and scores, computed in parallel. Ray::view
/// indexes both `view_features` ([C,H,W] maps) and `view_mlps`.
struct ScoredRays {
  std::vector<Feature> image_feats;
  std::vector<RayScores> scores;
};
ScoredRays score_rays(std::span<const Ray> rays, const GridSpec& grid, std::span<const Tensor> view_features,
                      std::span<const Mlp> view_mlps, unsigned threads = 1);

/// Dispatches already scored rays on cfg.mode.
FusionOutcome fuse_scored(const VoxelField& field, std::span<const Ray> rays, const ScoredRays& scored,
                          const Mlp& kernel, const FusionConfig& cfg, bool inference);

/// Scores every ray and dispatches on cfg.mode.
FusionOutcome fuse_frame(const VoxelField& field, std::span<const Ray> rays, std::span<const Tensor> view_features,
                         std::span<const Mlp> view_mlps, const Mlp& kernel, const FusionConfig& cfg, bool inference,
                         unsigned threads = 1);

/// Soft target per ray voxel: max over anchors within `radius` of
/// exp(-d^2 / (2 sigma^2)), d in voxel units; 0 beyond every ball.
std::vector<double> gaussian_target_3d(const Ray& ray, double radius, double sigma);

/// lambda_r * (1/m) * sum over non-empty rays of the ray's mean focal loss,
/// m the number of non-empty rays. Throws std::invalid_argument when m = 0.
double ray_loss(std::span<const std::vector<double>> weights, std::span<const std::vector<double>> targets,
                const FusionConfig& cfg);
/// Same on a tape: `weights` is the concatenation of all rays' weights.
Var ray_loss(Tape& tape, Var weights, std::span<const std::size_t> ray_sizes, const Tensor& targets,
             const FusionConfig& cfg);

}  // namespace vff
