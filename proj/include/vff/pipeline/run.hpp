#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "vff/fusion/fusion.hpp"
#include "vff/geometry/voxel_field.hpp"
#include "vff/numerics/layers.hpp"
#include "vff/pipeline/config.hpp"
#include "vff/pipeline/scene.hpp"

namespace vff {

/// Trainable parts: the sampler head, the coordinate MLP and the fusion kernel.
struct Heads {
  Module2D sampler;
  Mlp coord;
  Mlp kernel;

  static Heads make(std::size_t channels, std::size_t field_channels, const TrainConfig& cfg, std::uint64_t seed);
  std::vector<Param*> params();
};

/// A module error annotated with the pipeline stage it came from.
class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, const std::string& what)
      : std::runtime_error("stage '" + stage + "': " + what), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

struct StageTiming {
  std::string stage;
  double ms = 0.0;
};

struct RunReport {
  std::string mode;
  std::vector<StageTiming> timings;
  std::size_t points = 0;
  std::size_t dropped_points = 0;
  std::size_t sampled_pixels = 0;
  std::size_t rays = 0;
  std::size_t nonempty_rays = 0;
  std::size_t ray_voxels = 0;
  std::size_t anchors = 0;
  std::size_t budget = 0;
  std::size_t selected = 0;
  std::size_t fused = 0;
  std::size_t occupancy_before = 0;
  std::size_t occupancy_after = 0;
  double sampler_loss = 0.0;
  std::optional<double> ray_loss;  // absent without non-empty rays
  std::optional<double> grad_check_max_rel_error;
  std::uint64_t field_hash = 0;
};

/// Report fields as JSON; timings only when asked.
nlohmann::json to_json(const RunReport& report, bool with_timings = true);
/// FNV-1a over the timing-free report with every number written as its bit pattern.
std::uint64_t report_hash(const RunReport& report);
/// FNV-1a over the occupied voxels' indices and feature bit patterns.
std::uint64_t field_hash(const VoxelField& field);
std::string hex64(std::uint64_t value);

struct FusionPass {
  VoxelField voxelized;  // field before fusion
  VoxelField field;
  std::vector<Ray> rays;
  RunReport report;
};

/// augment -> voxelize -> encode -> sample -> rays -> fuse -> losses.
FusionPass run_fusion_pass(const Scene& scene, const PipelineConfig& cfg, const Heads& heads);

}  // namespace vff
