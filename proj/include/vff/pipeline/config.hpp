#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "vff/augmentor/augment.hpp"
#include "vff/fusion/fusion.hpp"
#include "vff/pipeline/scene.hpp"

namespace vff {

struct AugmentConfig {
  bool flip = false;
  double rescale = 1.0;
  double rotate = 0.0;  // radians about +z
  AlignMode mode = AlignMode::ImageOps;
};

enum class SamplerChoice { Uniformity, Density, Sparsity, Importance };

SamplerChoice parse_sampler_choice(const std::string& name);
std::string to_string(SamplerChoice choice);

struct SamplerConfig {
  SamplerChoice mode = SamplerChoice::Density;
  std::size_t n = 2048;
  int window = 64;
  double threshold = 0.5;
  double lambda_s = kSamplerLossWeight;
};

struct TrainConfig {
  std::size_t steps = 200;
  double lr = 0.05;
  std::size_t scenes = 4;
  std::size_t rays_per_scene = 128;
  std::size_t head_hidden = 8;
  std::size_t mlp_hidden = 32;
};

struct PipelineConfig {
  SceneSpec scene;
  AugmentConfig augment;
  SamplerConfig sampler;
  FusionConfig fusion;
  TrainConfig train;
  bool inference = false;
  unsigned threads = 1;
  std::uint64_t seed = 0;  // sampler draws, head initialisation and rescale correspondences

  void validate() const;
};

/// Sets one `section.key` entry from its text form. Throws
/// std::invalid_argument on an unknown key or a malformed value.
void apply_setting(PipelineConfig& cfg, const std::string& key, const std::string& value);

/// `section.key=value` override, as given on the command line.
void apply_override(PipelineConfig& cfg, const std::string& assignment);

/// Reads an INI file with sections grid, camera, scene, augment, sampler,
/// fusion, train and run on top of `base`.
PipelineConfig load_config(const std::filesystem::path& path, PipelineConfig base = {});

/// Every known key with its current value, in a fixed order.
std::vector<std::pair<std::string, std::string>> config_entries(const PipelineConfig& cfg);

}  // namespace vff
