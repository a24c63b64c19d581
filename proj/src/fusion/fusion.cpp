#include "vff/fusion/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "vff/numerics/parallel.hpp"

namespace vff {

namespace {

double squared_index_distance(const VoxelIndex& a, const VoxelIndex& b) {
  const double dx = a.x - b.x, dy = a.y - b.y, dz = a.z - b.z;
  return dx * dx + dy * dy + dz * dz;
}

// exp(-d^2 / (2 sigma^2)) inside the radius, 0 outside; d = 0 is always 1.
double ball_weight(double d2, double radius, double sigma) {
  if (d2 == 0.0) return 1.0;
  if (d2 > radius * radius || sigma <= 0.0) return 0.0;
  return std::exp(-d2 / (2.0 * sigma * sigma));
}

void check_inputs(std::span<const Ray> rays, std::span<const Feature> image_feats, std::span<const RayScores> scores) {
  if (image_feats.size() != rays.size() || scores.size() != rays.size()) {
    throw std::invalid_argument("fusion needs one image feature and one score set per ray");
  }
  for (std::size_t r = 0; r < rays.size(); ++r) {
    if (scores[r].embeds.size() != rays[r].size() || scores[r].weights.size() != rays[r].size()) {
      throw std::invalid_argument("scores of ray " + std::to_string(r) + " do not match its length");
    }
  }
}

}  // namespace

FusionMode parse_fusion_mode(const std::string& name) {
  if (name == "single") return FusionMode::Single;
  if (name == "local_aggregate") return FusionMode::LocalAggregate;
  if (name == "local_propagate") return FusionMode::LocalPropagate;
  if (name == "ray_wise") return FusionMode::RayWise;
  throw std::invalid_argument("unknown fusion mode '" + name + "'");
}

std::string to_string(FusionMode mode) {
  switch (mode) {
    case FusionMode::Single: return "single";
    case FusionMode::LocalAggregate: return "local_aggregate";
    case FusionMode::LocalPropagate: return "local_propagate";
    case FusionMode::RayWise: return "ray_wise";
  }
  return "unknown";
}

void FusionConfig::validate() const {
  if (!(radius >= 0.0) || !std::isfinite(radius)) throw std::invalid_argument("fusion radius must be >= 0");
  if (!(top_fraction > 0.0 && top_fraction <= 1.0)) throw std::invalid_argument("top_fraction must lie in (0,1]");
  if (!(infer_threshold >= 0.0 && infer_threshold < 1.0)) {
    throw std::invalid_argument("infer_threshold must lie in [0,1)");
  }
  if (!(lambda_r >= 0.0)) throw std::invalid_argument("lambda_r must be >= 0");
}

Feature coord_embed(const VoxelIndex& v, const GridSpec& grid, const Mlp& mlp) {
  if (!grid.contains(v)) throw std::invalid_argument("voxel outside the grid");
  const Eigen::Vector3d n = grid.normalized(v);
  const double in[3] = {n.x(), n.y(), n.z()};
  return mlp_forward(in, mlp);
}

double ray_weight(std::span<const double> image_feat, std::span<const double> embed) {
  if (image_feat.size() != embed.size()) {
    throw std::invalid_argument("image feature has " + std::to_string(image_feat.size()) + " channels, embedding has " +
                                std::to_string(embed.size()));
  }
  double dot = 0.0;
  for (std::size_t i = 0; i < embed.size(); ++i) dot += image_feat[i] * embed[i];
  return kernels::sigmoid(dot);
}

Feature pixel_feature(const Tensor& feature_map, const FeatureCell& cell) {
  if (feature_map.rank() != 3) throw std::invalid_argument("feature map must be [C,H,W]");
  if (cell.u < 0 || cell.v < 0 || static_cast<std::size_t>(cell.u) >= feature_map.dim(2) ||
      static_cast<std::size_t>(cell.v) >= feature_map.dim(1)) {
    throw std::invalid_argument("cell (" + std::to_string(cell.u) + "," + std::to_string(cell.v) +
                                ") outside the feature map");
  }
  Feature f(feature_map.dim(0));
  for (std::size_t c = 0; c < f.size(); ++c) f[c] = feature_map.at(c, cell.v, cell.u);
  return f;
}

Mlp make_fusion_kernel(std::size_t image_channels, std::size_t embed_channels, std::size_t field_channels,
                       std::uint64_t seed) {
  return Mlp({image_channels + embed_channels, field_channels}, Activation::Tanh, seed);
}

Feature apply_fusion_kernel(const Mlp& kernel, std::span<const double> image_feat, std::span<const double> embed) {
  Feature in(image_feat.begin(), image_feat.end());
  in.insert(in.end(), embed.begin(), embed.end());
  return mlp_forward(in, kernel);
}

RayScores score_ray(const Ray& ray, const Feature& image_feat, const GridSpec& grid, const Mlp& mlp) {
  RayScores s;
  s.embeds.reserve(ray.size());
  s.weights.reserve(ray.size());
  for (const VoxelIndex& v : ray.voxels) {
    s.embeds.push_back(coord_embed(v, grid, mlp));
    s.weights.push_back(ray_weight(image_feat, s.embeds.back()));
  }
  return s;
}

ScoredRays score_rays(std::span<const Ray> rays, const GridSpec& grid, std::span<const Tensor> view_features,
                      std::span<const Mlp> view_mlps, unsigned threads) {
  for (const Ray& r : rays) {
    if (r.view >= view_features.size() || r.view >= view_mlps.size()) {
      throw std::invalid_argument("ray view " + std::to_string(r.view) + " has no feature map or MLP");
    }
  }
  ScoredRays out;
  out.image_feats.resize(rays.size());
  out.scores.resize(rays.size());
  parallel_for(rays.size(), threads, [&](std::size_t i) {
    out.image_feats[i] = pixel_feature(view_features[rays[i].view], rays[i].pixel);
    out.scores[i] = score_ray(rays[i], out.image_feats[i], grid, view_mlps[rays[i].view]);
  });
  return out;
}

std::size_t fusion_budget(std::size_t occupancy_count, double top_fraction) {
  return static_cast<std::size_t>(std::ceil(top_fraction * static_cast<double>(occupancy_count)));
}

std::vector<ScoredVoxel> select_top(std::vector<ScoredVoxel> candidates, std::size_t occupancy_count,
                                    double top_fraction, std::optional<double> threshold) {
  if (threshold) {
    std::erase_if(candidates, [&](const ScoredVoxel& c) { return !(c.weight > *threshold); });
  }
  const std::size_t k = std::min(fusion_budget(occupancy_count, top_fraction), candidates.size());
  const auto rank = [](const ScoredVoxel& a, const ScoredVoxel& b) {
    if (a.weight != b.weight) return a.weight > b.weight;
    if (a.linear != b.linear) return a.linear < b.linear;
    if (a.ray != b.ray) return a.ray < b.ray;
    return a.pos < b.pos;
  };
  std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(k), candidates.end(), rank);
  candidates.resize(k);
  std::sort(candidates.begin(), candidates.end(), [](const ScoredVoxel& a, const ScoredVoxel& b) {
    return a.ray != b.ray ? a.ray < b.ray : a.pos < b.pos;
  });
  return candidates;
}

FusionOutcome commit_ray_wise(const VoxelField& field, std::span<const Ray> rays, std::span<const Feature> image_feats,
                              std::span<const RayScores> scores, const Mlp& kernel, const FusionConfig& cfg,
                              bool inference) {
  cfg.validate();
  check_inputs(rays, image_feats, scores);
  std::vector<ScoredVoxel> candidates;
  for (std::size_t r = 0; r < rays.size(); ++r)
    for (std::size_t p = 0; p < rays[r].size(); ++p)
      candidates.push_back({r, p, field.grid().linear(rays[r].voxels[p]), scores[r].weights[p]});

  FusionOutcome out{field, candidates.size(), 0, {}};
  out.selected = select_top(std::move(candidates), field.occupancy_count(), cfg.top_fraction,
                            inference ? std::optional<double>(cfg.infer_threshold) : std::nullopt);
  for (const ScoredVoxel& s : out.selected) {
    if (s.weight == 0.0) continue;
    Feature delta = apply_fusion_kernel(kernel, image_feats[s.ray], scores[s.ray].embeds[s.pos]);
    for (double& d : delta) d *= s.weight;
    out.field.add(rays[s.ray].voxels[s.pos], delta);
    ++out.fused;
  }
  return out;
}

FusionOutcome fuse_single(const VoxelField& field, std::span<const Ray> rays, std::span<const Feature> image_feats,
                          std::span<const RayScores> scores, const Mlp& kernel) {
  check_inputs(rays, image_feats, scores);
  FusionOutcome out{field, 0, 0, {}};
  for (std::size_t r = 0; r < rays.size(); ++r) {
    out.candidates += rays[r].size();
    for (std::size_t a : rays[r].anchors) {
      out.field.add(rays[r].voxels[a], apply_fusion_kernel(kernel, image_feats[r], scores[r].embeds[a]));
      ++out.fused;
    }
  }
  return out;
}

FusionOutcome fuse_local(const VoxelField& field, std::span<const Ray> rays, std::span<const Feature> image_feats,
                         std::span<const RayScores> scores, const Mlp& kernel, FusionMode mode, double radius) {
  if (mode != FusionMode::LocalAggregate && mode != FusionMode::LocalPropagate) {
    throw std::invalid_argument("fuse_local needs an aggregate or propagate mode");
  }
  if (!(radius >= 0.0)) throw std::invalid_argument("fusion radius must be >= 0");
  check_inputs(rays, image_feats, scores);
  const double sigma = radius / 2.0;
  FusionOutcome out{field, 0, 0, {}};
  for (std::size_t r = 0; r < rays.size(); ++r) {
    const Ray& ray = rays[r];
    out.candidates += ray.size();
    std::vector<Feature> f(ray.size());
    const auto kernel_at = [&](std::size_t p) -> const Feature& {
      if (f[p].empty()) f[p] = apply_fusion_kernel(kernel, image_feats[r], scores[r].embeds[p]);
      return f[p];
    };
    for (std::size_t a : ray.anchors) {
      Feature acc(field.channels(), 0.0);
      for (std::size_t j = 0; j < ray.size(); ++j) {
        const double g = ball_weight(squared_index_distance(ray.voxels[a], ray.voxels[j]), radius, sigma);
        if (g == 0.0) continue;
        if (mode == FusionMode::LocalAggregate) {
          const Feature& fj = kernel_at(j);
          for (std::size_t c = 0; c < acc.size(); ++c) acc[c] += g * fj[c];
        } else {
          Feature delta = kernel_at(a);
          for (double& d : delta) d *= g;
          out.field.add(ray.voxels[j], delta);
          ++out.fused;
        }
      }
      if (mode == FusionMode::LocalAggregate) {
        out.field.add(ray.voxels[a], acc);
        ++out.fused;
      }
    }
  }
  return out;
}

FusionOutcome fuse_scored(const VoxelField& field, std::span<const Ray> rays, const ScoredRays& scored,
                          const Mlp& kernel, const FusionConfig& cfg, bool inference) {
  cfg.validate();
  switch (cfg.mode) {
    case FusionMode::Single: return fuse_single(field, rays, scored.image_feats, scored.scores, kernel);
    case FusionMode::LocalAggregate:
    case FusionMode::LocalPropagate:
      return fuse_local(field, rays, scored.image_feats, scored.scores, kernel, cfg.mode, cfg.radius);
    case FusionMode::RayWise:
      return commit_ray_wise(field, rays, scored.image_feats, scored.scores, kernel, cfg, inference);
  }
  throw std::invalid_argument("unknown fusion mode");
}

FusionOutcome fuse_frame(const VoxelField& field, std::span<const Ray> rays, std::span<const Tensor> view_features,
                         std::span<const Mlp> view_mlps, const Mlp& kernel, const FusionConfig& cfg, bool inference,
                         unsigned threads) {
  cfg.validate();
  return fuse_scored(field, rays, score_rays(rays, field.grid(), view_features, view_mlps, threads), kernel, cfg,
                     inference);
}

std::vector<double> gaussian_target_3d(const Ray& ray, double radius, double sigma) {
  if (!(radius >= 0.0) || !(sigma >= 0.0)) throw std::invalid_argument("radius and sigma must be >= 0");
  std::vector<double> target(ray.size(), 0.0);
  for (std::size_t a : ray.anchors) {
    if (a >= ray.size()) throw std::invalid_argument("anchor position outside the ray");
    for (std::size_t j = 0; j < ray.size(); ++j) {
      target[j] = std::max(target[j], ball_weight(squared_index_distance(ray.voxels[a], ray.voxels[j]), radius, sigma));
    }
  }
  return target;
}

double ray_loss(std::span<const std::vector<double>> weights, std::span<const std::vector<double>> targets,
                const FusionConfig& cfg) {
  if (weights.size() != targets.size()) throw std::invalid_argument("one target per ray is required");
  double total = 0.0;
  std::size_t m = 0;
  for (std::size_t r = 0; r < weights.size(); ++r) {
    if (weights[r].size() != targets[r].size()) {
      throw std::invalid_argument("weights and targets of ray " + std::to_string(r) + " differ in length");
    }
    if (weights[r].empty()) continue;
    double s = 0.0;
    for (std::size_t j = 0; j < weights[r].size(); ++j) s += kernels::focal_element(weights[r][j], targets[r][j], cfg.focal);
    total += s / static_cast<double>(weights[r].size());
    ++m;
  }
  if (m == 0) throw std::invalid_argument("ray loss needs at least one non-empty ray");
  return cfg.lambda_r * total / static_cast<double>(m);
}

Var ray_loss(Tape& tape, Var weights, std::span<const std::size_t> ray_sizes, const Tensor& targets,
             const FusionConfig& cfg) {
  std::size_t total = 0, m = 0;
  for (std::size_t n : ray_sizes) {
    total += n;
    m += n > 0;
  }
  if (m == 0) throw std::invalid_argument("ray loss needs at least one non-empty ray");
  if (tape.value(weights).size() != total || targets.size() != total) {
    throw std::invalid_argument("ray weights and targets must hold " + std::to_string(total) + " values");
  }
  std::vector<double> w;
  w.reserve(total);
  for (std::size_t n : ray_sizes)
    for (std::size_t j = 0; j < n; ++j) w.push_back(1.0 / (static_cast<double>(n) * static_cast<double>(m)));
  return ops::scale(tape, ops::focal_loss(tape, weights, targets, cfg.focal, w), cfg.lambda_r);
}

}  // namespace vff
