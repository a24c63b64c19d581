#include "vff/pipeline/run.hpp"

#include <bit>
#include <chrono>
#include <cstdio>
#include <random>

#include "vff/augmentor/augment.hpp"
#include "vff/numerics/kernels.hpp"
#include "vff/ray/ray.hpp"
#include "vff/sampler/sampler.hpp"

namespace vff {

namespace {

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ull;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ull;

void fnv_bytes(std::uint64_t& h, const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= kFnvPrime;
  }
}

nlohmann::json number(double v, bool canonical) {
  if (canonical) return hex64(std::bit_cast<std::uint64_t>(v));
  return v;
}

class Stopwatch {
 public:
  explicit Stopwatch(std::vector<StageTiming>& out) : out_(out) {}
  template <class Fn>
  auto run(const std::string& stage, Fn&& fn) {
    const auto start = std::chrono::steady_clock::now();
    try {
      if constexpr (std::is_void_v<decltype(fn())>) {
        fn();
        record(stage, start);
      } else {
        auto result = fn();
        record(stage, start);
        return result;
      }
    } catch (const StageError&) {
      throw;
    } catch (const std::exception& e) {
      throw StageError(stage, e.what());
    }
  }

 private:
  void record(const std::string& stage, std::chrono::steady_clock::time_point start) {
    out_.push_back({stage, std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count()});
  }
  std::vector<StageTiming>& out_;
};

nlohmann::json report_json(const RunReport& r, bool with_timings, bool canonical) {
  nlohmann::json j;
  j["mode"] = r.mode;
  j["points"] = r.points;
  j["dropped_points"] = r.dropped_points;
  j["sampled_pixels"] = r.sampled_pixels;
  j["rays"] = r.rays;
  j["nonempty_rays"] = r.nonempty_rays;
  j["ray_voxels"] = r.ray_voxels;
  j["anchors"] = r.anchors;
  j["budget"] = r.budget;
  j["selected"] = r.selected;
  j["fused"] = r.fused;
  j["occupancy_before"] = r.occupancy_before;
  j["occupancy_after"] = r.occupancy_after;
  j["sampler_loss"] = number(r.sampler_loss, canonical);
  j["ray_loss"] = r.ray_loss ? number(*r.ray_loss, canonical) : nlohmann::json(nullptr);
  j["grad_check_max_rel_error"] =
      r.grad_check_max_rel_error ? number(*r.grad_check_max_rel_error, canonical) : nlohmann::json(nullptr);
  j["field_hash"] = hex64(r.field_hash);
  if (with_timings) {
    nlohmann::json t = nlohmann::json::object();
    for (const auto& s : r.timings) t[s.stage] = s.ms;
    j["timings_ms"] = t;
  }
  return j;
}

}  // namespace

Heads Heads::make(std::size_t channels, std::size_t field_channels, const TrainConfig& cfg, std::uint64_t seed) {
  return {Module2D::sampler_head(channels, cfg.head_hidden, seed),
          Mlp({3, cfg.mlp_hidden, channels}, Activation::Tanh, seed + 1),
          make_fusion_kernel(channels, channels, field_channels, seed + 2)};
}

std::vector<Param*> Heads::params() {
  std::vector<Param*> out = sampler.params();
  for (Param* p : coord.params()) out.push_back(p);
  for (Param* p : kernel.params()) out.push_back(p);
  return out;
}

nlohmann::json to_json(const RunReport& report, bool with_timings) { return report_json(report, with_timings, false); }

std::uint64_t report_hash(const RunReport& report) {
  const std::string text = report_json(report, false, true).dump();
  std::uint64_t h = kFnvOffset;
  fnv_bytes(h, text.data(), text.size());
  return h;
}

std::uint64_t field_hash(const VoxelField& field) {
  std::uint64_t h = kFnvOffset;
  for (const auto& [idx, f] : field.entries()) {
    fnv_bytes(h, &idx, sizeof idx);
    for (double v : f) {
      const std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
      fnv_bytes(h, &bits, sizeof bits);
    }
  }
  return h;
}

std::string hex64(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

FusionPass run_fusion_pass(const Scene& scene, const PipelineConfig& cfg, const Heads& heads) {
  cfg.validate();
  FusionPass out;
  RunReport& rep = out.report;
  rep.mode = to_string(cfg.fusion.mode);
  Stopwatch clock(rep.timings);
  const ImageGeometry& image = scene.image_geometry;

  PointCloud points = scene.cloud;
  Tensor rgb = scene.image;
  AugmentRecord rec;
  clock.run("augment", [&] {
    if (cfg.augment.flip) {
      AugmentedScene a = apply_flip(points, rgb, cfg.augment.mode);
      points = std::move(a.points);
      rgb = std::move(a.image);
      rec = rec.then(a.record);
    }
    if (cfg.augment.rescale != 1.0) {
      RescaleOptions opts;
      opts.seed = cfg.seed;
      opts.mode = cfg.augment.mode;
      AugmentedScene a =
          apply_rescale(points, rgb, cfg.augment.rescale, augmented_camera(scene.calib, rec), opts);
      points = std::move(a.points);
      rgb = std::move(a.image);
      rec = rec.then(a.record);
    }
    if (cfg.augment.rotate != 0.0) {
      RotatedPoints r = apply_rotate(points, cfg.augment.rotate);
      points = std::move(r.points);
      rec = rec.then(r.record);
    }
  });
  rep.points = points.size();

  clock.run("voxelize", [&] {
    VoxelizeResult v = voxelize(points, scene.grid);
    out.voxelized = std::move(v.field);
    rep.dropped_points = v.dropped;
  });
  rep.occupancy_before = out.voxelized.occupancy_count();

  const Tensor features = clock.run("encode", [&] { return encode_features(rgb, image.stride, scene.features.dim(0)); });
  const int fw = image.feature_width(), fh = image.feature_height();
  const Mat34 camera = augmented_camera(scene.calib, rec);

  const PixelSampleSet pixels = clock.run("sample", [&] {
    const std::vector<FeatureCell> cells = project_to_cells(points, camera, image);
    const WindowPartition part = partition_windows(fw, fh, cells, cfg.sampler.window);
    std::mt19937_64 rng(cfg.seed);
    switch (cfg.sampler.mode) {
      case SamplerChoice::Uniformity: return heuristic_sample(part, SampleMode::Uniformity, cfg.sampler.n, rng);
      case SamplerChoice::Density: return heuristic_sample(part, SampleMode::Density, cfg.sampler.n, rng);
      case SamplerChoice::Sparsity: return heuristic_sample(part, SampleMode::Sparsity, cfg.sampler.n, rng);
      case SamplerChoice::Importance:
        return importance_sample(features, heads.sampler, part, cfg.sampler.n, rng, cfg.sampler.threshold);
    }
    throw std::invalid_argument("unknown sampler mode");
  });
  rep.sampled_pixels = pixels.pixels.size();

  clock.run("rays", [&] {
    const ProjectionTransform vt = compose_projection(scene.grid, scene.calib, rec, image);
    for (Ray& r : construct_rays(vt, scene.grid, pixels.pixels, cfg.threads)) {
      out.rays.push_back(mark_anchors(std::move(r), out.voxelized));
    }
  });
  rep.rays = out.rays.size();
  for (const Ray& r : out.rays) {
    rep.nonempty_rays += !r.empty();
    rep.ray_voxels += r.size();
    rep.anchors += r.anchors.size();
  }

  ScoredRays scored;
  clock.run("fuse", [&] {
    const Tensor maps[] = {features};
    const Mlp mlps[] = {heads.coord};
    scored = score_rays(out.rays, scene.grid, maps, mlps, cfg.threads);
    FusionOutcome f = fuse_scored(out.voxelized, out.rays, scored, heads.kernel, cfg.fusion, cfg.inference);
    out.field = std::move(f.field);
    rep.fused = f.fused;
    rep.selected = f.selected.size();
  });
  rep.budget = fusion_budget(rep.occupancy_before, cfg.fusion.top_fraction);
  rep.occupancy_after = out.field.occupancy_count();
  rep.field_hash = field_hash(out.field);

  clock.run("loss", [&] {
    std::vector<ImageBox> boxes;
    for (const ImageBox& b : scene.boxes2d) {
      ImageBox t = transform_image_box(b, rec.affine2d);
      t = {std::clamp(t.x0, 0.0, double(image.width)), std::clamp(t.y0, 0.0, double(image.height)),
           std::clamp(t.x1, 0.0, double(image.width)), std::clamp(t.y1, 0.0, double(image.height))};
      boxes.push_back(to_feature_box(t, image.stride));
    }
    const Tensor target = gaussian_target_2d(boxes, fh, fw).map;
    Tensor probs = conv2d_forward(features, heads.sampler);
    for (double& p : probs.data()) p = kernels::sigmoid(p);
    rep.sampler_loss = sampler_loss(probs, target, cfg.sampler.lambda_s);
    if (rep.nonempty_rays > 0) {
      std::vector<std::vector<double>> targets;
      for (const Ray& r : out.rays) targets.push_back(gaussian_target_3d(r, cfg.fusion.radius, cfg.fusion.sigma()));
      std::vector<std::vector<double>> weights;
      for (const RayScores& s : scored.scores) weights.push_back(s.weights);
      rep.ray_loss = ray_loss(weights, targets, cfg.fusion);
    }
  });
  return out;
}

}  // namespace vff
