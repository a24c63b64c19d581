#include "vff/pipeline/train.hpp"

#include <cmath>
#include <random>

#include "vff/numerics/kernels.hpp"
#include "vff/ray/ray.hpp"
#include "vff/sampler/sampler.hpp"

namespace vff {

TrainingExample make_training_example(const Scene& scene, const PipelineConfig& cfg, std::uint64_t seed) {
  const ImageGeometry& image = scene.image_geometry;
  const int fw = image.feature_width(), fh = image.feature_height();
  const VoxelField field = voxelize(scene.cloud, scene.grid).field;
  const Mat34 camera = scene.calib.lidar_to_image();

  TrainingExample ex;
  ex.features = scene.features;
  std::vector<ImageBox> boxes;
  for (const ImageBox& b : scene.boxes2d) boxes.push_back(to_feature_box(b, image.stride));
  ex.target2d = gaussian_target_2d(boxes, fh, fw).map;

  const std::vector<FeatureCell> cells = project_to_cells(scene.cloud, camera, image);
  const WindowPartition part = partition_windows(fw, fh, cells, cfg.sampler.window);
  std::mt19937_64 rng(seed);
  const PixelSampleSet pixels = heuristic_sample(part, SampleMode::Density, cfg.train.rays_per_scene, rng);
  const ProjectionTransform vt = compose_projection(scene.grid, scene.calib, {}, image);

  std::vector<Ray> rays;
  std::size_t rows = 0;
  for (Ray& r : construct_rays(vt, scene.grid, pixels.pixels, cfg.threads)) {
    rays.push_back(mark_anchors(std::move(r), field));
    rows += rays.back().size();
  }
  if (rows == 0) throw std::runtime_error("training scene produced no ray voxels");

  const std::size_t channels = ex.features.dim(0);
  ex.coords = Tensor({rows, 3});
  ex.image_rows = Tensor({rows, channels});
  ex.target3d = Tensor({rows});
  std::size_t row = 0;
  for (const Ray& r : rays) {
    ex.ray_sizes.push_back(r.size());
    const std::vector<double> target = gaussian_target_3d(r, cfg.fusion.radius, cfg.fusion.sigma());
    for (std::size_t j = 0; j < r.size(); ++j, ++row) {
      const Eigen::Vector3d n = scene.grid.normalized(r.voxels[j]);
      for (int a = 0; a < 3; ++a) ex.coords.at(row, a) = n[a];
      for (std::size_t c = 0; c < channels; ++c) ex.image_rows.at(row, c) = ex.features.at(c, r.pixel.v, r.pixel.u);
      ex.target3d[row] = target[j];
    }
  }
  return ex;
}

Var vff_loss(Tape& tape, const TrainingExample& ex, Heads& heads, const PipelineConfig& cfg) {
  const Var probs = ops::sigmoid(tape, heads.sampler.forward(tape, tape.constant(ex.features)));
  const Var ls = sampler_loss(tape, probs, ex.target2d, cfg.sampler.lambda_s);
  const Var embed = heads.coord.forward(tape, tape.constant(ex.coords));
  const Var w = ops::sigmoid(tape, ops::rowdot(tape, tape.constant(ex.image_rows), embed));
  return ops::add(tape, ls, ray_loss(tape, w, ex.ray_sizes, ex.target3d, cfg.fusion));
}

double vff_loss_value(const TrainingExample& ex, Heads& heads, const PipelineConfig& cfg) {
  Tape tape;
  return tape.scalar(vff_loss(tape, ex, heads, cfg));
}

WeightStats weight_stats(std::span<const TrainingExample> examples, Heads& heads) {
  WeightStats s;
  for (const TrainingExample& ex : examples) {
    const Tensor embed = heads.coord.forward(ex.coords);
    for (std::size_t i = 0; i < ex.target3d.size(); ++i) {
      double dot = 0.0;
      for (std::size_t c = 0; c < embed.dim(1); ++c) dot += ex.image_rows.at(i, c) * embed.at(i, c);
      const double w = kernels::sigmoid(dot);
      if (ex.target3d[i] == 1.0) {
        s.anchor_mean += w;
        ++s.anchors;
      } else if (ex.target3d[i] == 0.0) {
        s.far_mean += w;
        ++s.far;
      }
    }
  }
  if (s.anchors > 0) s.anchor_mean /= static_cast<double>(s.anchors);
  if (s.far > 0) s.far_mean /= static_cast<double>(s.far);
  return s;
}

TrainResult train_heads(std::span<const TrainingExample> examples, Heads& heads, const PipelineConfig& cfg) {
  if (examples.empty()) throw std::invalid_argument("training needs at least one example");
  if (cfg.train.steps == 0) throw std::invalid_argument("training needs at least one step");
  const std::vector<Param*> params = heads.params();
  const double inv = 1.0 / static_cast<double>(examples.size());
  TrainResult out;
  for (std::size_t step = 0; step <= cfg.train.steps; ++step) {
    zero_grads(params);
    Tape tape;
    Var total = vff_loss(tape, examples[0], heads, cfg);
    for (std::size_t i = 1; i < examples.size(); ++i) total = ops::add(tape, total, vff_loss(tape, examples[i], heads, cfg));
    const Var loss = ops::scale(tape, total, inv);
    const double value = tape.scalar(loss);
    if (!std::isfinite(value)) throw std::runtime_error("loss became non-finite at step " + std::to_string(step));
    out.losses.push_back(value);
    if (step == cfg.train.steps) break;
    tape.backward(loss);
    for (Param* p : params)
      for (std::size_t k = 0; k < p->value.size(); ++k) p->value[k] -= cfg.train.lr * p->grad[k];
  }
  return out;
}

std::vector<double> moving_average(std::span<const double> values, std::size_t window) {
  if (window == 0) throw std::invalid_argument("window must be positive");
  std::vector<double> out;
  for (std::size_t i = 0; i + window <= values.size(); ++i) {
    double s = 0.0;
    for (std::size_t k = i; k < i + window; ++k) s += values[k];
    out.push_back(s / static_cast<double>(window));
  }
  return out;
}

}  // namespace vff
