#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <random>

#include "vff/numerics/gradcheck.hpp"
#include "vff/pipeline/train.hpp"
#include "vff/ray/ray.hpp"

using namespace vff;
using nlohmann::json;

namespace {

constexpr double kGradTolerance = 1e-4;

// Writes JSON lines to a file or stdout.
class Sink {
 public:
  explicit Sink(const std::string& path) {
    if (!path.empty()) {
      file_.open(path);
      if (!file_) throw std::runtime_error("cannot open '" + path + "' for writing");
    }
  }
  void line(const json& j) { out() << j.dump() << '\n'; }
  std::ostream& out() { return file_.is_open() ? file_ : std::cout; }

 private:
  std::ofstream file_;
};

double ms_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

json config_json(const PipelineConfig& cfg) {
  json j = json::object();
  for (const auto& [k, v] : config_entries(cfg)) j[k] = v;
  return j;
}

std::vector<ImageBox> feature_boxes(const Scene& s) {
  std::vector<ImageBox> out;
  for (const ImageBox& b : s.boxes2d) out.push_back(to_feature_box(b, s.image_geometry.stride));
  return out;
}

int cmd_gen_scene(const PipelineConfig& cfg, const std::string& out_dir) {
  const Scene s = gen_scene(cfg.scene);
  json summary = {{"type", "summary"}, {"points", s.cloud.size()}, {"objects", s.boxes3d.size()},
                  {"features", s.features.shape()}};
  json boxes = json::array();
  for (std::size_t i = 0; i < s.boxes3d.size(); ++i) {
    const Box3D& b = s.boxes3d[i];
    const ImageBox& p = s.boxes2d[i];
    boxes.push_back({{"center", {b.center.x(), b.center.y(), b.center.z()}},
                     {"size", {b.size.x(), b.size.y(), b.size.z()}},
                     {"yaw", b.yaw},
                     {"box2d", {p.x0, p.y0, p.x1, p.y1}}});
  }
  summary["boxes"] = boxes;
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    write_kitti_bin(std::filesystem::path(out_dir) / "points.bin", s.cloud);
    std::ofstream(std::filesystem::path(out_dir) / "calib.txt") << format_kitti_calib(s.calib);
    std::ofstream(std::filesystem::path(out_dir) / "scene.json") << summary.dump(2) << '\n';
    summary["written"] = out_dir;
  }
  std::cout << summary.dump() << '\n';
  return 0;
}

int cmd_project(const PipelineConfig& cfg, const std::string& points_path, Sink& sink) {
  const Scene s = gen_scene(cfg.scene);
  const ImageGeometry& image = s.image_geometry;
  if (!points_path.empty()) {
    const PointCloud cloud = read_kitti_bin(points_path);
    const Mat34 cam = s.calib.lidar_to_image();
    std::size_t inside = 0;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      const ContinuousPixel px = project_world(cam, cloud.points[i].xyz());
      const bool in = px.depth > 0 && px.pixel.x() >= 0 && px.pixel.y() >= 0 && px.pixel.x() < image.width &&
                      px.pixel.y() < image.height;
      inside += in;
      sink.line({{"type", "point"}, {"index", i}, {"x", px.pixel.x()}, {"y", px.pixel.y()}, {"depth", px.depth},
                 {"inside", in}});
    }
    sink.line({{"type", "summary"}, {"points", cloud.size()}, {"inside", inside}});
    return 0;
  }
  const ProjectionTransform vt = compose_projection(s.grid, s.calib, {}, image);
  std::size_t counts[3] = {0, 0, 0};
  for (std::int64_t i = 0; i < s.grid.voxel_count(); ++i) ++counts[static_cast<int>(project(vt, s.grid.from_linear(i)).status)];
  sink.line({{"type", "summary"},
             {"voxels", s.grid.voxel_count()},
             {"inside", counts[static_cast<int>(ProjectionStatus::Inside)]},
             {"behind", counts[static_cast<int>(ProjectionStatus::Behind)]},
             {"out_of_bounds", counts[static_cast<int>(ProjectionStatus::OutOfBounds)]}});
  return 0;
}

PixelSampleSet sample_pixels(const Scene& s, const PipelineConfig& cfg, WindowPartition& part) {
  const ImageGeometry& image = s.image_geometry;
  const std::vector<FeatureCell> cells = project_to_cells(s.cloud, s.calib.lidar_to_image(), image);
  part = partition_windows(image.feature_width(), image.feature_height(), cells, cfg.sampler.window);
  std::mt19937_64 rng(cfg.seed);
  switch (cfg.sampler.mode) {
    case SamplerChoice::Uniformity: return heuristic_sample(part, SampleMode::Uniformity, cfg.sampler.n, rng);
    case SamplerChoice::Density: return heuristic_sample(part, SampleMode::Density, cfg.sampler.n, rng);
    case SamplerChoice::Sparsity: return heuristic_sample(part, SampleMode::Sparsity, cfg.sampler.n, rng);
    case SamplerChoice::Importance: {
      const Heads h = Heads::make(s.features.dim(0), 4, cfg.train, cfg.seed);
      return importance_sample(s.features, h.sampler, part, cfg.sampler.n, rng, cfg.sampler.threshold);
    }
  }
  throw std::invalid_argument("unknown sampler mode");
}

int cmd_sample(const PipelineConfig& cfg, Sink& sink) {
  const Scene s = gen_scene(cfg.scene);
  WindowPartition part;
  const PixelSampleSet set = sample_pixels(s, cfg, part);
  for (std::size_t i = 0; i < set.pixels.size(); ++i) {
    json j = {{"type", "pixel"}, {"u", set.pixels[i].u}, {"v", set.pixels[i].v}};
    if (!set.scores.empty()) j["score"] = set.scores[i];
    sink.line(j);
  }
  const Target2D target = gaussian_target_2d(feature_boxes(s), s.image_geometry.feature_height(),
                                             s.image_geometry.feature_width());
  sink.line({{"type", "summary"},
             {"mode", to_string(cfg.sampler.mode)},
             {"windows", part.windows.size()},
             {"kept_windows", part.kept().size()},
             {"sampled", set.pixels.size()},
             {"skipped_boxes", target.skipped}});
  return 0;
}

int cmd_rays(const PipelineConfig& cfg, bool verify, Sink& sink) {
  const Scene s = gen_scene(cfg.scene);
  WindowPartition part;
  const PixelSampleSet set = sample_pixels(s, cfg, part);
  const VoxelField field = voxelize(s.cloud, s.grid).field;
  const ProjectionTransform vt = compose_projection(s.grid, s.calib, {}, s.image_geometry);
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<Ray> rays = construct_rays(vt, s.grid, set.pixels, cfg.threads);
  const double build_ms = ms_since(t0);
  std::size_t nonempty = 0, voxels = 0, anchors = 0, longest = 0, mismatches = 0;
  for (Ray& r : rays) {
    r = mark_anchors(std::move(r), field);
    nonempty += !r.empty();
    voxels += r.size();
    anchors += r.anchors.size();
    longest = std::max(longest, r.size());
    if (verify) mismatches += r.voxels != brute_force_ray_oracle(vt, s.grid, r.pixel);
    sink.line({{"type", "ray"}, {"u", r.pixel.u}, {"v", r.pixel.v}, {"voxels", r.size()}, {"anchors", r.anchors.size()}});
  }
  json summary = {{"type", "summary"}, {"rays", rays.size()},   {"nonempty", nonempty}, {"voxels", voxels},
                  {"anchors", anchors},  {"longest", longest}, {"build_ms", build_ms}};
  if (verify) summary["oracle_mismatches"] = mismatches;
  sink.line(summary);
  return verify && mismatches > 0 ? 1 : 0;
}

int cmd_fuse(const PipelineConfig& cfg, Sink& sink) {
  const Scene s = gen_scene(cfg.scene);
  const Heads heads = Heads::make(s.features.dim(0), 4, cfg.train, cfg.seed);
  const FusionPass pass = run_fusion_pass(s, cfg, heads);
  for (const StageTiming& t : pass.report.timings) sink.line({{"type", "stage"}, {"stage", t.stage}, {"ms", t.ms}});
  json summary = to_json(pass.report);
  summary["type"] = "summary";
  summary["hash"] = hex64(report_hash(pass.report));
  summary["config"] = config_json(cfg);
  sink.line(summary);
  return 0;
}

int cmd_train(const PipelineConfig& cfg, Sink& sink) {
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<TrainingExample> set;
  for (std::size_t i = 0; i < cfg.train.scenes; ++i) {
    SceneSpec spec = cfg.scene;
    spec.seed = cfg.scene.seed + i;
    set.push_back(make_training_example(gen_scene(spec), cfg, cfg.seed + i));
  }
  Heads heads = Heads::make(set[0].features.dim(0), 4, cfg.train, cfg.seed);
  const WeightStats before = weight_stats(set, heads);
  const TrainResult r = train_heads(set, heads, cfg);
  const WeightStats after = weight_stats(set, heads);
  for (std::size_t i = 0; i < r.losses.size(); ++i) sink.line({{"type", "step"}, {"step", i}, {"loss", r.losses[i]}});
  const std::size_t window = std::min<std::size_t>(50, cfg.train.steps);
  const std::vector<double> ma = moving_average(std::span(r.losses).first(cfg.train.steps), window);
  bool decreasing = true;
  for (std::size_t i = 1; i < ma.size(); ++i) decreasing = decreasing && ma[i] < ma[i - 1];
  sink.line({{"type", "summary"},
             {"steps", cfg.train.steps},
             {"lr", cfg.train.lr},
             {"scenes", set.size()},
             {"initial_loss", r.losses.front()},
             {"final_loss", r.losses.back()},
             {"moving_average_window", window},
             {"moving_average_decreasing", decreasing},
             {"anchor_weight", {before.anchor_mean, after.anchor_mean}},
             {"far_weight", {before.far_mean, after.far_mean}},
             {"seconds", ms_since(t0) / 1000.0}});
  return 0;
}

int cmd_grad_check(const PipelineConfig& cfg) {
  SceneSpec spec = cfg.scene;
  const Scene s = gen_scene(spec);
  const TrainingExample ex = make_training_example(s, cfg, cfg.seed);
  Heads heads = Heads::make(s.features.dim(0), 4, cfg.train, cfg.seed);
  std::vector<Param*> params = heads.sampler.params();
  for (Param* p : heads.coord.params()) params.push_back(p);
  GradCheckOptions opts;
  opts.seed = cfg.seed;
  const GradCheckResult r =
      finite_diff_grad_check([&](Tape& t) { return vff_loss(t, ex, heads, cfg); }, params, opts);
  const bool pass = r.max_rel_error < kGradTolerance;
  std::cout << json{{"type", "summary"},
                    {"max_rel_error", r.max_rel_error},
                    {"coords_checked", r.coords_checked},
                    {"tolerance", kGradTolerance},
                    {"pass", pass}}
                   .dump()
            << '\n';
  return pass ? 0 : 1;
}

// KITTI-sized camera over a 70 x 80 x 4 m grid of n^3 voxels.
int cmd_bench(const PipelineConfig& cfg, int n, const std::vector<std::size_t>& counts, int repeats) {
  if (n < 1 || repeats < 1 || counts.empty()) throw std::invalid_argument("bench needs a grid, ray counts and repeats");
  GridSpec g;
  g.dims = {n, n, n};
  g.origin = {0.0, -40.0, -3.0};
  g.voxel_size = Eigen::Vector3d(70.4, 80.0, 4.0) / n;
  const ImageGeometry image{375, 1242, 4};
  const KittiCalib calib = make_pinhole_calib({721.5, 721.5, 609.6, 172.9}, {0.0, -0.08, -0.27});
  const ProjectionTransform vt = compose_projection(g, calib, {}, image);
  std::mt19937_64 rng(cfg.seed);
  std::uniform_int_distribution<int> u(0, image.feature_width() - 1), v(0, image.feature_height() - 1);

  std::printf("%8s %12s %12s %14s\n", "rays", "median ms", "us/ray", "voxels");
  std::vector<double> xs, ys;
  for (std::size_t count : counts) {
    std::vector<FeatureCell> pixels(count);
    for (auto& p : pixels) p = {u(rng), v(rng)};
    std::vector<double> times;
    std::size_t voxels = 0;
    for (int r = 0; r < repeats; ++r) {
      const auto t0 = std::chrono::steady_clock::now();
      const std::vector<Ray> rays = construct_rays(vt, g, pixels, cfg.threads);
      times.push_back(ms_since(t0));
      voxels = 0;
      for (const Ray& ray : rays) voxels += ray.size();
    }
    std::nth_element(times.begin(), times.begin() + times.size() / 2, times.end());
    const double med = times[times.size() / 2];
    std::printf("%8zu %12.3f %12.3f %14zu\n", count, med, 1000.0 * med / count, voxels);
    xs.push_back(static_cast<double>(count));
    ys.push_back(med);
  }
  // Least-squares line through (rays, ms) and its coefficient of determination.
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / xs.size();
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / ys.size();
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  const double slope = sxx > 0 ? sxy / sxx : 0.0;
  const double r2 = sxx > 0 && syy > 0 ? sxy * sxy / (sxx * syy) : 1.0;
  std::printf("grid %d^3, slope %.4f ms/ray, R^2 %.4f\n", n, slope, r2);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app("Voxel field fusion toolkit: synthetic scenes, rays, fusion, training and benchmarks.");
  app.require_subcommand(1);
  app.fallthrough();
  app.failure_message(CLI::FailureMessage::help);

  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  app.add_option("--config", config_path, "INI file with [grid] [camera] [scene] [augment] [sampler] [fusion] [train] [run]")
      ->check(CLI::ExistingFile);
  app.add_option("--set", overrides, "Override as section.key=value (repeatable)");
  app.add_option("--seed", seed, "Run seed (sampler, heads, correspondences)");
  app.add_option("--threads", threads, "Worker threads");

  std::string out;
  auto* gen = app.add_subcommand("gen-scene", "Generate a synthetic scene");
  std::optional<std::uint64_t> scene_seed;
  gen->add_option("--scene-seed", scene_seed, "Scene seed");
  gen->add_option("--out", out, "Directory for points.bin, calib.txt and scene.json");

  auto* proj = app.add_subcommand("project", "Project grid voxels or a point cloud");
  std::string points_path;
  proj->add_option("--points", points_path, "KITTI .bin point cloud")->check(CLI::ExistingFile);
  proj->add_option("--report", out, "Output file (default stdout)");

  auto* sample = app.add_subcommand("sample", "Sample pixels that seed rays");
  std::optional<std::string> sample_mode;
  std::optional<std::size_t> sample_n;
  sample->add_option("--mode", sample_mode, "uniformity, density, sparsity or importance");
  sample->add_option("--n", sample_n, "Number of pixels");
  sample->add_option("--report", out, "Output file (default stdout)");

  auto* rays = app.add_subcommand("rays", "Construct rays for sampled pixels");
  bool verify = false;
  rays->add_flag("--verify", verify, "Compare every ray with the exhaustive oracle");
  rays->add_option("--report", out, "Output file (default stdout)");

  auto* fuse = app.add_subcommand("fuse", "Run one fusion pass and write a report");
  std::optional<std::string> fuse_mode;
  std::optional<double> radius;
  fuse->add_option("--mode", fuse_mode, "single, local_aggregate, local_propagate or ray_wise");
  fuse->add_option("--radius", radius, "Gaussian ball radius in voxels");
  fuse->add_option("--report", out, "Output file (default stdout)");

  auto* train = app.add_subcommand("train", "Train the sampler head and coordinate MLP");
  std::optional<std::size_t> steps;
  std::optional<double> lr;
  train->add_option("--steps", steps, "Gradient steps");
  train->add_option("--lr", lr, "Learning rate");
  train->add_option("--report", out, "Output file (default stdout)");

  auto* grad = app.add_subcommand("grad-check", "Finite-difference check of the full loss; exit 0 iff below 1e-4");

  auto* bench = app.add_subcommand("bench", "Time ray construction against ray count");
  int bench_grid = 128, repeats = 3;
  std::vector<std::size_t> bench_rays = {512, 1024, 2048, 4096};
  bench->add_option("--grid", bench_grid, "Voxels per axis")->capture_default_str();
  bench->add_option("--rays", bench_rays, "Comma-separated ray counts")->delimiter(',')->capture_default_str();
  bench->add_option("--repeats", repeats, "Runs per count; the median is reported")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    PipelineConfig cfg = config_path.empty() ? PipelineConfig{} : load_config(config_path);
    for (const std::string& o : overrides) apply_override(cfg, o);
    if (seed) cfg.seed = *seed;
    if (threads) cfg.threads = *threads;
    if (scene_seed) cfg.scene.seed = *scene_seed;
    if (sample_mode) cfg.sampler.mode = parse_sampler_choice(*sample_mode);
    if (sample_n) cfg.sampler.n = *sample_n;
    if (fuse_mode) cfg.fusion.mode = parse_fusion_mode(*fuse_mode);
    if (radius) cfg.fusion.radius = *radius;
    if (steps) cfg.train.steps = *steps;
    if (lr) cfg.train.lr = *lr;
    cfg.validate();

    if (*gen) return cmd_gen_scene(cfg, out);
    if (*bench) return cmd_bench(cfg, bench_grid, bench_rays, repeats);
    if (*grad) return cmd_grad_check(cfg);
    Sink sink(out);
    if (*proj) return cmd_project(cfg, points_path, sink);
    if (*sample) return cmd_sample(cfg, sink);
    if (*rays) return cmd_rays(cfg, verify, sink);
    if (*fuse) return cmd_fuse(cfg, sink);
    if (*train) return cmd_train(cfg, sink);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
