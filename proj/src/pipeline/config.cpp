#include "vff/pipeline/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <cstdio>
#include <functional>
#include <stdexcept>

namespace vff {

namespace {

double to_double(const std::string& key, const std::string& text) {
  double v = 0.0;
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || end != text.data() + text.size()) {
    throw std::invalid_argument("malformed number '" + text + "' for " + key);
  }
  return v;
}

std::uint64_t to_uint(const std::string& key, const std::string& text) {
  std::uint64_t v = 0;
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || end != text.data() + text.size()) {
    throw std::invalid_argument("malformed integer '" + text + "' for " + key);
  }
  return v;
}

bool to_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  throw std::invalid_argument("malformed flag '" + text + "' for " + key);
}

Eigen::Vector3d to_vec3(const std::string& key, const std::string& text) {
  Eigen::Vector3d v;
  std::size_t start = 0;
  for (int i = 0; i < 3; ++i) {
    const std::size_t comma = text.find(',', start);
    if ((i < 2) == (comma == std::string::npos)) throw std::invalid_argument(key + " expects three comma-separated values");
    std::string part = text.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    part.erase(0, part.find_first_not_of(' '));
    part.erase(part.find_last_not_of(' ') + 1);
    v[i] = to_double(key, part);
    start = comma + 1;
  }
  return v;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string vec3(const Eigen::Vector3d& v) { return num(v.x()) + "," + num(v.y()) + "," + num(v.z()); }

Eigen::Vector3d grid_extent(const GridSpec& g) {
  return g.voxel_size.cwiseProduct(Eigen::Vector3d(g.dims[0], g.dims[1], g.dims[2]));
}

struct Entry {
  const char* key;
  std::function<void(PipelineConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const PipelineConfig&)> get;
};

#define VFF_DOUBLE(name, field) \
  Entry { name, [](PipelineConfig& c, const std::string& k, const std::string& v) { c.field = to_double(k, v); }, \
          [](const PipelineConfig& c) { return num(c.field); } }
#define VFF_UINT(name, field, type)                                                                                 \
  Entry {                                                                                                          \
    name, [](PipelineConfig& c, const std::string& k, const std::string& v) { c.field = static_cast<type>(to_uint(k, v)); }, \
        [](const PipelineConfig& c) { return std::to_string(c.field); }                                           \
  }
#define VFF_BOOL(name, field) \
  Entry { name, [](PipelineConfig& c, const std::string& k, const std::string& v) { c.field = to_bool(k, v); }, \
          [](const PipelineConfig& c) { return std::string(c.field ? "true" : "false"); } }

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = {
      {"grid.n",
       [](PipelineConfig& c, const std::string& k, const std::string& v) {
         const Eigen::Vector3d ext = grid_extent(c.scene.grid);
         const int n = static_cast<int>(to_uint(k, v));
         if (n < 1) throw std::invalid_argument("grid.n must be >= 1");
         c.scene.grid.dims = {n, n, n};
         c.scene.grid.voxel_size = ext / n;
       },
       [](const PipelineConfig& c) { return std::to_string(c.scene.grid.dims[0]); }},
      {"grid.origin", [](PipelineConfig& c, const std::string& k, const std::string& v) { c.scene.grid.origin = to_vec3(k, v); },
       [](const PipelineConfig& c) { return vec3(c.scene.grid.origin); }},
      {"grid.extent",
       [](PipelineConfig& c, const std::string& k, const std::string& v) {
         const GridSpec& g = c.scene.grid;
         c.scene.grid.voxel_size = to_vec3(k, v).cwiseQuotient(Eigen::Vector3d(g.dims[0], g.dims[1], g.dims[2]));
       },
       [](const PipelineConfig& c) { return vec3(grid_extent(c.scene.grid)); }},
      VFF_DOUBLE("camera.fx", scene.intrinsics.fx),
      VFF_DOUBLE("camera.fy", scene.intrinsics.fy),
      VFF_DOUBLE("camera.cx", scene.intrinsics.cx),
      VFF_DOUBLE("camera.cy", scene.intrinsics.cy),
      VFF_UINT("camera.width", scene.image.width, int),
      VFF_UINT("camera.height", scene.image.height, int),
      VFF_UINT("camera.stride", scene.image.stride, int),
      {"camera.calib",
       [](PipelineConfig& c, const std::string&, const std::string& v) {
         if (v.empty()) {
           c.scene.calib.reset();
         } else {
           c.scene.calib = load_kitti_calib(v);
         }
       },
       [](const PipelineConfig& c) { return std::string(c.scene.calib ? "<loaded>" : ""); }},
      VFF_UINT("scene.objects", scene.objects, std::size_t),
      VFF_UINT("scene.points", scene.points_per_object, std::size_t),
      VFF_UINT("scene.ground_points", scene.ground_points, std::size_t),
      VFF_UINT("scene.channels", scene.channels, std::size_t),
      {"scene.source",
       [](PipelineConfig& c, const std::string&, const std::string& v) { c.scene.source = parse_feature_source(v); },
       [](const PipelineConfig& c) { return to_string(c.scene.source); }},
      VFF_UINT("scene.seed", scene.seed, std::uint64_t),
      VFF_BOOL("augment.flip", augment.flip),
      VFF_DOUBLE("augment.rescale", augment.rescale),
      VFF_DOUBLE("augment.rotate", augment.rotate),
      {"augment.align",
       [](PipelineConfig& c, const std::string& k, const std::string& v) {
         if (v == "image_ops") {
           c.augment.mode = AlignMode::ImageOps;
         } else if (v == "reproject") {
           c.augment.mode = AlignMode::Reproject;
         } else {
           throw std::invalid_argument("unknown value '" + v + "' for " + k);
         }
       },
       [](const PipelineConfig& c) {
         return std::string(c.augment.mode == AlignMode::ImageOps ? "image_ops" : "reproject");
       }},
      {"sampler.mode",
       [](PipelineConfig& c, const std::string&, const std::string& v) { c.sampler.mode = parse_sampler_choice(v); },
       [](const PipelineConfig& c) { return to_string(c.sampler.mode); }},
      VFF_UINT("sampler.n", sampler.n, std::size_t),
      VFF_UINT("sampler.window", sampler.window, int),
      VFF_DOUBLE("sampler.threshold", sampler.threshold),
      VFF_DOUBLE("sampler.lambda_s", sampler.lambda_s),
      {"fusion.mode",
       [](PipelineConfig& c, const std::string&, const std::string& v) { c.fusion.mode = parse_fusion_mode(v); },
       [](const PipelineConfig& c) { return to_string(c.fusion.mode); }},
      VFF_DOUBLE("fusion.radius", fusion.radius),
      VFF_DOUBLE("fusion.lambda_r", fusion.lambda_r),
      VFF_DOUBLE("fusion.top_fraction", fusion.top_fraction),
      VFF_DOUBLE("fusion.infer_threshold", fusion.infer_threshold),
      VFF_DOUBLE("fusion.gamma", fusion.focal.gamma),
      VFF_DOUBLE("fusion.alpha", fusion.focal.alpha),
      VFF_BOOL("fusion.inference", inference),
      VFF_UINT("train.steps", train.steps, std::size_t),
      VFF_DOUBLE("train.lr", train.lr),
      VFF_UINT("train.scenes", train.scenes, std::size_t),
      VFF_UINT("train.rays_per_scene", train.rays_per_scene, std::size_t),
      VFF_UINT("train.head_hidden", train.head_hidden, std::size_t),
      VFF_UINT("train.mlp_hidden", train.mlp_hidden, std::size_t),
      VFF_UINT("run.seed", seed, std::uint64_t),
      VFF_UINT("run.threads", threads, unsigned),
  };
  return table;
}

#undef VFF_DOUBLE
#undef VFF_UINT
#undef VFF_BOOL

}  // namespace

SamplerChoice parse_sampler_choice(const std::string& name) {
  if (name == "uniformity") return SamplerChoice::Uniformity;
  if (name == "density") return SamplerChoice::Density;
  if (name == "sparsity") return SamplerChoice::Sparsity;
  if (name == "importance") return SamplerChoice::Importance;
  throw std::invalid_argument("unknown sampler mode '" + name + "'");
}

std::string to_string(SamplerChoice choice) {
  switch (choice) {
    case SamplerChoice::Uniformity: return "uniformity";
    case SamplerChoice::Density: return "density";
    case SamplerChoice::Sparsity: return "sparsity";
    case SamplerChoice::Importance: return "importance";
  }
  return "unknown";
}

void PipelineConfig::validate() const {
  scene.validate();
  fusion.validate();
  if (sampler.window < 1) throw std::invalid_argument("sampler window must be >= 1");
  if (!(sampler.threshold > 0.0 && sampler.threshold < 1.0)) {
    throw std::invalid_argument("sampler threshold must lie in (0,1)");
  }
  if (!(sampler.lambda_s >= 0.0)) throw std::invalid_argument("lambda_s must be >= 0");
  if (train.steps == 0) throw std::invalid_argument("training needs at least one step");
  if (!(train.lr >= 0.0)) throw std::invalid_argument("learning rate must be >= 0");
  if (train.scenes == 0 || train.rays_per_scene == 0) throw std::invalid_argument("training needs scenes and rays");
  if (train.head_hidden == 0 || train.mlp_hidden == 0) throw std::invalid_argument("hidden widths must be positive");
}

void apply_setting(PipelineConfig& cfg, const std::string& key, const std::string& value) {
  for (const Entry& e : entries()) {
    if (key == e.key) {
      e.set(cfg, key, value);
      return;
    }
  }
  throw std::invalid_argument("unknown config key '" + key + "'");
}

void apply_override(PipelineConfig& cfg, const std::string& assignment) {
  const std::size_t eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw std::invalid_argument("expected section.key=value, got '" + assignment + "'");
  apply_setting(cfg, assignment.substr(0, eq), assignment.substr(eq + 1));
}

PipelineConfig load_config(const std::filesystem::path& path, PipelineConfig base) {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(path.string(), tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw std::invalid_argument(e.what());
  }
  for (const auto& [section, body] : tree) {
    if (body.empty()) throw std::invalid_argument("config key '" + section + "' is outside a section");
    for (const auto& [key, value] : body) apply_setting(base, section + "." + key, value.data());
  }
  return base;
}

std::vector<std::pair<std::string, std::string>> config_entries(const PipelineConfig& cfg) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const Entry& e : entries()) out.emplace_back(e.key, e.get(cfg));
  return out;
}

}  // namespace vff
