#include "vff/augmentor/paste.hpp"

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numeric>
#include <optional>
#include <stdexcept>

#include "vff/geometry/projection.hpp"

namespace vff {

void SampledObject::validate() const {
  for (const LidarPoint& p : points.points) {
    if (!box3d.contains(p.xyz(), 1e-6)) throw std::invalid_argument("sampled object has a point outside its box");
  }
  if (crop.rank() != 3 || crop.dim(1) != static_cast<std::size_t>(rect.height()) ||
      crop.dim(2) != static_cast<std::size_t>(rect.width())) {
    throw std::invalid_argument("crop shape " + crop.shape_str() + " does not match its " +
                                std::to_string(rect.width()) + "x" + std::to_string(rect.height()) + " rect");
  }
}

SampledObject extract_object(const PointCloud& points, const Tensor& image, const Box3D& box, const Mat34& camera) {
  if (image.rank() != 3) throw std::invalid_argument("image must be [C,H,W]");
  const auto hull = project_box(camera, box);
  if (!hull) throw std::invalid_argument("object box is behind the camera");
  const int w = static_cast<int>(image.dim(2)), h = static_cast<int>(image.dim(1));
  SampledObject obj;
  obj.box3d = box;
  obj.rect = hull->cover().clipped(w, h);
  obj.depth = project_world(camera, box.center).depth;
  for (const LidarPoint& p : points.points)
    if (box.contains(p.xyz())) obj.points.points.push_back(p);
  const std::size_t channels = image.dim(0);
  obj.crop = Tensor({channels, static_cast<std::size_t>(obj.rect.height()), static_cast<std::size_t>(obj.rect.width())});
  for (std::size_t c = 0; c < channels; ++c)
    for (int y = obj.rect.y0; y < obj.rect.y1; ++y)
      for (int x = obj.rect.x0; x < obj.rect.x1; ++x)
        obj.crop.at(c, static_cast<std::size_t>(y - obj.rect.y0), static_cast<std::size_t>(x - obj.rect.x0)) =
            image.at(c, static_cast<std::size_t>(y), static_cast<std::size_t>(x));
  return obj;
}

PasteResult gt_sample_paste(const PointCloud& scene_points, const Tensor& scene_image,
                            const std::vector<SampledObject>& objects, const Mat34& camera) {
  if (scene_image.rank() != 3) throw std::invalid_argument("image must be [C,H,W]");
  const int w = static_cast<int>(scene_image.dim(2)), h = static_cast<int>(scene_image.dim(1));
  for (std::size_t i = 0; i < objects.size(); ++i) {
    objects[i].validate();
    if (objects[i].crop.dim(0) != scene_image.dim(0)) throw std::invalid_argument("crop channels differ from image");
    for (std::size_t j = 0; j < i; ++j) {
      if (boxes_collide_bev(objects[i].box3d, objects[j].box3d)) {
        throw std::invalid_argument("pasted objects " + std::to_string(j) + " and " + std::to_string(i) + " collide");
      }
    }
  }

  PasteResult out;
  out.z_order.resize(objects.size());
  std::iota(out.z_order.begin(), out.z_order.end(), std::size_t{0});
  std::stable_sort(out.z_order.begin(), out.z_order.end(),
                   [&](std::size_t a, std::size_t b) { return objects[a].depth > objects[b].depth; });

  out.image = scene_image;
  std::vector<PixelRect> clipped;
  for (const SampledObject& o : objects) clipped.push_back(o.rect.clipped(w, h));
  for (std::size_t i : out.z_order) {
    const SampledObject& o = objects[i];
    const PixelRect& r = clipped[i];
    for (std::size_t c = 0; c < o.crop.dim(0); ++c)
      for (int y = r.y0; y < r.y1; ++y)
        for (int x = r.x0; x < r.x1; ++x)
          out.image.at(c, static_cast<std::size_t>(y), static_cast<std::size_t>(x)) =
              o.crop.at(c, static_cast<std::size_t>(y - o.rect.y0), static_cast<std::size_t>(x - o.rect.x0));
  }

  const auto hidden = [&](const LidarPoint& p, std::optional<std::size_t> owner) {
    const ContinuousPixel px = project_world(camera, p.xyz());
    if (!(px.depth > 0.0)) return false;
    const double fx = std::floor(px.pixel.x()), fy = std::floor(px.pixel.y());
    if (fx < 0 || fy < 0 || fx >= w || fy >= h) return false;
    for (std::size_t j = 0; j < objects.size(); ++j) {
      if (owner && *owner == j) continue;
      if (objects[j].depth < px.depth && clipped[j].contains(static_cast<int>(fx), static_cast<int>(fy))) return true;
    }
    return false;
  };
  for (const LidarPoint& p : scene_points.points) {
    if (hidden(p, std::nullopt)) {
      ++out.removed;
    } else {
      out.points.points.push_back(p);
    }
  }
  for (std::size_t i = 0; i < objects.size(); ++i) {
    for (const LidarPoint& p : objects[i].points.points) {
      if (hidden(p, i)) {
        ++out.removed;
      } else {
        out.points.points.push_back(p);
      }
    }
  }
  return out;
}

namespace {

using nlohmann::json;

void write_u32(std::ofstream& out, std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big) v = __builtin_bswap32(v);
  out.write(reinterpret_cast<const char*>(&v), 4);
}

std::uint32_t read_u32(std::ifstream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), 4);
  if (!in) throw std::runtime_error("truncated crop file");
  if constexpr (std::endian::native == std::endian::big) v = __builtin_bswap32(v);
  return v;
}

void write_crop(const std::filesystem::path& path, const Tensor& crop) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write crop file " + path.string());
  for (std::size_t d : crop.shape()) write_u32(out, static_cast<std::uint32_t>(d));
  for (double v : crop.values()) write_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
}

Tensor read_crop(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open crop file " + path.string());
  std::vector<std::size_t> shape;
  for (int i = 0; i < 3; ++i) shape.push_back(read_u32(in));
  Tensor crop(shape);
  for (double& v : crop.data()) v = std::bit_cast<float>(read_u32(in));
  return crop;
}

json box_json(const Box3D& b) {
  return json::array({b.center.x(), b.center.y(), b.center.z(), b.size.x(), b.size.y(), b.size.z(), b.yaw});
}

Box3D box_from_json(const json& j) {
  if (!j.is_array() || j.size() != 7) throw std::runtime_error("box3d must hold 7 numbers");
  Box3D b;
  b.center = {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
  b.size = {j[3].get<double>(), j[4].get<double>(), j[5].get<double>()};
  b.yaw = j[6].get<double>();
  return b;
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return json::parse(in);
}

}  // namespace

void save_gt_database(const std::filesystem::path& dir, const std::vector<GtEntry>& entries) {
  std::filesystem::create_directories(dir);
  json index = json::array();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const GtEntry& e = entries[i];
    e.object.validate();
    const std::string stem = e.label + "_" + std::to_string(i);
    write_kitti_bin(dir / (stem + ".bin"), e.object.points);
    write_crop(dir / (stem + ".crop"), e.object.crop);
    const PixelRect& r = e.object.rect;
    const json meta = {{"box3d", box_json(e.object.box3d)},
                       {"rect", json::array({r.x0, r.y0, r.x1, r.y1})},
                       {"depth", e.object.depth}};
    std::ofstream(dir / (stem + ".json")) << meta.dump(2) << '\n';
    index.push_back({{"label", e.label}, {"points", stem + ".bin"}, {"meta", stem + ".json"}, {"crop", stem + ".crop"}});
  }
  std::ofstream out(dir / "index.json");
  if (!out) throw std::runtime_error("cannot write " + (dir / "index.json").string());
  out << index.dump(2) << '\n';
}

std::vector<GtEntry> load_gt_database(const std::filesystem::path& dir) {
  const json index = read_json(dir / "index.json");
  if (!index.is_array()) throw std::runtime_error("index.json must be an array");
  std::vector<GtEntry> entries;
  for (const json& item : index) {
    GtEntry e;
    e.label = item.at("label").get<std::string>();
    e.object.points = read_kitti_bin(dir / item.at("points").get<std::string>());
    e.object.crop = read_crop(dir / item.at("crop").get<std::string>());
    const json meta = read_json(dir / item.at("meta").get<std::string>());
    e.object.box3d = box_from_json(meta.at("box3d"));
    const json& r = meta.at("rect");
    e.object.rect = {r.at(0).get<int>(), r.at(1).get<int>(), r.at(2).get<int>(), r.at(3).get<int>()};
    e.object.depth = meta.at("depth").get<double>();
    e.object.validate();
    entries.push_back(std::move(e));
  }
  return entries;
}

}  // namespace vff
