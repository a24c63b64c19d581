#include "vff/geometry/calib.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <stdexcept>

namespace vff {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<double> parse_values(std::string_view key, std::string_view rest) {
  std::vector<double> out;
  std::size_t pos = 0;
  while (true) {
    pos = rest.find_first_not_of(" \t\r", pos);
    if (pos == std::string_view::npos) break;
    const std::size_t end = std::min(rest.find_first_of(" \t\r", pos), rest.size());
    const std::string_view tok = rest.substr(pos, end - pos);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || ptr != tok.data() + tok.size() || !std::isfinite(v)) {
      throw std::runtime_error("malformed number '" + std::string(tok) + "' for " + std::string(key));
    }
    out.push_back(v);
    pos = end;
  }
  return out;
}

const std::vector<double>& require_key(const std::map<std::string, std::vector<double>, std::less<>>& entries,
                                       const std::string& key, std::size_t count) {
  const auto it = entries.find(key);
  if (it == entries.end()) throw std::runtime_error("missing " + key);
  if (it->second.size() != count) {
    throw std::runtime_error(key + " expects " + std::to_string(count) + " values, got " + std::to_string(it->second.size()));
  }
  return it->second;
}

template <int Rows, int Cols>
Eigen::Matrix<double, Rows, Cols> row_major(const std::vector<double>& v) {
  Eigen::Matrix<double, Rows, Cols> m;
  for (int r = 0; r < Rows; ++r)
    for (int c = 0; c < Cols; ++c) m(r, c) = v[static_cast<std::size_t>(r * Cols + c)];
  return m;
}

template <typename M>
void write_row_major(std::ostream& os, const char* key, const M& m) {
  os << key << ':';
  for (int r = 0; r < m.rows(); ++r)
    for (int c = 0; c < m.cols(); ++c) os << ' ' << m(r, c);
  os << '\n';
}

}  // namespace

Mat34 KittiCalib::lidar_to_image() const {
  Eigen::Matrix4d rect = Eigen::Matrix4d::Identity();
  rect.topLeftCorner<3, 3>() = R0_rect;
  Eigen::Matrix4d velo = Eigen::Matrix4d::Identity();
  velo.topRows<3>() = Tr_velo_to_cam;
  return P2 * rect * velo;
}

KittiCalib make_pinhole_calib(const PinholeIntrinsics& k, const Eigen::Vector3d& translation) {
  KittiCalib c;
  c.P2 << k.fx, 0, k.cx, 0, 0, k.fy, k.cy, 0, 0, 0, 1, 0;
  c.R0_rect.setIdentity();
  c.Tr_velo_to_cam << 0, -1, 0, translation.x(), 0, 0, -1, translation.y(), 1, 0, 0, translation.z();
  return c;
}

KittiCalib parse_kitti_calib(std::string_view text) {
  std::map<std::string, std::vector<double>, std::less<>> entries;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t nl = std::min(text.find('\n', start), text.size());
    const std::string_view line = trim(text.substr(start, nl - start));
    start = nl + 1;
    if (line.empty()) continue;
    const std::size_t colon = line.find(':');
    if (colon == std::string_view::npos) throw std::runtime_error("calibration line without ':' separator");
    const std::string key(trim(line.substr(0, colon)));
    if (key != "P2" && key != "R0_rect" && key != "Tr_velo_to_cam") continue;
    entries[key] = parse_values(key, line.substr(colon + 1));
  }
  KittiCalib calib;
  calib.P2 = row_major<3, 4>(require_key(entries, "P2", 12));
  calib.R0_rect = row_major<3, 3>(require_key(entries, "R0_rect", 9));
  calib.Tr_velo_to_cam = row_major<3, 4>(require_key(entries, "Tr_velo_to_cam", 12));
  return calib;
}

std::string format_kitti_calib(const KittiCalib& calib) {
  std::ostringstream os;
  os << std::setprecision(17);
  write_row_major(os, "P2", calib.P2);
  write_row_major(os, "R0_rect", calib.R0_rect);
  write_row_major(os, "Tr_velo_to_cam", calib.Tr_velo_to_cam);
  return os.str();
}

KittiCalib load_kitti_calib(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open calibration file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_kitti_calib(ss.str());
}

namespace {

static_assert(sizeof(float) == 4);

std::uint32_t to_little_endian(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big) return __builtin_bswap32(v);
  return v;
}

}  // namespace

PointCloud read_kitti_bin(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open point file " + path.string());
  const std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() % 16 != 0) {
    throw std::runtime_error("point file " + path.string() + " is not a whole number of float32 quadruples");
  }
  PointCloud cloud;
  cloud.points.reserve(bytes.size() / 16);
  for (std::size_t off = 0; off < bytes.size(); off += 16) {
    float f[4];
    for (int k = 0; k < 4; ++k) {
      std::uint32_t raw;
      std::memcpy(&raw, bytes.data() + off + 4 * k, 4);
      f[k] = std::bit_cast<float>(to_little_endian(raw));
    }
    cloud.points.push_back({f[0], f[1], f[2], f[3]});
  }
  return cloud;
}

void write_kitti_bin(const std::filesystem::path& path, const PointCloud& cloud) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write point file " + path.string());
  for (const LidarPoint& p : cloud.points) {
    const float f[4] = {static_cast<float>(p.x), static_cast<float>(p.y), static_cast<float>(p.z),
                        static_cast<float>(p.intensity)};
    for (float v : f) {
      const std::uint32_t raw = to_little_endian(std::bit_cast<std::uint32_t>(v));
      out.write(reinterpret_cast<const char*>(&raw), 4);
    }
  }
}

}  // namespace vff
