#include "gramdyn/point_cloud.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

#include "gramdyn/error.hpp"

namespace gramdyn {

void PointCloud::resize(std::size_t n) {
  positions.resize(static_cast<Eigen::Index>(n), 3);
  colors.resize(static_cast<Eigen::Index>(n), 3);
  dynamic_flag.assign(n, 0);
  source.assign(n, PixelSource{});
}

PointCloud PointCloud::subset(const std::vector<std::size_t>& indices) const {
  PointCloud out;
  out.resize(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto j = static_cast<Eigen::Index>(indices[i]);
    out.positions.row(static_cast<Eigen::Index>(i)) = positions.row(j);
    out.colors.row(static_cast<Eigen::Index>(i)) = colors.row(j);
    out.dynamic_flag[i] = dynamic_flag[indices[i]];
    out.source[i] = source[indices[i]];
  }
  return out;
}

void PointCloud::validate() const {
  const auto n = size();
  if (static_cast<std::size_t>(colors.rows()) != n || dynamic_flag.size() != n ||
      source.size() != n) {
    throw ValidationError("point cloud attribute arrays disagree in length");
  }
  if (!positions.allFinite()) throw ValidationError("point cloud has non-finite positions");
}

PlyMode parse_ply_mode(const std::string& name) {
  if (name == "merged") return PlyMode::Merged;
  if (name == "static-only") return PlyMode::StaticOnly;
  if (name == "dynamic-only") return PlyMode::DynamicOnly;
  throw ValidationError("unknown PLY mode '" + name + "' (merged|static-only|dynamic-only)");
}

const char* ply_mode_name(PlyMode mode) {
  switch (mode) {
    case PlyMode::Merged: return "merged";
    case PlyMode::StaticOnly: return "static-only";
    case PlyMode::DynamicOnly: return "dynamic-only";
  }
  return "merged";
}

namespace {

bool keep(PlyMode mode, std::uint8_t flag) {
  return mode == PlyMode::Merged || (mode == PlyMode::DynamicOnly) == (flag != 0);
}

std::uint8_t to_byte(float v) {
  const float clamped = std::fmin(1.0f, std::fmax(0.0f, v));
  return static_cast<std::uint8_t>(std::lround(clamped * 255.0f));
}

}  // namespace

std::size_t export_ply(const PointCloud& pc, const std::filesystem::path& path, PlyMode mode) {
  pc.validate();
  std::size_t count = 0;
  for (auto flag : pc.dynamic_flag) count += keep(mode, flag) ? 1 : 0;

  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "ply\nformat binary_little_endian 1.0\n"
      << "element vertex " << count << '\n'
      << "property float x\nproperty float y\nproperty float z\n"
      << "property uchar red\nproperty uchar green\nproperty uchar blue\n"
      << "property uchar dynamic\nend_header\n";

  char record[16];
  for (std::size_t i = 0; i < pc.size(); ++i) {
    if (!keep(mode, pc.dynamic_flag[i])) continue;
    const auto r = static_cast<Eigen::Index>(i);
    for (int a = 0; a < 3; ++a) {
      const auto v = static_cast<float>(pc.positions(r, a));
      std::memcpy(record + 4 * a, &v, 4);
    }
    for (int a = 0; a < 3; ++a) record[12 + a] = static_cast<char>(to_byte(pc.colors(r, a)));
    record[15] = static_cast<char>(pc.dynamic_flag[i] ? 1 : 0);
    out.write(record, sizeof record);
  }
  if (!out) throw IoError("write failed on " + path.string());
  return count;
}

PointCloud read_ply(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFound("PLY not found: " + path.string());
  std::string line;
  std::size_t count = 0;
  std::vector<std::string> properties;
  bool binary_le = false;
  while (std::getline(in, line)) {
    std::istringstream words(line);
    std::string word;
    words >> word;
    if (word == "format") {
      std::string kind;
      words >> kind;
      binary_le = kind == "binary_little_endian";
    } else if (word == "element") {
      std::string name;
      words >> name >> count;
      if (name != "vertex") throw FormatError("unexpected PLY element '" + name + "'");
    } else if (word == "property") {
      std::string type, name;
      words >> type >> name;
      properties.push_back(type + " " + name);
    } else if (word == "end_header") {
      break;
    }
  }
  const std::vector<std::string> expected = {"float x",   "float y",     "float z",
                                             "uchar red", "uchar green", "uchar blue",
                                             "uchar dynamic"};
  if (!binary_le || properties != expected) {
    throw FormatError(path.string() + ": unsupported PLY layout");
  }
  PointCloud pc;
  pc.resize(count);
  char record[16];
  for (std::size_t i = 0; i < count; ++i) {
    if (!in.read(record, sizeof record)) throw FormatError(path.string() + ": truncated PLY");
    const auto r = static_cast<Eigen::Index>(i);
    for (int a = 0; a < 3; ++a) {
      float v;
      std::memcpy(&v, record + 4 * a, 4);
      pc.positions(r, a) = v;
      pc.colors(r, a) = static_cast<float>(static_cast<std::uint8_t>(record[12 + a])) / 255.0f;
    }
    pc.dynamic_flag[i] = static_cast<std::uint8_t>(record[15]);
  }
  return pc;
}

}  // namespace gramdyn
