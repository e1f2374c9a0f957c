#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gramdyn/eigen_types.hpp"

namespace gramdyn {

/// Pixel a point was unprojected from.
struct PixelSource {
  std::int32_t frame = -1;
  std::int32_t row = -1;
  std::int32_t col = -1;

  bool operator==(const PixelSource&) const = default;
};

/// Attributed point set. All members have one entry (row) per point.
struct PointCloud {
  Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor> positions;
  Eigen::Matrix<float, Eigen::Dynamic, 3, Eigen::RowMajor> colors;
  std::vector<std::uint8_t> dynamic_flag;
  std::vector<PixelSource> source;

  std::size_t size() const { return static_cast<std::size_t>(positions.rows()); }
  bool empty() const { return size() == 0; }

  void resize(std::size_t n);
  /// Copies the listed rows into a new cloud, preserving order.
  PointCloud subset(const std::vector<std::size_t>& indices) const;
  /// Throws ValidationError on inconsistent sizes or non-finite positions.
  void validate() const;
};

enum class PlyMode { Merged, StaticOnly, DynamicOnly };

PlyMode parse_ply_mode(const std::string& name);
const char* ply_mode_name(PlyMode mode);

/// Binary little-endian PLY: x, y, z float32; red, green, blue uchar;
/// dynamic uchar. `mode` filters points by their dynamic flag.
/// Returns the number of vertices written.
std::size_t export_ply(const PointCloud& pc, const std::filesystem::path& path,
                       PlyMode mode = PlyMode::Merged);

/// Reads the PLY layout written by export_ply (sources are not stored).
PointCloud read_ply(const std::filesystem::path& path);

}  // namespace gramdyn
