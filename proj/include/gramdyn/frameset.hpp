#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <vector>

#include "gramdyn/camera.hpp"
#include "gramdyn/eigen_types.hpp"
#include "gramdyn/tensor.hpp"

namespace gramdyn {

struct FrameSetInfo {
  std::size_t frames = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t patch = 1;
  std::size_t channels = 0;     // c, width of every Q/K token vector
  std::size_t feature_dim = 0;  // Cf, width of backbone feature vectors
  std::vector<int> layer_ids;

  std::size_t grid_rows() const { return height / patch; }
  std::size_t grid_cols() const { return width / patch; }
  std::size_t tokens() const { return grid_rows() * grid_cols(); }
  std::size_t pixels() const { return height * width; }

  bool operator==(const FrameSetInfo&) const = default;
};

/// Optional ground truth shipped alongside a frame set. Empty blobs mean
/// "not present".
struct GroundTruth {
  TensorBlob masks;         // u8 [F, H, W], 1 = dynamic
  TensorBlob trajectory;    // f32 [F, 3, 4], camera-to-world [R | center]
  TensorBlob points;        // f32 [N, 3], static scene points
  TensorBlob point_colors;  // f32 [N, 3]

  bool operator==(const GroundTruth&) const = default;
};

/// A validated multi-frame capture: images, depth, cameras, per-layer Q/K
/// token tensors and backbone features. Immutable once loaded.
class FrameSet {
 public:
  FrameSetInfo info;
  std::vector<Camera> cameras;
  TensorBlob images;    // f32 [F, H, W, 3] in [0, 1]
  TensorBlob depth;     // f32 [F, H, W], 0 = invalid
  TensorBlob features;  // f32 [F, Np, Cf]
  std::map<int, TensorBlob> queries;  // layer -> f32 [F, Np, c]
  std::map<int, TensorBlob> keys;     // layer -> f32 [F, Np, c]
  GroundTruth gt;

  /// Zero-filled frame set with identity cameras (fx = fy = 1).
  static FrameSet allocate(const FrameSetInfo& info);

  bool has_layer(int layer) const;
  TokenMap query(int layer, std::size_t frame) const;
  TokenMap key(int layer, std::size_t frame) const;
  TokenMap feature(std::size_t frame) const;
  DepthView depth_map(std::size_t frame) const;
  ColorView image(std::size_t frame) const;

  /// Checks every structural invariant; throws ValidationError or
  /// SchemaError naming the offending tensor.
  void validate() const;

  bool operator==(const FrameSet&) const = default;
};

/// Throws NotFound, SchemaError, FormatError, ValidationError.
FrameSet read_frameset(const std::filesystem::path& dir);

/// Writes manifest.json plus tensors/ and gt/ blobs. Files not owned by the
/// frame set are left untouched. Throws ValidationError, IoError.
void write_frameset(const FrameSet& fs, const std::filesystem::path& dir);

/// Relative blob path used for a layer's query or key tensor.
std::filesystem::path layer_blob_path(char which, int layer);

}  // namespace gramdyn
