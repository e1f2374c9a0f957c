#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "gramdyn/eigen_types.hpp"
#include "gramdyn/tensor.hpp"

namespace gramdyn {

struct FrameSetInfo;
struct SaliencyMap;

enum class MaskResolution { Patch, Pixel };

/// Binary per-frame mask on the token grid or the pixel grid.
struct DynamicMask {
  MaskResolution resolution = MaskResolution::Patch;
  std::size_t frames = 0;
  std::size_t rows = 0;  // grid rows (patch) or H (pixel)
  std::size_t cols = 0;  // grid cols (patch) or W (pixel)
  std::vector<std::uint8_t> values;  // frame-major, row-major, 1 = dynamic
  double alpha = 0.0;

  static DynamicMask zeros(MaskResolution resolution, std::size_t frames, std::size_t rows,
                           std::size_t cols);

  std::size_t frame_size() const { return rows * cols; }
  std::uint8_t at(std::size_t frame, std::size_t row, std::size_t col) const {
    return values[(frame * rows + row) * cols + col];
  }
  std::uint8_t& at(std::size_t frame, std::size_t row, std::size_t col) {
    return values[(frame * rows + row) * cols + col];
  }
  std::span<const std::uint8_t> frame(std::size_t f) const {
    return {values.data() + f * frame_size(), frame_size()};
  }
  std::size_t count() const;

  /// u8 blob, dims [F, Np] for patch masks and [F, H, W] for pixel masks.
  TensorBlob to_blob() const;
  /// Interprets a [F, Np] or [F, H, W] u8 blob against the frame-set geometry.
  static DynamicMask from_blob(const TensorBlob& blob, const FrameSetInfo& info);

  bool operator==(const DynamicMask&) const = default;
};

/// Nearest-patch upsampling of a patch mask to pixels (pixel masks pass through).
DynamicMask to_pixel_mask(const DynamicMask& mask, const FrameSetInfo& info);
/// Majority vote per patch (strictly more than half the pixels dynamic).
DynamicMask to_patch_mask(const DynamicMask& mask, const FrameSetInfo& info);
/// Nearest-neighbor lookup at continuous pixel coordinates (u = col, v = row).
bool sample_mask(const DynamicMask& mask, const FrameSetInfo& info, std::size_t frame, double u,
                 double v);

struct ClusterAssignment {
  std::vector<int> labels;    // one per token, frame-major
  Eigen::MatrixXd centroids;  // k x Cf
  int k = 0;
};

/// k-means++ seeding from a counter-based generator, then Lloyd iterations
/// until labels are stable or 100 rounds. An empty cluster is re-seeded once
/// at the point farthest from its centroid and may stay empty afterwards.
/// features: (F * Np) x Cf. Throws ValidationError if k < 2 or k > tokens.
ClusterAssignment kmeans_tokens(const Eigen::Ref<const RowMatrix<float>>& features, int k,
                                std::uint64_t seed, int max_iterations = 100);

inline constexpr int kOtsuBins = 256;
inline constexpr int kOtsuMaxBins = 4096;
inline constexpr std::size_t kOtsuMaxScores = std::size_t{1} << 25;

/// Otsu's threshold over a histogram of scores in [0, 1]. Returns the lowest
/// bin edge k / bins maximizing between-class variance (class 1 = scores at or
/// above the edge). When no edge separates the scores (all in one bin) the
/// sentinel min(1, max + 1e-6) is returned so that nothing exceeds it.
/// Ties are decided exactly. Throws ValidationError on fewer than 2 or more
/// than kOtsuMaxScores scores, bins outside [2, kOtsuMaxBins], or values
/// outside [0, 1].
double otsu_threshold(std::span<const double> scores, int bins = kOtsuBins);

inline constexpr double kOtsuSentinelEpsilon = 1e-6;

struct BinarizeOptions {
  bool per_token = false;  // threshold dyn directly instead of cluster means
  int bins = kOtsuBins;
};

/// Cluster-level thresholding: each cluster scores the mean dyn of its tokens
/// across all frames, alpha = Otsu over the non-empty cluster scores, and a
/// token is dynamic iff its cluster's score exceeds alpha.
DynamicMask binarize(const SaliencyMap& saliency, const ClusterAssignment& clusters,
                     const FrameSetInfo& info, const BinarizeOptions& options = {});

/// Mean dyn per cluster (NaN for empty clusters).
std::vector<double> cluster_scores(const FrameMap& dyn, const ClusterAssignment& clusters);

}  // namespace gramdyn
