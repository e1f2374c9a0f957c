#include "gramdyn/threshold.hpp"

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstdint>
#include <string>
#include <limits>

#include "gramdyn/error.hpp"
#include "gramdyn/frameset.hpp"
#include "gramdyn/log.hpp"
#include "gramdyn/parallel.hpp"
#include "gramdyn/random.hpp"
#include "gramdyn/saliency.hpp"

namespace gramdyn {

DynamicMask DynamicMask::zeros(MaskResolution resolution, std::size_t frames, std::size_t rows,
                               std::size_t cols) {
  DynamicMask m;
  m.resolution = resolution;
  m.frames = frames;
  m.rows = rows;
  m.cols = cols;
  m.values.assign(frames * rows * cols, 0);
  return m;
}

std::size_t DynamicMask::count() const {
  return static_cast<std::size_t>(std::count_if(values.begin(), values.end(),
                                                [](std::uint8_t v) { return v != 0; }));
}

TensorBlob DynamicMask::to_blob() const {
  if (resolution == MaskResolution::Patch) return TensorBlob::u8({frames, rows * cols}, values);
  return TensorBlob::u8({frames, rows, cols}, values);
}

DynamicMask DynamicMask::from_blob(const TensorBlob& blob, const FrameSetInfo& info) {
  const auto& dims = blob.dims();
  const auto bytes = blob.as_u8();
  DynamicMask m;
  if (dims.size() == 2 && dims[0] == info.frames && dims[1] == info.tokens()) {
    m = zeros(MaskResolution::Patch, info.frames, info.grid_rows(), info.grid_cols());
  } else if (dims.size() == 3 && dims[0] == info.frames && dims[1] == info.height &&
             dims[2] == info.width) {
    m = zeros(MaskResolution::Pixel, info.frames, info.height, info.width);
  } else {
    throw SchemaError("mask blob dims " + format_dims(dims) + " match neither [F, Np] = [" +
                      std::to_string(info.frames) + ", " + std::to_string(info.tokens()) +
                      "] nor [F, H, W]");
  }
  std::transform(bytes.begin(), bytes.end(), m.values.begin(),
                 [](std::uint8_t v) -> std::uint8_t { return v ? 1 : 0; });
  return m;
}

DynamicMask to_pixel_mask(const DynamicMask& mask, const FrameSetInfo& info) {
  if (mask.resolution == MaskResolution::Pixel) return mask;
  auto out = DynamicMask::zeros(MaskResolution::Pixel, mask.frames, info.height, info.width);
  out.alpha = mask.alpha;
  for (std::size_t f = 0; f < mask.frames; ++f) {
    for (std::size_t r = 0; r < info.height; ++r) {
      for (std::size_t c = 0; c < info.width; ++c) {
        out.at(f, r, c) = mask.at(f, r / info.patch, c / info.patch);
      }
    }
  }
  return out;
}

DynamicMask to_patch_mask(const DynamicMask& mask, const FrameSetInfo& info) {
  if (mask.resolution == MaskResolution::Patch) return mask;
  auto out =
      DynamicMask::zeros(MaskResolution::Patch, mask.frames, info.grid_rows(), info.grid_cols());
  out.alpha = mask.alpha;
  const std::size_t P = info.patch;
  for (std::size_t f = 0; f < mask.frames; ++f) {
    for (std::size_t gr = 0; gr < info.grid_rows(); ++gr) {
      for (std::size_t gc = 0; gc < info.grid_cols(); ++gc) {
        std::size_t votes = 0;
        for (std::size_t r = gr * P; r < (gr + 1) * P; ++r) {
          for (std::size_t c = gc * P; c < (gc + 1) * P; ++c) votes += mask.at(f, r, c);
        }
        out.at(f, gr, gc) = 2 * votes > P * P ? 1 : 0;
      }
    }
  }
  return out;
}

bool sample_mask(const DynamicMask& mask, const FrameSetInfo& info, std::size_t frame, double u,
                 double v) {
  const auto col = static_cast<long long>(std::lround(u));
  const auto row = static_cast<long long>(std::lround(v));
  if (col < 0 || row < 0 || col >= static_cast<long long>(info.width) ||
      row >= static_cast<long long>(info.height)) {
    return false;
  }
  if (mask.resolution == MaskResolution::Pixel) {
    return mask.at(frame, static_cast<std::size_t>(row), static_cast<std::size_t>(col)) != 0;
  }
  return mask.at(frame, static_cast<std::size_t>(row) / info.patch,
                 static_cast<std::size_t>(col) / info.patch) != 0;
}

ClusterAssignment kmeans_tokens(const Eigen::Ref<const RowMatrix<float>>& features, int k,
                                std::uint64_t seed, int max_iterations) {
  const auto n = static_cast<std::size_t>(features.rows());
  const auto dim = features.cols();
  if (k < 2) throw ValidationError("k-means needs k >= 2");
  if (static_cast<std::size_t>(k) > n) {
    throw ValidationError("k-means: k = " + std::to_string(k) + " exceeds token count " +
                          std::to_string(n));
  }
  const Eigen::MatrixXd points = features.cast<double>();
  SequentialRng rng(seed, /*stream=*/0x6b6d65616e73ULL);

  ClusterAssignment out;
  out.k = k;
  out.centroids.resize(k, dim);
  out.labels.assign(n, 0);

  // k-means++ seeding.
  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
  std::size_t pick = rng.below(n);
  for (int c = 0; c < k; ++c) {
    out.centroids.row(c) = points.row(static_cast<Eigen::Index>(pick));
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d =
          (points.row(static_cast<Eigen::Index>(i)) - out.centroids.row(c)).squaredNorm();
      nearest[i] = std::min(nearest[i], d);
      total += nearest[i];
    }
    if (c + 1 == k) break;
    if (total > 0.0) {
      double target = rng.uniform() * total;
      pick = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        target -= nearest[i];
        if (target < 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = rng.below(n);
    }
  }

  constexpr std::size_t kChunk = 4096;
  std::vector<double> assigned_distance(n, 0.0);
  std::vector<bool> reseeded(static_cast<std::size_t>(k), false);
  for (int iteration = 0; iteration < max_iterations; ++iteration) {
    std::vector<std::uint8_t> chunk_changed((n + kChunk - 1) / kChunk, 0);
    parallel_chunks(n, kChunk, [&](std::size_t chunk, std::size_t begin, std::size_t end) {
      for (std::size_t i = begin; i < end; ++i) {
        int best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (int c = 0; c < k; ++c) {
          const double d =
              (points.row(static_cast<Eigen::Index>(i)) - out.centroids.row(c)).squaredNorm();
          if (d < best_d) {
            best_d = d;
            best = c;
          }
        }
        if (best != out.labels[i] || iteration == 0) chunk_changed[chunk] = 1;
        out.labels[i] = best;
        assigned_distance[i] = best_d;
      }
    });
    const bool changed =
        std::any_of(chunk_changed.begin(), chunk_changed.end(), [](auto v) { return v != 0; });

    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, dim);
    std::vector<std::size_t> counts(static_cast<std::size_t>(k), 0);
    for (std::size_t i = 0; i < n; ++i) {
      sums.row(out.labels[i]) += points.row(static_cast<Eigen::Index>(i));
      ++counts[static_cast<std::size_t>(out.labels[i])];
    }
    bool reseed_happened = false;
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) {
        out.centroids.row(c) = sums.row(c) / static_cast<double>(counts[static_cast<std::size_t>(c)]);
      } else if (!reseeded[static_cast<std::size_t>(c)]) {
        reseeded[static_cast<std::size_t>(c)] = true;
        reseed_happened = true;
        const auto far = static_cast<std::size_t>(
            std::max_element(assigned_distance.begin(), assigned_distance.end()) -
            assigned_distance.begin());
        out.centroids.row(c) = points.row(static_cast<Eigen::Index>(far));
        assigned_distance[far] = 0.0;
      }
    }
    if (!changed && !reseed_happened && iteration > 0) break;
  }
  return out;
}

namespace {

__extension__ typedef unsigned __int128 u128;

/// 128 x 64 -> 192-bit product, compared lexicographically as (hi, lo).
struct Wide {
  std::uint64_t hi;
  u128 lo;
  auto operator<=>(const Wide&) const = default;
};

Wide multiply(u128 a, std::uint64_t b) {
  const u128 low = static_cast<u128>(static_cast<std::uint64_t>(a)) * b;
  const u128 high = static_cast<u128>(static_cast<std::uint64_t>(a >> 64)) * b;
  const u128 lo = low + (high << 64);
  const std::uint64_t carry = lo < low ? 1 : 0;
  return {static_cast<std::uint64_t>(high >> 64) + carry, lo};
}

}  // namespace

double otsu_threshold(std::span<const double> scores, int bins) {
  if (scores.size() < 2) throw ValidationError("otsu_threshold needs at least 2 scores");
  if (bins < 2 || bins > kOtsuMaxBins) {
    throw ValidationError("otsu_threshold needs 2 to " + std::to_string(kOtsuMaxBins) + " bins");
  }
  if (scores.size() >= kOtsuMaxScores) {
    throw ValidationError("otsu_threshold supports fewer than " + std::to_string(kOtsuMaxScores) +
                          " scores");
  }
  std::vector<std::int64_t> count(static_cast<std::size_t>(bins), 0);
  double max_score = 0.0;
  for (double s : scores) {
    if (!(s >= 0.0 && s <= 1.0)) {
      throw ValidationError("otsu_threshold: scores must lie in [0, 1]");
    }
    const auto bin = std::min(bins - 1, static_cast<int>(std::floor(s * bins)));
    ++count[static_cast<std::size_t>(bin)];
    max_score = std::max(max_score, s);
  }
  // Bin b sits at level (2b + 1) / (2 bins). With integer levels 2b + 1 the
  // between-class variance of a split is proportional to
  // (s0 n1 - s1 n0)^2 / (n0 n1), and candidates are compared by cross
  // multiplication, so ties are exact and resolve to the lowest edge.
  const auto total_count = static_cast<std::int64_t>(scores.size());
  std::int64_t total_sum = 0;
  for (int b = 0; b < bins; ++b) total_sum += count[static_cast<std::size_t>(b)] * (2 * b + 1);

  u128 best_sq = 0;
  std::uint64_t best_pairs = 1;
  int best_edge = -1;
  std::int64_t n0 = 0, s0 = 0;
  for (int edge = 1; edge < bins; ++edge) {
    const auto c = count[static_cast<std::size_t>(edge - 1)];
    n0 += c;
    s0 += c * (2 * edge - 1);
    const std::int64_t n1 = total_count - n0;
    if (n0 == 0 || n1 == 0) continue;
    const std::int64_t s1 = total_sum - s0;
    const std::int64_t diff = s0 * n1 - s1 * n0;
    const auto mag = static_cast<u128>(diff < 0 ? -diff : diff);
    const u128 sq = mag * mag;
    const auto pairs = static_cast<std::uint64_t>(n0) * static_cast<std::uint64_t>(n1);
    if (multiply(sq, best_pairs) > multiply(best_sq, pairs)) {
      best_sq = sq;
      best_pairs = pairs;
      best_edge = edge;
    }
  }
  if (best_edge < 0) return std::min(1.0, max_score + kOtsuSentinelEpsilon);
  return static_cast<double>(best_edge) / bins;
}

std::vector<double> cluster_scores(const FrameMap& dyn, const ClusterAssignment& clusters) {
  const auto n = static_cast<std::size_t>(dyn.size());
  if (clusters.labels.size() != n) {
    throw SchemaError("cluster labels cover " + std::to_string(clusters.labels.size()) +
                      " tokens but dyn has " + std::to_string(n));
  }
  std::vector<double> sum(static_cast<std::size_t>(clusters.k), 0.0);
  std::vector<std::size_t> members(static_cast<std::size_t>(clusters.k), 0);
  for (std::size_t i = 0; i < n; ++i) {
    const int label = clusters.labels[i];
    if (label < 0 || label >= clusters.k) {
      throw ValidationError("cluster label " + std::to_string(label) + " out of range");
    }
    sum[static_cast<std::size_t>(label)] += dyn.data()[i];
    ++members[static_cast<std::size_t>(label)];
  }
  std::vector<double> out(sum.size(), std::numeric_limits<double>::quiet_NaN());
  for (std::size_t c = 0; c < sum.size(); ++c) {
    if (members[c] > 0) out[c] = sum[c] / static_cast<double>(members[c]);
  }
  return out;
}

DynamicMask binarize(const SaliencyMap& saliency, const ClusterAssignment& clusters,
                     const FrameSetInfo& info, const BinarizeOptions& options) {
  const auto& dyn = saliency.dyn;
  if (static_cast<std::size_t>(dyn.rows()) != info.frames ||
      static_cast<std::size_t>(dyn.cols()) != info.tokens()) {
    throw SchemaError("saliency map shape does not match the frame set");
  }
  auto mask =
      DynamicMask::zeros(MaskResolution::Patch, info.frames, info.grid_rows(), info.grid_cols());
  const double* values = dyn.data();
  const auto n = static_cast<std::size_t>(dyn.size());

  if (options.per_token) {
    const std::span<const double> all(values, n);
    mask.alpha = otsu_threshold(all, options.bins);
    for (std::size_t i = 0; i < n; ++i) mask.values[i] = values[i] > mask.alpha ? 1 : 0;
    return mask;
  }

  const auto scores = cluster_scores(dyn, clusters);
  std::vector<double> present;
  for (double s : scores) {
    if (!std::isnan(s)) present.push_back(s);
  }
  if (present.size() < 2) {
    mask.alpha = std::min(1.0, *std::max_element(present.begin(), present.end()) +
                                   kOtsuSentinelEpsilon);
  } else {
    mask.alpha = otsu_threshold(present, options.bins);
  }
  for (std::size_t i = 0; i < n; ++i) {
    const double s = scores[static_cast<std::size_t>(clusters.labels[i])];
    mask.values[i] = s > mask.alpha ? 1 : 0;
  }
  logger().debug("binarize: alpha = {:.6f}, {} of {} tokens dynamic", mask.alpha, mask.count(), n);
  return mask;
}

}  // namespace gramdyn
