#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "gramdyn/eigen_types.hpp"
#include "gramdyn/error.hpp"

namespace gramdyn {

class FrameSet;

/// Temporal window W(t) = {t +- k * stride : 1 <= k <= half_count}.
struct WindowSpec {
  int half_count = 3;
  int stride = 2;

  void validate() const;
  bool operator==(const WindowSpec&) const = default;
};

/// Which token tensors enter the Gram product: rows from the reference frame,
/// columns from the source frame. QK is the standard (pre-softmax) attention.
enum class StatKind { QQ, QK, KK };

const char* stat_kind_name(StatKind kind);
StatKind parse_stat_kind(const std::string& name);

struct LayerGroup {
  StatKind kind = StatKind::QQ;
  std::vector<int> layers;

  /// "4-8" style label built from the first and last layer id.
  std::string label() const;
  bool operator==(const LayerGroup&) const = default;
};

/// Windowed per-token mean and population variance of Gram row means.
struct GramStatMaps {
  FrameMap mean;      // S, F x Np
  FrameMap variance;  // V, F x Np, >= 0
  LayerGroup group;
  WindowSpec window;
};

struct GramOptions {
  // Channels are split into this many heads; each head's Gram uses its own
  // 1/sqrt(c / heads) scale and the head results are averaged. 1 = flattened.
  int heads = 1;
};

/// Scaled dot products: result(p, q) = dot(a.row(p), b.row(q)) / sqrt(channels).
/// No normalization or softmax. Throws SchemaError on shape mismatch.
template <typename DerivedA, typename DerivedB>
RowMatrix<typename DerivedA::Scalar> gram_similarity(const Eigen::MatrixBase<DerivedA>& a,
                                                     const Eigen::MatrixBase<DerivedB>& b,
                                                     Eigen::Index channels) {
  using Scalar = typename DerivedA::Scalar;
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw SchemaError("gram_similarity: operand shapes differ");
  }
  if (channels != a.cols()) {
    throw SchemaError("gram_similarity: channel count " + std::to_string(channels) +
                      " does not match operand width " + std::to_string(a.cols()));
  }
  const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(channels));
  RowMatrix<Scalar> out = (a * b.transpose()) * scale;
  return out;
}

/// Source frames for reference frame t, ascending, never containing t.
/// Falls back to the nearest other frame when the strided set is empty.
std::vector<std::size_t> window_indices(std::size_t t, const WindowSpec& window,
                                        std::size_t frame_count);

/// Streams over (t, s, layer) triples, reusing a single Np x Np Gram buffer;
/// accumulators are O(F * Np). Bitwise deterministic for any thread count.
/// Throws SchemaError if a layer of the group is missing.
GramStatMaps aggregate_stats(const FrameSet& fs, const LayerGroup& group,
                             const WindowSpec& window, const GramOptions& options = {});

/// Blob file names used for stage chaining: S_<kind>_<i>-<j>.vg4t.
std::string mean_blob_name(const LayerGroup& group);
std::string variance_blob_name(const LayerGroup& group);

}  // namespace gramdyn
