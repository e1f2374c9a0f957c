#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "gramdyn/eigen_types.hpp"
#include "gramdyn/tensor.hpp"
#include "gramdyn/threshold.hpp"

namespace gramdyn {

enum class SuppressionMode { NegInfBias, ZeroKey };

SuppressionMode parse_suppression_mode(const std::string& name);
const char* suppression_mode_name(SuppressionMode mode);

/// Which keys to suppress, per (layer, frame, token).
struct KeySuppression {
  std::vector<int> layers;
  std::size_t frames = 0;
  std::size_t tokens = 0;
  std::vector<std::uint8_t> mask;  // [layer][frame][token], 1 = suppress
  SuppressionMode mode = SuppressionMode::NegInfBias;
  std::vector<std::pair<int, std::size_t>> skipped;  // fully masked (layer, frame)

  std::uint8_t at(std::size_t layer_index, std::size_t frame, std::size_t token) const {
    return mask[(layer_index * frames + frame) * tokens + token];
  }

  /// u8 blob of dims [L, F, Np].
  TensorBlob to_blob() const;
  /// Sidecar JSON naming layers, mode and skipped (layer, frame) pairs.
  std::string sidecar_json() const;

  bool operator==(const KeySuppression&) const = default;
};

inline const std::vector<int> kDefaultSuppressLayers = {1, 2, 3, 4, 5};

/// Replicates a patch-level mask over `layers` (sorted, deduplicated). A
/// (layer, frame) whose tokens would all be suppressed is left unsuppressed
/// and listed in `skipped`. Throws ValidationError for pixel-level masks or
/// an empty layer list.
KeySuppression build_key_suppression(const DynamicMask& mask, std::vector<int> layers,
                                     SuppressionMode mode = SuppressionMode::NegInfBias);

/// Writes `<stem>.vg4t` and `<stem>.json` next to each other.
void write_key_suppression(const KeySuppression& ks, const std::filesystem::path& blob_path);

/// softmax(Q K^T / sqrt(c)) V.
template <typename Scalar>
RowMatrix<Scalar> plain_attention(const RowMatrix<Scalar>& Q, const RowMatrix<Scalar>& K,
                                  const RowMatrix<Scalar>& V);

/// Attention with suppressed keys removed: -inf logit bias on their columns
/// (NegInfBias) or their key rows zeroed before the product (ZeroKey).
/// With nothing suppressed this takes the plain_attention path unchanged.
/// Throws SchemaError on shape mismatch and DegenerateAttention if every key
/// is suppressed.
template <typename Scalar>
RowMatrix<Scalar> masked_attention_reference(const RowMatrix<Scalar>& Q,
                                             const RowMatrix<Scalar>& K,
                                             const RowMatrix<Scalar>& V,
                                             std::span<const std::uint8_t> suppressed,
                                             SuppressionMode mode = SuppressionMode::NegInfBias);

/// Post-softmax attention weights (Nq x Nk) under the same semantics.
template <typename Scalar>
RowMatrix<Scalar> masked_attention_weights(const RowMatrix<Scalar>& Q,
                                           const RowMatrix<Scalar>& K,
                                           std::span<const std::uint8_t> suppressed,
                                           SuppressionMode mode = SuppressionMode::NegInfBias);

}  // namespace gramdyn
