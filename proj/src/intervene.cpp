#include "gramdyn/intervene.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <json.hpp>

#include "gramdyn/error.hpp"
#include "gramdyn/log.hpp"

namespace gramdyn {

SuppressionMode parse_suppression_mode(const std::string& name) {
  if (name == "neg-inf-bias") return SuppressionMode::NegInfBias;
  if (name == "zero-key") return SuppressionMode::ZeroKey;
  throw ValidationError("unknown suppression mode '" + name + "' (neg-inf-bias|zero-key)");
}

const char* suppression_mode_name(SuppressionMode mode) {
  return mode == SuppressionMode::ZeroKey ? "zero-key" : "neg-inf-bias";
}

TensorBlob KeySuppression::to_blob() const {
  return TensorBlob::u8({layers.size(), frames, tokens}, mask);
}

std::string KeySuppression::sidecar_json() const {
  nlohmann::json j;
  j["layers"] = layers;
  j["mode"] = suppression_mode_name(mode);
  j["dims"] = {layers.size(), frames, tokens};
  j["blob_layout"] = "u8 [layer, frame, token], 1 = suppress key";
  auto skipped_json = nlohmann::json::array();
  for (const auto& [layer, frame] : skipped) {
    skipped_json.push_back({{"layer", layer}, {"frame", frame}});
  }
  j["skipped"] = std::move(skipped_json);
  return j.dump(2) + "\n";
}

KeySuppression build_key_suppression(const DynamicMask& mask, std::vector<int> layers,
                                     SuppressionMode mode) {
  if (mask.resolution != MaskResolution::Patch) {
    throw ValidationError(
        "key suppression needs a patch-level mask; downsample pixel masks by majority vote first");
  }
  if (layers.empty()) throw ValidationError("key suppression needs at least one layer");
  std::sort(layers.begin(), layers.end());
  layers.erase(std::unique(layers.begin(), layers.end()), layers.end());

  KeySuppression ks;
  ks.layers = std::move(layers);
  ks.frames = mask.frames;
  ks.tokens = mask.frame_size();
  ks.mode = mode;
  ks.mask.assign(ks.layers.size() * ks.frames * ks.tokens, 0);
  for (std::size_t f = 0; f < ks.frames; ++f) {
    const auto frame = mask.frame(f);
    const bool full = std::all_of(frame.begin(), frame.end(), [](auto v) { return v != 0; });
    for (std::size_t li = 0; li < ks.layers.size(); ++li) {
      if (full) {
        ks.skipped.emplace_back(ks.layers[li], f);
        continue;
      }
      std::copy(frame.begin(), frame.end(),
                ks.mask.begin() + static_cast<std::ptrdiff_t>((li * ks.frames + f) * ks.tokens));
    }
    if (full) {
      logger().warn("frame {} is fully dynamic; its keys stay unsuppressed in every layer", f);
    }
  }
  return ks;
}

void write_key_suppression(const KeySuppression& ks, const std::filesystem::path& blob_path) {
  write_blob(ks.to_blob(), blob_path);
  auto sidecar = blob_path;
  sidecar.replace_extension(".json");
  std::ofstream out(sidecar, std::ios::binary | std::ios::trunc);
  out << ks.sidecar_json();
  if (!out) throw IoError("cannot write " + sidecar.string());
}

namespace {

template <typename Scalar>
void check_shapes(const RowMatrix<Scalar>& Q, const RowMatrix<Scalar>& K) {
  if (Q.cols() != K.cols()) {
    throw SchemaError("attention: query width " + std::to_string(Q.cols()) +
                      " differs from key width " + std::to_string(K.cols()));
  }
}

template <typename Scalar>
void softmax_rows(RowMatrix<Scalar>& logits) {
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    auto row = logits.row(r);
    const Scalar m = row.maxCoeff();
    // Vectorized exp clamps its argument, so -inf logits would come out as
    // denormals rather than 0.
    const auto minus_inf = -std::numeric_limits<Scalar>::infinity();
    row = (row.array() == minus_inf).select(Scalar(0), (row.array() - m).exp());
    row /= row.sum();
  }
}

template <typename Scalar>
RowMatrix<Scalar> plain_weights(const RowMatrix<Scalar>& Q, const RowMatrix<Scalar>& K) {
  check_shapes(Q, K);
  const Scalar scale = Scalar(1) / std::sqrt(Scalar(Q.cols()));
  RowMatrix<Scalar> logits = (Q * K.transpose()) * scale;
  softmax_rows(logits);
  return logits;
}

template <typename Scalar>
bool any_suppressed(const RowMatrix<Scalar>& K, std::span<const std::uint8_t> suppressed) {
  if (static_cast<Eigen::Index>(suppressed.size()) != K.rows()) {
    throw SchemaError("attention: suppression mask has " + std::to_string(suppressed.size()) +
                      " entries for " + std::to_string(K.rows()) + " keys");
  }
  const auto count = std::count_if(suppressed.begin(), suppressed.end(), [](auto v) { return v; });
  if (count == static_cast<std::ptrdiff_t>(suppressed.size()) && count > 0) {
    throw DegenerateAttention("every key is suppressed; leave this row unmasked");
  }
  return count > 0;
}

}  // namespace

template <typename Scalar>
RowMatrix<Scalar> plain_attention(const RowMatrix<Scalar>& Q, const RowMatrix<Scalar>& K,
                                  const RowMatrix<Scalar>& V) {
  if (K.rows() != V.rows()) throw SchemaError("attention: key and value counts differ");
  return plain_weights(Q, K) * V;
}

template <typename Scalar>
RowMatrix<Scalar> masked_attention_weights(const RowMatrix<Scalar>& Q, const RowMatrix<Scalar>& K,
                                           std::span<const std::uint8_t> suppressed,
                                           SuppressionMode mode) {
  check_shapes(Q, K);
  if (!any_suppressed(K, suppressed)) return plain_weights(Q, K);
  const Scalar scale = Scalar(1) / std::sqrt(Scalar(Q.cols()));
  if (mode == SuppressionMode::ZeroKey) {
    RowMatrix<Scalar> zeroed = K;
    for (Eigen::Index j = 0; j < K.rows(); ++j) {
      if (suppressed[static_cast<std::size_t>(j)]) zeroed.row(j).setZero();
    }
    return plain_weights(Q, zeroed);
  }
  RowMatrix<Scalar> logits = (Q * K.transpose()) * scale;
  for (Eigen::Index j = 0; j < K.rows(); ++j) {
    if (suppressed[static_cast<std::size_t>(j)]) {
      logits.col(j).setConstant(-std::numeric_limits<Scalar>::infinity());
    }
  }
  softmax_rows(logits);
  return logits;
}

template <typename Scalar>
RowMatrix<Scalar> masked_attention_reference(const RowMatrix<Scalar>& Q, const RowMatrix<Scalar>& K,
                                             const RowMatrix<Scalar>& V,
                                             std::span<const std::uint8_t> suppressed,
                                             SuppressionMode mode) {
  if (K.rows() != V.rows()) throw SchemaError("attention: key and value counts differ");
  check_shapes(Q, K);
  if (!any_suppressed(K, suppressed)) return plain_attention(Q, K, V);
  return masked_attention_weights(Q, K, suppressed, mode) * V;
}

#define GRAMDYN_INSTANTIATE(Scalar)                                                           \
  template RowMatrix<Scalar> plain_attention(const RowMatrix<Scalar>&, const RowMatrix<Scalar>&, \
                                             const RowMatrix<Scalar>&);                        \
  template RowMatrix<Scalar> masked_attention_weights(                                         \
      const RowMatrix<Scalar>&, const RowMatrix<Scalar>&, std::span<const std::uint8_t>,       \
      SuppressionMode);                                                                        \
  template RowMatrix<Scalar> masked_attention_reference(                                       \
      const RowMatrix<Scalar>&, const RowMatrix<Scalar>&, const RowMatrix<Scalar>&,            \
      std::span<const std::uint8_t>, SuppressionMode);

GRAMDYN_INSTANTIATE(float)
GRAMDYN_INSTANTIATE(double)

#undef GRAMDYN_INSTANTIATE

}  // namespace gramdyn
