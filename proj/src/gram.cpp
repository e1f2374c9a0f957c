#include "gramdyn/gram.hpp"

#include <algorithm>

#include "gramdyn/frameset.hpp"
#include "gramdyn/parallel.hpp"

namespace gramdyn {

namespace {

// Rows per work item when filling the Gram buffer. Fixed so that the
// float GEMM for any given row is evaluated identically regardless of the
// number of workers.
constexpr std::size_t kTileRows = 64;

}  // namespace

void WindowSpec::validate() const {
  if (half_count < 1) throw ValidationError("window half_count must be >= 1");
  if (stride < 1) throw ValidationError("window stride must be >= 1");
}

const char* stat_kind_name(StatKind kind) {
  switch (kind) {
    case StatKind::QQ: return "QQ";
    case StatKind::QK: return "QK";
    case StatKind::KK: return "KK";
  }
  return "QQ";
}

StatKind parse_stat_kind(const std::string& name) {
  if (name == "QQ") return StatKind::QQ;
  if (name == "QK") return StatKind::QK;
  if (name == "KK") return StatKind::KK;
  throw ValidationError("unknown statistic kind '" + name + "'");
}

std::string LayerGroup::label() const {
  if (layers.empty()) return "none";
  return std::to_string(layers.front()) + "-" + std::to_string(layers.back());
}

std::string mean_blob_name(const LayerGroup& group) {
  return std::string("S_") + stat_kind_name(group.kind) + "_" + group.label() + ".vg4t";
}

std::string variance_blob_name(const LayerGroup& group) {
  return std::string("V_") + stat_kind_name(group.kind) + "_" + group.label() + ".vg4t";
}

std::vector<std::size_t> window_indices(std::size_t t, const WindowSpec& window,
                                        std::size_t frame_count) {
  std::vector<std::size_t> out;
  const auto ti = static_cast<long long>(t);
  const auto F = static_cast<long long>(frame_count);
  for (int k = window.half_count; k >= 1; --k) {
    const long long s = ti - static_cast<long long>(k) * window.stride;
    if (s >= 0) out.push_back(static_cast<std::size_t>(s));
  }
  for (int k = 1; k <= window.half_count; ++k) {
    const long long s = ti + static_cast<long long>(k) * window.stride;
    if (s < F) out.push_back(static_cast<std::size_t>(s));
  }
  if (out.empty() && frame_count >= 2) {
    out.push_back(t > 0 ? t - 1 : t + 1);
  }
  return out;
}

GramStatMaps aggregate_stats(const FrameSet& fs, const LayerGroup& group,
                             const WindowSpec& window, const GramOptions& options) {
  window.validate();
  if (group.layers.empty()) throw ValidationError("layer group must list at least one layer");
  for (int layer : group.layers) {
    if (!fs.has_layer(layer)) {
      throw SchemaError("layer " + std::to_string(layer) + " tensors are missing (needed by " +
                        stat_kind_name(group.kind) + " group " + group.label() + ")");
    }
  }
  const std::size_t F = fs.info.frames;
  if (F < 2) throw ValidationError("aggregate_stats needs at least 2 frames");
  const auto Np = static_cast<Eigen::Index>(fs.info.tokens());
  const auto c = static_cast<Eigen::Index>(fs.info.channels);
  const int heads = options.heads;
  if (heads < 1 || c % heads != 0) {
    throw ValidationError("head count " + std::to_string(heads) + " must divide channel dim " +
                          std::to_string(c));
  }
  const Eigen::Index head_width = c / heads;
  const float scale = 1.0f / std::sqrt(static_cast<float>(head_width));
  const double layer_weight = 1.0 / static_cast<double>(group.layers.size());
  const double head_weight = 1.0 / static_cast<double>(heads);

  GramStatMaps out;
  out.group = group;
  out.window = window;
  out.mean = FrameMap::Zero(static_cast<Eigen::Index>(F), Np);
  out.variance = FrameMap::Zero(static_cast<Eigen::Index>(F), Np);

  // The only O(Np^2) storage: one Gram block, reused for every (t, s, l).
  RowMatrix<float> gram(Np, Np);
  Eigen::VectorXd row_mean(Np);
  Eigen::MatrixXd per_source(2 * window.half_count, Np);

  for (std::size_t t = 0; t < F; ++t) {
    const auto sources = window_indices(t, window, F);
    for (std::size_t si = 0; si < sources.size(); ++si) {
      const std::size_t s = sources[si];
      auto acc = per_source.row(static_cast<Eigen::Index>(si));
      acc.setZero();
      for (int layer : group.layers) {
        const TokenMap rows = group.kind == StatKind::KK ? fs.key(layer, t) : fs.query(layer, t);
        const TokenMap cols = group.kind == StatKind::QQ ? fs.query(layer, s) : fs.key(layer, s);
        for (int h = 0; h < heads; ++h) {
          const Eigen::Index c0 = h * head_width;
          parallel_chunks(static_cast<std::size_t>(Np), kTileRows,
                          [&](std::size_t, std::size_t begin, std::size_t end) {
                            const auto b = static_cast<Eigen::Index>(begin);
                            const auto n = static_cast<Eigen::Index>(end - begin);
                            gram.middleRows(b, n).noalias() =
                                (rows.block(b, c0, n, head_width) *
                                 cols.middleCols(c0, head_width).transpose()) *
                                scale;
                            for (Eigen::Index p = b; p < b + n; ++p) {
                              double sum = 0.0;
                              for (Eigen::Index q = 0; q < Np; ++q) sum += gram(p, q);
                              row_mean[p] = sum / static_cast<double>(Np);
                            }
                          });
          acc += (layer_weight * head_weight) * row_mean.transpose();
        }
      }
    }
    const auto count = static_cast<Eigen::Index>(sources.size());
    const auto samples = per_source.topRows(count);
    const Eigen::RowVectorXd mean = samples.colwise().sum() / static_cast<double>(count);
    out.mean.row(static_cast<Eigen::Index>(t)) = mean;
    if (count > 1) {
      out.variance.row(static_cast<Eigen::Index>(t)) =
          (samples.rowwise() - mean).array().square().colwise().sum() /
          static_cast<double>(count);
    }
  }
  return out;
}

}  // namespace gramdyn
