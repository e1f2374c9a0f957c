#include "gramdyn/saliency.hpp"

#include <cmath>

#include "gramdyn/frameset.hpp"

namespace gramdyn {

namespace {

const GramStatMaps& lookup(const StatsTable& stats, StatKind kind, const std::vector<int>& layers,
                           const char* what) {
  auto it = stats.find({kind, layers});
  if (it == stats.end()) {
    throw SchemaError(std::string("missing statistic ") + what + " " + stat_kind_name(kind) +
                      " over layers " + LayerGroup{kind, layers}.label());
  }
  return it->second;
}

}  // namespace

void SaliencyConfig::validate_against(const FrameSet& fs) const {
  window.validate();
  for (const auto* list : {&shallow_layers, &middle_layers, &deep_var_layers, &deep_mean_layers}) {
    if (list->empty()) throw ValidationError("saliency layer lists must not be empty");
    for (int layer : *list) {
      if (!fs.has_layer(layer)) {
        throw SchemaError("layer " + std::to_string(layer) +
                          " tensors are missing from the frame set");
      }
    }
  }
}

std::vector<LayerGroup> required_groups(const SaliencyConfig& cfg) {
  return {{StatKind::KK, cfg.shallow_layers},
          {StatKind::QK, cfg.shallow_layers},
          {StatKind::QQ, cfg.middle_layers},
          {StatKind::QQ, cfg.deep_var_layers},
          {StatKind::QQ, cfg.deep_mean_layers}};
}

StatsTable compute_stats(const FrameSet& fs, const SaliencyConfig& cfg) {
  cfg.validate_against(fs);
  StatsTable table;
  for (const auto& group : required_groups(cfg)) {
    const auto key = std::make_pair(group.kind, group.layers);
    if (table.contains(key)) continue;
    table.emplace(key, aggregate_stats(fs, group, cfg.window, cfg.gram));
  }
  return table;
}

FrameMap normalize_map(const FrameMap& map) {
  if (!map.allFinite()) throw NumericalError("normalize_map: input contains non-finite values");
  FrameMap out(map.rows(), map.cols());
  for (Eigen::Index t = 0; t < map.rows(); ++t) {
    const double lo = map.row(t).minCoeff();
    const double hi = map.row(t).maxCoeff();
    if (hi > lo) {
      out.row(t) = (map.row(t).array() - lo) / (hi - lo);
    } else {
      out.row(t).setZero();
    }
  }
  return out;
}

FrameMap compute_band(Band band, const StatsTable& stats, const SaliencyConfig& cfg) {
  FrameMap combined;
  switch (band) {
    case Band::Shallow: {
      const auto s_kk = normalize_map(lookup(stats, StatKind::KK, cfg.shallow_layers, "S").mean);
      const auto v_qk =
          normalize_map(lookup(stats, StatKind::QK, cfg.shallow_layers, "V").variance);
      combined = (1.0 - s_kk.array()) * v_qk.array();
      break;
    }
    case Band::Middle: {
      const auto s_qq = normalize_map(lookup(stats, StatKind::QQ, cfg.middle_layers, "S").mean);
      combined = 1.0 - s_qq.array();
      break;
    }
    case Band::Deep: {
      const auto v_qq =
          normalize_map(lookup(stats, StatKind::QQ, cfg.deep_var_layers, "V").variance);
      const auto s_qq = normalize_map(lookup(stats, StatKind::QQ, cfg.deep_mean_layers, "S").mean);
      combined = (1.0 - v_qq.array()) * s_qq.array();
      break;
    }
  }
  return normalize_map(combined);
}

SaliencyMap compute_dyn(FrameMap w_shallow, FrameMap w_middle, FrameMap w_deep) {
  if (w_shallow.rows() != w_middle.rows() || w_shallow.rows() != w_deep.rows() ||
      w_shallow.cols() != w_middle.cols() || w_shallow.cols() != w_deep.cols()) {
    throw SchemaError("compute_dyn: band maps differ in shape");
  }
  SaliencyMap out;
  out.dyn = normalize_map(w_shallow.array() * w_middle.array() * w_deep.array());
  out.w_shallow = std::move(w_shallow);
  out.w_middle = std::move(w_middle);
  out.w_deep = std::move(w_deep);
  return out;
}

SaliencyMap compute_saliency(const StatsTable& stats, const SaliencyConfig& cfg) {
  return compute_dyn(compute_band(Band::Shallow, stats, cfg), compute_band(Band::Middle, stats, cfg),
                     compute_band(Band::Deep, stats, cfg));
}

SaliencyMap compute_saliency(const FrameSet& fs, const SaliencyConfig& cfg) {
  return compute_saliency(compute_stats(fs, cfg), cfg);
}

}  // namespace gramdyn
