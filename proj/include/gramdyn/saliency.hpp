#pragma once

#include <map>
#include <utility>
#include <vector>

#include "gramdyn/eigen_types.hpp"
#include "gramdyn/gram.hpp"

namespace gramdyn {

class FrameSet;

struct SaliencyConfig {
  std::vector<int> shallow_layers = {1};
  std::vector<int> middle_layers = {4, 5, 6, 7, 8};
  std::vector<int> deep_var_layers = {19, 20};
  std::vector<int> deep_mean_layers = {18, 19, 20, 21, 22};
  WindowSpec window;
  GramOptions gram;

  /// Throws SchemaError naming the first listed layer the frame set lacks.
  void validate_against(const FrameSet& fs) const;
};

/// Per-frame dynamic saliency and its three band factors, all F x Np in [0, 1].
struct SaliencyMap {
  FrameMap dyn;
  FrameMap w_shallow;
  FrameMap w_middle;
  FrameMap w_deep;
};

enum class Band { Shallow, Middle, Deep };

/// Statistics keyed by (kind, layers); one entry per aggregate_stats call.
using StatsTable = std::map<std::pair<StatKind, std::vector<int>>, GramStatMaps>;

/// The (kind, layers) groups a configuration needs, in evaluation order.
std::vector<LayerGroup> required_groups(const SaliencyConfig& cfg);

StatsTable compute_stats(const FrameSet& fs, const SaliencyConfig& cfg);

/// Per-frame min-max normalization; constant rows map to zero.
/// Throws NumericalError on non-finite input.
FrameMap normalize_map(const FrameMap& map);

/// One band factor, operands normalized before combining and the result
/// renormalized. Throws SchemaError if a required statistic is absent.
FrameMap compute_band(Band band, const StatsTable& stats, const SaliencyConfig& cfg);

/// dyn = normalize(w_shallow * w_middle * w_deep). Throws SchemaError on
/// shape mismatch.
SaliencyMap compute_dyn(FrameMap w_shallow, FrameMap w_middle, FrameMap w_deep);

/// compute_stats + the three bands + compute_dyn.
SaliencyMap compute_saliency(const FrameSet& fs, const SaliencyConfig& cfg);
SaliencyMap compute_saliency(const StatsTable& stats, const SaliencyConfig& cfg);

}  // namespace gramdyn
