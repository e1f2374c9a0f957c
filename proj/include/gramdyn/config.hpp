#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gramdyn/intervene.hpp"
#include "gramdyn/refine.hpp"
#include "gramdyn/saliency.hpp"
#include "gramdyn/synth.hpp"
#include "gramdyn/threshold.hpp"

namespace gramdyn {

/// Every tunable of the mining-to-suppression chain, paper defaults filled in.
struct PipelineConfig {
  SaliencyConfig saliency;
  int clusters = 8;  // k for token k-means
  BinarizeOptions binarize;
  RefineConfig refine;
  std::vector<int> suppress_layers = kDefaultSuppressLayers;
  SuppressionMode suppress_mode = SuppressionMode::NegInfBias;
  double boundary_fraction = 0.008;  // boundary-F tolerance as a fraction of the image diagonal

  /// Checks value ranges only. Throws ValidationError.
  void validate() const;
  /// validate() plus every layer the saliency stage reads, the feature tensor
  /// and the cluster count against the frame set. Throws SchemaError or
  /// ValidationError.
  void validate_against(const FrameSet& fs) const;
};

struct RunConfig {
  SceneSpec scene = SceneSpec::default_fixture();
  PipelineConfig pipeline;
};

/// Parses a config document: JSON with // and /* */ comments allowed and two
/// optional top-level sections, "scene" and "pipeline". Keys left out keep
/// their defaults; a "planes" or "spheres" list replaces the fixture's list.
/// Unknown keys and ill-typed values throw ValidationError naming the key.
RunConfig parse_config(const std::string& text);

/// Reads and parses a config file. Throws NotFound if it does not exist.
RunConfig load_config(const std::filesystem::path& path);

/// The fully expanded config as JSON; parse_config(config_to_json(c))
/// reproduces c.
std::string config_to_json(const RunConfig& config);

/// "4-8", "1,4,5" or a mix ("1,4-6"). Throws ValidationError on bad syntax.
std::vector<int> parse_layer_list(const std::string& text);

}  // namespace gramdyn
