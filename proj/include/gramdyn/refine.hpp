#pragma once

#include <optional>
#include <string>
#include <vector>

#include "gramdyn/point_cloud.hpp"
#include "gramdyn/threshold.hpp"

namespace gramdyn {

class FrameSet;

/// Whether outlier removal runs on each frame's cloud or on all frames
/// pooled. Pooled clouds are far denser on static surfaces (seen from every
/// view) than on moving ones, so pooled SOR strips dynamic points.
enum class SorScope { PerFrame, Pooled };

SorScope parse_sor_scope(const std::string& name);
const char* sor_scope_name(SorScope scope);

struct RefineConfig {
  double lambda = 1.0;
  std::optional<double> tau;  // fixed threshold on raw cluster means; Otsu if unset
  int sor_k = 20;
  double sor_sigma = 2.5;
  SorScope sor_scope = SorScope::PerFrame;
  std::optional<double> occlusion_margin;  // scene units; default below
  double occlusion_fraction = 0.05;        // x median valid depth
  std::optional<double> voxel_size;        // scene units; default below
  double voxel_factor = 2.0;               // x median point spacing

  /// Throws ValidationError on lambda < 0, sor_k < 1, sor_sigma <= 0 or
  /// non-positive explicit sizes.
  void validate() const;
};

struct RefineScores {
  std::vector<double> proj;
  std::vector<double> photo;
  std::vector<double> total;
};

/// Per-point projection and photometric residual aggregates over every view
/// except the point's own source frame; N = number of such views.
struct ViewScores {
  std::vector<double> proj;
  std::vector<double> photo;
};

/// Both aggregates in one pass over (point, view) pairs. `mask` (patch or
/// pixel level) is sampled nearest-neighbor for the static weight 1 - M_i.
/// Throws ValidationError if there is no view to aggregate over.
ViewScores view_scores(const PointCloud& pc, const FrameSet& fs, const DynamicMask& mask,
                       double occlusion_margin);

std::vector<double> agg_proj(const PointCloud& pc, const FrameSet& fs, const DynamicMask& mask,
                             double occlusion_margin);
std::vector<double> agg_photo(const PointCloud& pc, const FrameSet& fs, const DynamicMask& mask,
                              double occlusion_margin);

/// 0.05 x median valid depth over all frames (or the configured margin).
double default_occlusion_margin(const FrameSet& fs, const RefineConfig& cfg);

struct SorResult {
  std::vector<std::size_t> kept;
  std::vector<std::size_t> removed;
  std::vector<double> mean_distance;  // per input point
  double threshold = 0.0;
};

/// Statistical outlier removal: a point is removed iff its mean distance to
/// its k nearest neighbors (itself excluded) exceeds mean + sigma * std over
/// all points (sample standard deviation). Throws ValidationError if the
/// cloud has k or fewer points.
SorResult sor_filter(const PointCloud& pc, int k, double sigma);

/// Connected components of occupied voxels under 26-connectivity. Cluster
/// ids are numbered in order of each cluster's smallest point index.
std::vector<int> cluster_points(const PointCloud& pc, double voxel);

/// Min-max normalization over all entries; constant input maps to zeros.
std::vector<double> normalize_scores(const std::vector<double>& values);

struct RefineResult {
  DynamicMask mask;  // pixel level
  PointCloud cloud;  // every unprojected point, dynamic_flag set
  RefineScores scores;             // per kept point, before cluster averaging
  std::vector<std::size_t> kept;   // indices into cloud
  std::vector<int> cluster;        // per kept point
  std::vector<double> cluster_score;  // per cluster, raw mean of total
  double tau = 0.0;
  double occlusion_margin = 0.0;
  double voxel_size = 0.0;
  bool degenerate = false;  // all scores vanished; mask is the initial one
};

/// Projection-gradient refinement of a coarse mask into a pixel mask.
RefineResult refine_masks(const FrameSet& fs, const DynamicMask& initial,
                          const RefineConfig& cfg = {});

}  // namespace gramdyn
