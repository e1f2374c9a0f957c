#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "gramdyn/config.hpp"
#include "gramdyn/metrics.hpp"

namespace gramdyn {

/// Where each stage reads and writes inside a run directory. Stages only
/// talk to each other through these files.
struct RunLayout {
  std::filesystem::path run;
  std::filesystem::path frameset;

  /// The frame set defaults to <run>/frameset.
  explicit RunLayout(std::filesystem::path run_dir,
                     std::optional<std::filesystem::path> frameset_dir = std::nullopt);

  std::filesystem::path stats_dir() const { return run / "stats"; }
  std::filesystem::path dyn() const { return run / "dyn.vg4t"; }
  std::filesystem::path band(const char* name) const {
    return run / (std::string("w_") + name + ".vg4t");
  }
  std::filesystem::path mask_patch() const { return run / "mask_patch.vg4t"; }
  std::filesystem::path alpha() const { return run / "alpha.txt"; }
  std::filesystem::path mask_pixel() const { return run / "mask_pixel.vg4t"; }
  std::filesystem::path points() const { return run / "points.ply"; }
  std::filesystem::path refine_scores() const { return run / "refine_scores.vg4t"; }
  std::filesystem::path refine_summary() const { return run / "refine.json"; }
  std::filesystem::path key_mask() const { return run / "key_mask.vg4t"; }
  std::filesystem::path config() const { return run / "config.json"; }
};

/// Renders the scene and writes the frame set with its ground truth.
void stage_gen(const SceneSpec& scene, const RunLayout& layout);

/// Gram statistics of every required layer group (stats/S_*.vg4t, V_*.vg4t)
/// plus dyn.vg4t and the three band maps.
void stage_mine(const PipelineConfig& cfg, const RunLayout& layout);

/// k-means over the backbone features, then Otsu over cluster scores:
/// mask_patch.vg4t and alpha.txt. Returns alpha.
double stage_mask(const PipelineConfig& cfg, std::uint64_t seed, const RunLayout& layout);

/// Pixel mask, flagged point cloud, per-point scores and a JSON summary.
void stage_refine(const PipelineConfig& cfg, const RunLayout& layout);

/// Key-suppression blob for the configured layers, with its JSON sidecar.
void stage_suppress(const PipelineConfig& cfg, const RunLayout& layout);

/// Any-resolution prediction against the frame set's ground-truth masks.
/// Throws SchemaError if the frame set carries no masks.
SegReport eval_seg(const FrameSet& fs, const DynamicMask& pred, double boundary_fraction);

/// Estimated cameras against the ground-truth trajectory.
TrajMetrics eval_pose(const FrameSet& estimate, const FrameSet& reference);

/// Static points of `pred` against the ground-truth cloud after `align`.
/// Every `stride`-th predicted point is used.
ReconReport eval_recon(const PointCloud& pred, const FrameSet& reference, const Sim3& align,
                       std::size_t stride = 1);

struct PipelineReport {
  double alpha = 0;
  double tau = 0;
  SegReport initial;  // patch mask, upsampled
  SegReport refined;
  TrajMetrics pose;
  ReconReport recon;
  std::size_t suppressed_keys = 0;
};

std::string seg_report_text(const SegReport& report);
std::string seg_report_json(const SegReport& report);
std::string pose_report_text(const TrajMetrics& metrics);
std::string pose_report_json(const TrajMetrics& metrics);
std::string recon_report_text(const ReconReport& report);
std::string recon_report_json(const ReconReport& report);
std::string pipeline_report_text(const PipelineReport& report);
std::string pipeline_report_json(const PipelineReport& report);

/// Predicted cloud stride used by the pipeline's reconstruction check.
inline constexpr std::size_t kReconStride = 16;

/// gen (unless `generate` is false and the frame set exists), mine, mask,
/// refine, suppress and every evaluation, writing report.txt and
/// report.json. Each stage goes through its files, so the result equals
/// running the stages one by one.
PipelineReport run_pipeline(const RunConfig& config, const RunLayout& layout, bool generate = true);

/// Writes text to a file, creating parent directories. Throws IoError.
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace gramdyn
