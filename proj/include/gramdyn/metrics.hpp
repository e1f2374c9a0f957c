#pragma once

#include <optional>
#include <span>
#include <vector>

#include "gramdyn/camera.hpp"
#include "gramdyn/eigen_types.hpp"
#include "gramdyn/point_cloud.hpp"
#include "gramdyn/tensor.hpp"
#include "gramdyn/threshold.hpp"

namespace gramdyn {

// ---- segmentation ----------------------------------------------------------

/// |pred & gt| / |pred | gt|, 1 when both are empty. Throws SchemaError if
/// the sizes differ.
double iou(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt);

/// Foreground pixels with a background 4-neighbor inside the image.
std::vector<std::uint8_t> boundary_map(std::span<const std::uint8_t> mask, std::size_t height,
                                       std::size_t width);

/// Exact squared Euclidean distance (pixels) to the nearest nonzero pixel;
/// +inf everywhere if there is none.
std::vector<double> squared_distance_transform(std::span<const std::uint8_t> sites,
                                               std::size_t height, std::size_t width);

inline constexpr double kBoundaryToleranceFraction = 0.008;

/// Boundary F-measure: a boundary pixel matches if the other mask's boundary
/// lies within `tolerance` pixels (default 0.8% of the image diagonal).
/// 1 when both boundaries are empty, 0 when exactly one is.
double boundary_f(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt,
                  std::size_t height, std::size_t width,
                  std::optional<double> tolerance = std::nullopt);

struct SequenceScores {
  std::vector<double> iou;  // per frame
  std::vector<double> f;    // per frame
  double jm = 0, jr = 0, fm = 0, fr = 0;
};

struct SegReport {
  double jm = 0, jr = 0, fm = 0, fr = 0;
  std::vector<SequenceScores> sequences;
};

/// Scores one sequence of pixel masks (both with equal frames and size).
SequenceScores score_sequence(const DynamicMask& pred, const DynamicMask& gt,
                              std::optional<double> tolerance = std::nullopt);

/// Averages within each sequence, then across sequences. Recall counts frames
/// scoring above 0.5. Throws ValidationError on an empty list.
SegReport seg_report(std::span<const SequenceScores> sequences);
SegReport seg_report(std::span<const DynamicMask> pred, std::span<const DynamicMask> gt,
                     std::optional<double> tolerance = std::nullopt);

// ---- trajectories ----------------------------------------------------------

/// Camera-to-world pose.
struct Pose {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
};

using Trajectory = std::vector<Pose>;

Trajectory trajectory_from_cameras(std::span<const Camera> cameras);
/// f32 [F, 3, 4] blob of [R | c] camera-to-world rows.
Trajectory trajectory_from_blob(const TensorBlob& blob);
TensorBlob trajectory_to_blob(const Trajectory& traj);

struct Sim3 {
  double scale = 1.0;
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  Eigen::Vector3d apply(const Eigen::Vector3d& x) const {
    return scale * (rotation * x) + translation;
  }
  Pose apply(const Pose& p) const { return {rotation * p.rotation, apply(p.center)}; }
};

/// Least-squares similarity mapping est centers onto gt centers. Throws
/// ValidationError for fewer than 3 or mismatched poses and NumericalError
/// when either center set is coincident or collinear.
Sim3 align_umeyama(const Trajectory& est, const Trajectory& gt, bool with_scale = true);

struct TrajMetrics {
  double ate = 0;  // scene units
  double rte = 0;  // scene units
  double rre = 0;  // degrees
  Sim3 alignment;
};

/// ATE after Sim(3) alignment; RTE and RRE over consecutive pairs of the
/// aligned trajectory. Throws ValidationError on fewer than 2 poses or a
/// length mismatch.
TrajMetrics traj_metrics(const Trajectory& est, const Trajectory& gt);

/// Geodesic angle of a rotation matrix, degrees.
double rotation_angle_degrees(const Eigen::Matrix3d& r);

// ---- reconstruction --------------------------------------------------------

struct Summary {
  double mean = 0;
  double median = 0;
};

struct ReconReport {
  Summary accuracy;      // pred -> gt
  Summary completeness;  // gt -> pred
  Summary distance;      // union of both directed sets
};

Summary summarize(std::vector<double> values);

/// Nearest-neighbor distances from every query point to the reference set.
std::vector<double> nearest_distances(const PointCloud& query, const PointCloud& reference);

/// Throws ValidationError if either cloud is empty.
ReconReport recon_metrics(const PointCloud& pred, const PointCloud& gt, const Sim3& align = {});

}  // namespace gramdyn
