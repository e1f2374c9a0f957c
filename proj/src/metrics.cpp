#include "gramdyn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <Eigen/SVD>

#include "gramdyn/error.hpp"
#include "gramdyn/knn.hpp"
#include "gramdyn/parallel.hpp"

namespace gramdyn {

namespace {

void require_same(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw SchemaError(std::string(what) + ": mask sizes differ (" + std::to_string(a) + " vs " +
                      std::to_string(b) + ")");
  }
}

// 1-D squared distance transform of sampled function f (Felzenszwalb and
// Huttenlocher), written into d.
void dt_1d(const std::vector<double>& f, std::vector<double>& d, std::vector<int>& v,
           std::vector<double>& z) {
  const int n = static_cast<int>(f.size());
  constexpr double inf = std::numeric_limits<double>::infinity();
  int k = -1;
  for (int q = 0; q < n; ++q) {
    if (f[q] == inf) continue;
    if (k < 0) {
      k = 0;
      v[0] = q;
      z[0] = -inf;
      z[1] = inf;
      continue;
    }
    double s = 0;
    while (true) {
      const int p = v[k];
      s = ((f[q] + double(q) * q) - (f[p] + double(p) * p)) / (2.0 * (q - p));
      if (s > z[k]) break;
      if (--k < 0) break;
    }
    if (k < 0) {
      k = 0;
      v[0] = q;
      z[0] = -inf;
      z[1] = inf;
      continue;
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = inf;
  }
  if (k < 0) {
    std::fill(d.begin(), d.end(), inf);
    return;
  }
  int j = 0;
  for (int q = 0; q < n; ++q) {
    while (z[j + 1] < q) ++j;
    const double diff = q - v[j];
    d[q] = diff * diff + f[v[j]];
  }
}

}  // namespace

double iou(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt) {
  require_same(pred.size(), gt.size(), "iou");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred[i] != 0, g = gt[i] != 0;
    inter += (p && g) ? 1 : 0;
    uni += (p || g) ? 1 : 0;
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

std::vector<std::uint8_t> boundary_map(std::span<const std::uint8_t> mask, std::size_t height,
                                       std::size_t width) {
  require_same(mask.size(), height * width, "boundary_map");
  std::vector<std::uint8_t> out(mask.size(), 0);
  for (std::size_t r = 0; r < height; ++r) {
    for (std::size_t c = 0; c < width; ++c) {
      const std::size_t i = r * width + c;
      if (!mask[i]) continue;
      const bool edge = (c > 0 && !mask[i - 1]) || (c + 1 < width && !mask[i + 1]) ||
                        (r > 0 && !mask[i - width]) || (r + 1 < height && !mask[i + width]);
      out[i] = edge ? 1 : 0;
    }
  }
  return out;
}

std::vector<double> squared_distance_transform(std::span<const std::uint8_t> sites,
                                               std::size_t height, std::size_t width) {
  require_same(sites.size(), height * width, "distance transform");
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> grid(sites.size());
  for (std::size_t i = 0; i < sites.size(); ++i) grid[i] = sites[i] ? 0.0 : inf;
  const std::size_t n = std::max(height, width);
  std::vector<double> f(n), d(n), z(n + 1);
  std::vector<int> v(n);
  f.resize(height);
  d.resize(height);
  for (std::size_t c = 0; c < width; ++c) {
    for (std::size_t r = 0; r < height; ++r) f[r] = grid[r * width + c];
    dt_1d(f, d, v, z);
    for (std::size_t r = 0; r < height; ++r) grid[r * width + c] = d[r];
  }
  f.resize(width);
  d.resize(width);
  for (std::size_t r = 0; r < height; ++r) {
    for (std::size_t c = 0; c < width; ++c) f[c] = grid[r * width + c];
    dt_1d(f, d, v, z);
    for (std::size_t c = 0; c < width; ++c) grid[r * width + c] = d[c];
  }
  return grid;
}

double boundary_f(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt,
                  std::size_t height, std::size_t width, std::optional<double> tolerance) {
  require_same(pred.size(), gt.size(), "boundary_f");
  const double tol = tolerance.value_or(
      kBoundaryToleranceFraction *
      std::hypot(static_cast<double>(height), static_cast<double>(width)));
  const auto pb = boundary_map(pred, height, width);
  const auto gb = boundary_map(gt, height, width);
  const auto np = std::count(pb.begin(), pb.end(), 1);
  const auto ng = std::count(gb.begin(), gb.end(), 1);
  if (np == 0 && ng == 0) return 1.0;
  if (np == 0 || ng == 0) return 0.0;
  const auto to_gt = squared_distance_transform(gb, height, width);
  const auto to_pred = squared_distance_transform(pb, height, width);
  const double tol2 = tol * tol;
  std::size_t matched_pred = 0, matched_gt = 0;
  for (std::size_t i = 0; i < pb.size(); ++i) {
    if (pb[i] && to_gt[i] <= tol2) ++matched_pred;
    if (gb[i] && to_pred[i] <= tol2) ++matched_gt;
  }
  const double precision = static_cast<double>(matched_pred) / static_cast<double>(np);
  const double recall = static_cast<double>(matched_gt) / static_cast<double>(ng);
  if (precision + recall == 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

SequenceScores score_sequence(const DynamicMask& pred, const DynamicMask& gt,
                              std::optional<double> tolerance) {
  if (pred.frames != gt.frames || pred.rows != gt.rows || pred.cols != gt.cols) {
    throw SchemaError("score_sequence: prediction and ground truth masks differ in shape");
  }
  if (pred.frames == 0) throw ValidationError("score_sequence: empty sequence");
  SequenceScores s;
  for (std::size_t f = 0; f < pred.frames; ++f) {
    s.iou.push_back(iou(pred.frame(f), gt.frame(f)));
    s.f.push_back(boundary_f(pred.frame(f), gt.frame(f), pred.rows, pred.cols, tolerance));
  }
  const double n = static_cast<double>(pred.frames);
  for (std::size_t f = 0; f < pred.frames; ++f) {
    s.jm += s.iou[f] / n;
    s.fm += s.f[f] / n;
    s.jr += (s.iou[f] > 0.5 ? 1.0 : 0.0) / n;
    s.fr += (s.f[f] > 0.5 ? 1.0 : 0.0) / n;
  }
  return s;
}

SegReport seg_report(std::span<const SequenceScores> sequences) {
  if (sequences.empty()) throw ValidationError("seg_report: no sequences");
  SegReport r;
  const double n = static_cast<double>(sequences.size());
  for (const auto& s : sequences) {
    r.jm += s.jm / n;
    r.jr += s.jr / n;
    r.fm += s.fm / n;
    r.fr += s.fr / n;
    r.sequences.push_back(s);
  }
  return r;
}

SegReport seg_report(std::span<const DynamicMask> pred, std::span<const DynamicMask> gt,
                     std::optional<double> tolerance) {
  if (pred.size() != gt.size()) throw ValidationError("seg_report: sequence lists differ in length");
  std::vector<SequenceScores> scores;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    scores.push_back(score_sequence(pred[i], gt[i], tolerance));
  }
  return seg_report(scores);
}

Trajectory trajectory_from_cameras(std::span<const Camera> cameras) {
  Trajectory out;
  out.reserve(cameras.size());
  for (const auto& cam : cameras) out.push_back({cam.rotation.transpose(), cam.center()});
  return out;
}

Trajectory trajectory_from_blob(const TensorBlob& blob) {
  const auto& dims = blob.dims();
  if (dims.size() != 3 || dims[1] != 3 || dims[2] != 4) {
    throw SchemaError("trajectory blob dims " + format_dims(dims) + " are not [F, 3, 4]");
  }
  const auto values = blob.as_f32();
  Trajectory out(dims[0]);
  for (std::size_t f = 0; f < dims[0]; ++f) {
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) out[f].rotation(r, c) = values[f * 12 + r * 4 + c];
      out[f].center(r) = values[f * 12 + r * 4 + 3];
    }
  }
  return out;
}

TensorBlob trajectory_to_blob(const Trajectory& traj) {
  std::vector<float> values(traj.size() * 12);
  for (std::size_t f = 0; f < traj.size(); ++f) {
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) values[f * 12 + r * 4 + c] = float(traj[f].rotation(r, c));
      values[f * 12 + r * 4 + 3] = float(traj[f].center(r));
    }
  }
  return TensorBlob::f32({traj.size(), 3, 4}, std::move(values));
}

namespace {

Eigen::Matrix3Xd centers_of(const Trajectory& traj) {
  Eigen::Matrix3Xd m(3, static_cast<Eigen::Index>(traj.size()));
  for (std::size_t i = 0; i < traj.size(); ++i) m.col(static_cast<Eigen::Index>(i)) = traj[i].center;
  return m;
}

void require_spread(const Eigen::Matrix3Xd& centers, const char* which) {
  const Eigen::Matrix3Xd centered = centers.colwise() - centers.rowwise().mean();
  const Eigen::JacobiSVD<Eigen::Matrix3Xd> svd(centered);
  const auto sv = svd.singularValues();
  if (!(sv(0) > 1e-12) || !(sv(1) > 1e-9 * sv(0))) {
    throw NumericalError(std::string("align_umeyama: ") + which +
                         " camera centers are coincident or collinear");
  }
}

}  // namespace

Sim3 align_umeyama(const Trajectory& est, const Trajectory& gt, bool with_scale) {
  if (est.size() != gt.size()) throw ValidationError("align_umeyama: trajectory lengths differ");
  if (est.size() < 3) throw ValidationError("align_umeyama: need at least 3 poses");
  const auto src = centers_of(est);
  const auto dst = centers_of(gt);
  require_spread(src, "estimated");
  require_spread(dst, "reference");
  const Eigen::Matrix4d T = Eigen::umeyama(src, dst, with_scale);
  Sim3 s;
  const Eigen::Matrix3d sr = T.topLeftCorner<3, 3>();
  s.scale = std::cbrt(sr.determinant());
  s.rotation = sr / s.scale;
  s.translation = T.topRightCorner<3, 1>();
  return s;
}

double rotation_angle_degrees(const Eigen::Matrix3d& r) {
  // atan2 of sine and cosine parts stays accurate near 0, where acos of the
  // trace alone loses half the digits.
  const Eigen::Vector3d axis(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1));
  const double angle = std::atan2(0.5 * axis.norm(), 0.5 * (r.trace() - 1.0));
  return angle * 180.0 / std::numbers::pi;
}

TrajMetrics traj_metrics(const Trajectory& est, const Trajectory& gt) {
  if (est.size() != gt.size()) throw ValidationError("traj_metrics: trajectory lengths differ");
  if (est.size() < 2) throw ValidationError("traj_metrics: need at least 2 poses");
  TrajMetrics m;
  if (est.size() >= 3) m.alignment = align_umeyama(est, gt, true);
  const std::size_t n = est.size();
  Trajectory aligned(n);
  double ate_sq = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    aligned[i] = m.alignment.apply(est[i]);
    ate_sq += (aligned[i].center - gt[i].center).squaredNorm();
  }
  m.ate = std::sqrt(ate_sq / static_cast<double>(n));
  double rte_sq = 0.0, rre = 0.0;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const Eigen::Vector3d t_gt = gt[i].rotation.transpose() * (gt[i + 1].center - gt[i].center);
    const Eigen::Vector3d t_est =
        aligned[i].rotation.transpose() * (aligned[i + 1].center - aligned[i].center);
    rte_sq += (t_est - t_gt).squaredNorm();
    const Eigen::Matrix3d r_gt = gt[i].rotation.transpose() * gt[i + 1].rotation;
    const Eigen::Matrix3d r_est = aligned[i].rotation.transpose() * aligned[i + 1].rotation;
    rre += rotation_angle_degrees(r_gt.transpose() * r_est);
  }
  const double pairs = static_cast<double>(n - 1);
  m.rte = std::sqrt(rte_sq / pairs);
  m.rre = rre / pairs;
  return m;
}

Summary summarize(std::vector<double> values) {
  Summary s;
  if (values.empty()) return s;
  for (double v : values) s.mean += v;
  s.mean /= static_cast<double>(values.size());
  std::sort(values.begin(), values.end());
  const std::size_t mid = values.size() / 2;
  s.median = values.size() % 2 == 1 ? values[mid] : 0.5 * (values[mid - 1] + values[mid]);
  return s;
}

std::vector<double> nearest_distances(const PointCloud& query, const PointCloud& reference) {
  const KdTree<double> tree(reference.positions);
  std::vector<double> out(query.size());
  parallel_chunks(query.size(), 4096, [&](std::size_t, std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const auto nb = tree.nearest(query.positions.data() + 3 * i, 1);
      out[i] = std::sqrt(nb.front().distance_sq);
    }
  });
  return out;
}

ReconReport recon_metrics(const PointCloud& pred, const PointCloud& gt, const Sim3& align) {
  if (pred.empty() || gt.empty()) throw ValidationError("recon_metrics: empty point cloud");
  PointCloud moved;
  moved.positions.resize(pred.positions.rows(), 3);
  for (Eigen::Index i = 0; i < pred.positions.rows(); ++i) {
    moved.positions.row(i) = align.apply(pred.positions.row(i).transpose()).transpose();
  }
  auto acc = nearest_distances(moved, gt);
  auto comp = nearest_distances(gt, moved);
  std::vector<double> both = acc;
  both.insert(both.end(), comp.begin(), comp.end());
  ReconReport r;
  r.accuracy = summarize(std::move(acc));
  r.completeness = summarize(std::move(comp));
  r.distance = summarize(std::move(both));
  return r;
}

}  // namespace gramdyn
