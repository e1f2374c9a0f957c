#include "gramdyn/refine.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>

#include "gramdyn/error.hpp"
#include "gramdyn/frameset.hpp"
#include "gramdyn/geometry.hpp"
#include "gramdyn/knn.hpp"
#include "gramdyn/log.hpp"
#include "gramdyn/parallel.hpp"

#include <spdlog/stopwatch.h>

namespace gramdyn {

namespace {

constexpr std::size_t kPointChunk = 8192;

double median_of(std::vector<double> values) {
  if (values.empty()) return 0.0;
  const auto mid = values.begin() + static_cast<std::ptrdiff_t>(values.size() / 2);
  std::nth_element(values.begin(), mid, values.end());
  if (values.size() % 2 == 1) return *mid;
  return 0.5 * (*mid + *std::max_element(values.begin(), mid));
}

struct VoxelKey {
  std::int64_t x, y, z;
  bool operator==(const VoxelKey&) const = default;
};

struct VoxelHash {
  std::size_t operator()(const VoxelKey& k) const noexcept {
    std::uint64_t h = static_cast<std::uint64_t>(k.x) * 0x9E3779B97F4A7C15ULL;
    h ^= static_cast<std::uint64_t>(k.y) * 0xC2B2AE3D27D4EB4FULL + (h << 6) + (h >> 2);
    h ^= static_cast<std::uint64_t>(k.z) * 0x165667B19E3779F9ULL + (h << 6) + (h >> 2);
    return static_cast<std::size_t>(h);
  }
};

std::size_t find_root(std::vector<std::size_t>& parent, std::size_t i) {
  while (parent[i] != i) {
    parent[i] = parent[parent[i]];
    i = parent[i];
  }
  return i;
}

}  // namespace

SorScope parse_sor_scope(const std::string& name) {
  if (name == "per-frame") return SorScope::PerFrame;
  if (name == "pooled") return SorScope::Pooled;
  throw ValidationError("unknown SOR scope '" + name + "' (per-frame|pooled)");
}

const char* sor_scope_name(SorScope scope) {
  return scope == SorScope::Pooled ? "pooled" : "per-frame";
}

void RefineConfig::validate() const {
  if (!(lambda >= 0.0)) throw ValidationError("refine lambda must be >= 0");
  if (sor_k < 1) throw ValidationError("sor_k must be >= 1");
  if (!(sor_sigma > 0.0)) throw ValidationError("sor_sigma must be > 0");
  if (occlusion_margin && !(*occlusion_margin > 0.0)) {
    throw ValidationError("occlusion margin must be > 0");
  }
  if (!(occlusion_fraction > 0.0)) throw ValidationError("occlusion fraction must be > 0");
  if (voxel_size && !(*voxel_size > 0.0)) throw ValidationError("voxel size must be > 0");
  if (!(voxel_factor > 0.0)) throw ValidationError("voxel factor must be > 0");
  if (tau && !std::isfinite(*tau)) throw ValidationError("tau must be finite");
}

ViewScores view_scores(const PointCloud& pc, const FrameSet& fs, const DynamicMask& mask,
                       double occlusion_margin) {
  const std::size_t F = fs.info.frames;
  if (F < 2) throw ValidationError("refinement needs at least one other view (F >= 2)");
  if (mask.frames != F) {
    throw SchemaError("mask has " + std::to_string(mask.frames) + " frames, frame set has " +
                      std::to_string(F));
  }
  const auto W = static_cast<Eigen::Index>(fs.info.width);
  const auto H = static_cast<Eigen::Index>(fs.info.height);

  std::vector<DepthGradient<float>> gradients(F);
  parallel_for(F, [&](std::size_t f) { gradients[f] = depth_gradient(fs.depth_map(f)); });

  ViewScores out{std::vector<double>(pc.size(), 0.0), std::vector<double>(pc.size(), 0.0)};
  parallel_chunks(pc.size(), kPointChunk, [&](std::size_t, std::size_t begin, std::size_t end) {
    for (std::size_t p = begin; p < end; ++p) {
      const Vector3<double> X = pc.positions.row(static_cast<Eigen::Index>(p)).transpose();
      const Eigen::Vector3d color =
          pc.colors.row(static_cast<Eigen::Index>(p)).transpose().cast<double>();
      const int own = pc.source[p].frame;
      double proj = 0.0, photo = 0.0;
      std::size_t views = 0;
      for (std::size_t f = 0; f < F; ++f) {
        if (static_cast<int>(f) == own) continue;
        ++views;
        const Camera& cam = fs.cameras[f];
        const auto depth = fs.depth_map(f);
        const auto sample = project(X, cam, depth, occlusion_margin);
        if (!sample.visible) continue;
        if (sample_mask(mask, fs.info, f, sample.u, sample.v)) continue;
        proj += std::abs(sample.r_d) * residual_gradient(X, cam, sample, gradients[f]).norm();
        const auto observed = bilinear_color(fs.image(f), W, H, sample.u, sample.v);
        photo += (color - *observed).norm();
      }
      out.proj[p] = proj / static_cast<double>(views);
      out.photo[p] = photo / static_cast<double>(views);
    }
  });
  return out;
}

std::vector<double> agg_proj(const PointCloud& pc, const FrameSet& fs, const DynamicMask& mask,
                             double occlusion_margin) {
  return view_scores(pc, fs, mask, occlusion_margin).proj;
}

std::vector<double> agg_photo(const PointCloud& pc, const FrameSet& fs, const DynamicMask& mask,
                              double occlusion_margin) {
  return view_scores(pc, fs, mask, occlusion_margin).photo;
}

double default_occlusion_margin(const FrameSet& fs, const RefineConfig& cfg) {
  if (cfg.occlusion_margin) return *cfg.occlusion_margin;
  const auto depths = fs.depth.as_f32();
  const double median = median_valid_depth(depths);
  if (!(median > 0.0)) throw ValidationError("frame set has no valid depth");
  return cfg.occlusion_fraction * median;
}

SorResult sor_filter(const PointCloud& pc, int k, double sigma) {
  if (k < 1) throw ValidationError("sor_filter: k must be >= 1");
  if (!(sigma > 0.0)) throw ValidationError("sor_filter: sigma must be > 0");
  const std::size_t n = pc.size();
  const auto kk = static_cast<std::size_t>(k);
  if (n <= kk) {
    throw ValidationError("sor_filter: " + std::to_string(n) + " points, need more than k = " +
                          std::to_string(k));
  }
  SorResult out;
  out.mean_distance.assign(n, 0.0);
  const KdTree<double> tree(pc.positions);
  parallel_chunks(n, kPointChunk, [&](std::size_t, std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const auto neighbors = tree.nearest(pc.positions.data() + 3 * i, kk, i);
      double sum = 0.0;
      for (const auto& nb : neighbors) sum += std::sqrt(nb.distance_sq);
      out.mean_distance[i] = sum / static_cast<double>(kk);
    }
  });
  double mean = 0.0;
  for (double d : out.mean_distance) mean += d;
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double d : out.mean_distance) ss += (d - mean) * (d - mean);
  const double stddev = std::sqrt(ss / static_cast<double>(n - 1));
  out.threshold = mean + sigma * stddev;
  for (std::size_t i = 0; i < n; ++i) {
    (out.mean_distance[i] > out.threshold ? out.removed : out.kept).push_back(i);
  }
  return out;
}

std::vector<int> cluster_points(const PointCloud& pc, double voxel) {
  if (!(voxel > 0.0)) throw ValidationError("cluster_points: voxel size must be > 0");
  const std::size_t n = pc.size();
  std::unordered_map<VoxelKey, std::size_t, VoxelHash> voxels;
  voxels.reserve(n / 2 + 1);
  std::vector<std::size_t> point_voxel(n);
  std::vector<VoxelKey> keys;
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = pc.positions.row(static_cast<Eigen::Index>(i));
    const VoxelKey key{static_cast<std::int64_t>(std::floor(row(0) / voxel)),
                       static_cast<std::int64_t>(std::floor(row(1) / voxel)),
                       static_cast<std::int64_t>(std::floor(row(2) / voxel))};
    const auto [it, inserted] = voxels.try_emplace(key, keys.size());
    if (inserted) keys.push_back(key);
    point_voxel[i] = it->second;
  }
  std::vector<std::size_t> parent(keys.size());
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  for (std::size_t v = 0; v < keys.size(); ++v) {
    for (std::int64_t dx = -1; dx <= 1; ++dx) {
      for (std::int64_t dy = -1; dy <= 1; ++dy) {
        for (std::int64_t dz = -1; dz <= 1; ++dz) {
          if (dx == 0 && dy == 0 && dz == 0) continue;
          const auto it = voxels.find({keys[v].x + dx, keys[v].y + dy, keys[v].z + dz});
          if (it == voxels.end()) continue;
          const std::size_t a = find_root(parent, v), b = find_root(parent, it->second);
          if (a != b) parent[std::max(a, b)] = std::min(a, b);
        }
      }
    }
  }
  // Voxels are numbered by first point, so numbering roots in point order
  // labels clusters by their minimum point index.
  std::vector<int> root_label(keys.size(), -1);
  std::vector<int> labels(n);
  int next = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t root = find_root(parent, point_voxel[i]);
    if (root_label[root] < 0) root_label[root] = next++;
    labels[i] = root_label[root];
  }
  return labels;
}

std::vector<double> normalize_scores(const std::vector<double>& values) {
  std::vector<double> out(values.size(), 0.0);
  if (values.empty()) return out;
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  if (!std::isfinite(*lo) || !std::isfinite(*hi)) {
    throw NumericalError("normalize_scores: non-finite score");
  }
  if (*hi > *lo) {
    const double span = *hi - *lo;
    std::transform(values.begin(), values.end(), out.begin(),
                   [&](double v) { return (v - *lo) / span; });
  }
  return out;
}

RefineResult refine_masks(const FrameSet& fs, const DynamicMask& initial, const RefineConfig& cfg) {
  cfg.validate();
  const FrameSetInfo& info = fs.info;
  if (initial.frames != info.frames) throw SchemaError("initial mask frame count mismatch");
  const DynamicMask initial_pixels = to_pixel_mask(initial, info);

  RefineResult result;
  result.occlusion_margin = default_occlusion_margin(fs, cfg);
  result.mask = initial_pixels;

  PointCloud& cloud = result.cloud;
  cloud.resize(0);
  std::vector<std::size_t> frame_begin{0};
  for (std::size_t f = 0; f < info.frames; ++f) {
    unproject_into(cloud, fs.depth_map(f), fs.cameras[f], fs.image(f), static_cast<int>(f));
    frame_begin.push_back(cloud.size());
  }
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto& s = cloud.source[i];
    cloud.dynamic_flag[i] = initial_pixels.at(static_cast<std::size_t>(s.frame),
                                              static_cast<std::size_t>(s.row),
                                              static_cast<std::size_t>(s.col));
  }
  logger().info("refine: {} points from {} frames", cloud.size(), info.frames);
  const auto k = static_cast<std::size_t>(cfg.sor_k);
  if (cloud.size() <= k) {
    logger().warn("DegenerateRefinement: too few points; keeping the initial mask");
    result.degenerate = true;
    return result;
  }

  spdlog::stopwatch watch;
  std::size_t removed = 0;
  if (cfg.sor_scope == SorScope::Pooled) {
    const auto sor = sor_filter(cloud, cfg.sor_k, cfg.sor_sigma);
    result.kept = sor.kept;
    removed = sor.removed.size();
  } else {
    for (std::size_t f = 0; f < info.frames; ++f) {
      const std::size_t begin = frame_begin[f], end = frame_begin[f + 1];
      if (end - begin <= k) {
        for (std::size_t i = begin; i < end; ++i) result.kept.push_back(i);
        continue;
      }
      std::vector<std::size_t> members(end - begin);
      std::iota(members.begin(), members.end(), begin);
      const auto sor = sor_filter(cloud.subset(members), cfg.sor_k, cfg.sor_sigma);
      for (std::size_t i : sor.kept) result.kept.push_back(begin + i);
      removed += sor.removed.size();
    }
  }
  const PointCloud kept = cloud.subset(result.kept);
  logger().info("refine: SOR removed {} points ({:.2f}s)", removed, watch.elapsed().count());

  watch.reset();
  auto raw = view_scores(kept, fs, initial, result.occlusion_margin);
  logger().info("refine: view scores ({:.2f}s)", watch.elapsed().count());
  result.scores.proj = normalize_scores(raw.proj);
  result.scores.photo = normalize_scores(raw.photo);
  result.scores.total.resize(kept.size());
  for (std::size_t i = 0; i < kept.size(); ++i) {
    result.scores.total[i] = result.scores.proj[i] + cfg.lambda * result.scores.photo[i];
  }
  if (std::all_of(result.scores.total.begin(), result.scores.total.end(),
                  [](double v) { return v == 0.0; })) {
    logger().warn("DegenerateRefinement: all refinement scores are zero; keeping the initial mask");
    result.degenerate = true;
    return result;
  }

  if (cfg.voxel_size) {
    result.voxel_size = *cfg.voxel_size;
  } else {
    // Same-frame pixel footprint (depth / focal) as the point spacing; points
    // pooled across views interleave and would understate it.
    std::vector<double> spacing(kept.size());
    for (std::size_t i = 0; i < kept.size(); ++i) {
      const auto& s = kept.source[i];
      const double d = fs.depth_map(static_cast<std::size_t>(s.frame))(s.row, s.col);
      const Camera& cam = fs.cameras[static_cast<std::size_t>(s.frame)];
      spacing[i] = d / std::min(cam.fx, cam.fy);
    }
    result.voxel_size = cfg.voxel_factor * median_of(std::move(spacing));
  }
  result.cluster = cluster_points(kept, result.voxel_size);
  const int clusters =
      result.cluster.empty() ? 0 : *std::max_element(result.cluster.begin(), result.cluster.end()) + 1;
  std::vector<double> sum(static_cast<std::size_t>(clusters), 0.0);
  std::vector<std::size_t> members(static_cast<std::size_t>(clusters), 0);
  for (std::size_t i = 0; i < kept.size(); ++i) {
    sum[static_cast<std::size_t>(result.cluster[i])] += result.scores.total[i];
    ++members[static_cast<std::size_t>(result.cluster[i])];
  }
  result.cluster_score.resize(sum.size());
  for (std::size_t c = 0; c < sum.size(); ++c) {
    result.cluster_score[c] = sum[c] / static_cast<double>(members[c]);
  }

  std::vector<std::uint8_t> cluster_dynamic(sum.size(), 0);
  if (cfg.tau) {
    result.tau = *cfg.tau;
    for (std::size_t c = 0; c < sum.size(); ++c) {
      cluster_dynamic[c] = result.cluster_score[c] > result.tau ? 1 : 0;
    }
  } else {
    // Otsu over the per-point cluster means, so each cluster weighs in by
    // its size and stray fragments cannot move the cut.
    const auto [lo, hi] =
        std::minmax_element(result.cluster_score.begin(), result.cluster_score.end());
    const double span = *hi - *lo;
    double alpha = 1.0;
    if (span > 0.0) {
      std::vector<double> per_point(kept.size());
      for (std::size_t i = 0; i < kept.size(); ++i) {
        per_point[i] = (result.cluster_score[std::size_t(result.cluster[i])] - *lo) / span;
      }
      alpha = otsu_threshold(per_point);
    }
    result.tau = *lo + alpha * span;
    for (std::size_t c = 0; c < sum.size(); ++c) {
      cluster_dynamic[c] = span > 0.0 && (result.cluster_score[c] - *lo) / span > alpha ? 1 : 0;
    }
  }
  logger().info("refine: {} clusters, tau = {:.6f}", clusters, result.tau);

  for (std::size_t i = 0; i < kept.size(); ++i) {
    const std::uint8_t flag = cluster_dynamic[static_cast<std::size_t>(result.cluster[i])];
    const std::size_t index = result.kept[i];
    cloud.dynamic_flag[index] = flag;
    const auto& s = cloud.source[index];
    result.mask.at(static_cast<std::size_t>(s.frame), static_cast<std::size_t>(s.row),
                   static_cast<std::size_t>(s.col)) = flag;
  }
  return result;
}

}  // namespace gramdyn
