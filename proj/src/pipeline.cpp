#include "gramdyn/pipeline.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "gramdyn/error.hpp"
#include "gramdyn/frameset.hpp"
#include "gramdyn/intervene.hpp"
#include "gramdyn/log.hpp"
#include "gramdyn/refine.hpp"
#include "gramdyn/saliency.hpp"
#include "gramdyn/synth.hpp"
#include "gramdyn/threshold.hpp"

namespace gramdyn {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

TensorBlob map_to_blob(const FrameMap& map) {
  std::vector<float> values(static_cast<std::size_t>(map.size()));
  for (Eigen::Index i = 0; i < map.size(); ++i) {
    values[static_cast<std::size_t>(i)] = static_cast<float>(map.data()[i]);
  }
  return TensorBlob::f32({static_cast<std::size_t>(map.rows()), static_cast<std::size_t>(map.cols())},
                         std::move(values));
}

FrameMap map_from_blob(const TensorBlob& blob, const FrameSetInfo& info, const fs::path& path) {
  if (blob.dtype() != DType::F32 || blob.dims() != std::vector<std::size_t>{info.frames, info.tokens()}) {
    throw SchemaError(path.filename().string() + ": expected f32 [" + std::to_string(info.frames) +
                      ", " + std::to_string(info.tokens()) + "], found " + dtype_name(blob.dtype()) +
                      " " + format_dims(blob.dims()));
  }
  FrameMap map(static_cast<Eigen::Index>(info.frames), static_cast<Eigen::Index>(info.tokens()));
  const auto values = blob.as_f32();
  for (std::size_t i = 0; i < values.size(); ++i) map.data()[i] = values[i];
  return map;
}

FrameSet load_frameset(const RunLayout& layout) {
  logger().info("reading frame set {}", layout.frameset.string());
  return read_frameset(layout.frameset);
}

DynamicMask load_mask(const fs::path& path, const FrameSetInfo& info) {
  return DynamicMask::from_blob(read_blob(path), info);
}

std::string fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

json seg_json(const SegReport& r) {
  json sequences = json::array();
  for (const auto& s : r.sequences) {
    sequences.push_back({{"JM", s.jm}, {"JR", s.jr}, {"FM", s.fm}, {"FR", s.fr},
                         {"iou", s.iou}, {"f", s.f}});
  }
  return {{"JM", r.jm}, {"JR", r.jr}, {"FM", r.fm}, {"FR", r.fr}, {"sequences", sequences}};
}

json pose_json(const TrajMetrics& m) {
  const auto& a = m.alignment;
  json rotation = json::array();
  for (int r = 0; r < 3; ++r) {
    rotation.push_back({a.rotation(r, 0), a.rotation(r, 1), a.rotation(r, 2)});
  }
  return {{"ATE", m.ate},
          {"RTE", m.rte},
          {"RRE", m.rre},
          {"alignment",
           {{"scale", a.scale},
            {"rotation", rotation},
            {"translation", {a.translation.x(), a.translation.y(), a.translation.z()}}}}};
}

json summary_json(const Summary& s) { return {{"mean", s.mean}, {"median", s.median}}; }

json recon_json(const ReconReport& r) {
  return {{"accuracy", summary_json(r.accuracy)},
          {"completeness", summary_json(r.completeness)},
          {"distance", summary_json(r.distance)}};
}

std::string seg_lines(const SegReport& r, const std::string& prefix) {
  // Reported x100, the usual convention for these benchmarks.
  return prefix + "JM " + fixed(100 * r.jm, 2) + "\n" + prefix + "JR " + fixed(100 * r.jr, 2) +
         "\n" + prefix + "FM " + fixed(100 * r.fm, 2) + "\n" + prefix + "FR " +
         fixed(100 * r.fr, 2) + "\n";
}

}  // namespace

RunLayout::RunLayout(fs::path run_dir, std::optional<fs::path> frameset_dir)
    : run(std::move(run_dir)), frameset(frameset_dir.value_or(run / "frameset")) {}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("short write on " + path.string());
}

void stage_gen(const SceneSpec& scene, const RunLayout& layout) {
  logger().info("gen: seed {} -> {}", scene.seed, layout.frameset.string());
  const RenderedScene rendered = gen_scene(scene);
  write_frameset(rendered.frameset, layout.frameset);
}

void stage_mine(const PipelineConfig& cfg, const RunLayout& layout) {
  const FrameSet fs = load_frameset(layout);
  cfg.validate_against(fs);
  const StatsTable stats = compute_stats(fs, cfg.saliency);
  fs::create_directories(layout.stats_dir());
  for (const auto& [key, maps] : stats) {
    write_blob(map_to_blob(maps.mean), layout.stats_dir() / mean_blob_name(maps.group));
    write_blob(map_to_blob(maps.variance), layout.stats_dir() / variance_blob_name(maps.group));
  }
  const SaliencyMap sal = compute_saliency(stats, cfg.saliency);
  write_blob(map_to_blob(sal.dyn), layout.dyn());
  write_blob(map_to_blob(sal.w_shallow), layout.band("shallow"));
  write_blob(map_to_blob(sal.w_middle), layout.band("middle"));
  write_blob(map_to_blob(sal.w_deep), layout.band("deep"));
  logger().info("mine: {} stat groups written", stats.size());
}

double stage_mask(const PipelineConfig& cfg, std::uint64_t seed, const RunLayout& layout) {
  const FrameSet fs = load_frameset(layout);
  cfg.validate_against(fs);
  const FrameSetInfo& info = fs.info;
  SaliencyMap sal;
  sal.dyn = map_from_blob(read_blob(layout.dyn()), info, layout.dyn());
  sal.w_shallow = map_from_blob(read_blob(layout.band("shallow")), info, layout.band("shallow"));
  sal.w_middle = map_from_blob(read_blob(layout.band("middle")), info, layout.band("middle"));
  sal.w_deep = map_from_blob(read_blob(layout.band("deep")), info, layout.band("deep"));

  const auto tokens = static_cast<Eigen::Index>(info.frames * info.tokens());
  const Eigen::Map<const RowMatrix<float>> features(fs.features.as_f32().data(), tokens,
                                                    static_cast<Eigen::Index>(info.feature_dim));
  const ClusterAssignment clusters = kmeans_tokens(features, cfg.clusters, seed);
  const DynamicMask mask = binarize(sal, clusters, info, cfg.binarize);
  write_blob(mask.to_blob(), layout.mask_patch());
  char alpha[64];
  std::snprintf(alpha, sizeof alpha, "%.17g\n", mask.alpha);
  write_text(layout.alpha(), alpha);
  logger().info("mask: alpha {:.6f}, {} dynamic tokens", mask.alpha, mask.count());
  return mask.alpha;
}

void stage_refine(const PipelineConfig& cfg, const RunLayout& layout) {
  const FrameSet fs = load_frameset(layout);
  cfg.validate();
  const DynamicMask initial = load_mask(layout.mask_patch(), fs.info);
  const RefineResult result = refine_masks(fs, initial, cfg.refine);
  write_blob(result.mask.to_blob(), layout.mask_pixel());
  export_ply(result.cloud, layout.points());

  const std::size_t n = result.kept.size();
  std::vector<float> scores(3 * n);
  for (std::size_t i = 0; i < n && !result.scores.total.empty(); ++i) {
    scores[3 * i] = static_cast<float>(result.scores.proj[i]);
    scores[3 * i + 1] = static_cast<float>(result.scores.photo[i]);
    scores[3 * i + 2] = static_cast<float>(result.scores.total[i]);
  }
  write_blob(TensorBlob::f32({n, 3}, std::move(scores)), layout.refine_scores());

  const json summary = {{"points", result.cloud.size()},
                        {"kept", n},
                        {"tau", result.tau},
                        {"occlusion_margin", result.occlusion_margin},
                        {"voxel_size", result.voxel_size},
                        {"degenerate", result.degenerate},
                        {"cluster_score", result.cluster_score}};
  write_text(layout.refine_summary(), summary.dump(2) + "\n");
}

void stage_suppress(const PipelineConfig& cfg, const RunLayout& layout) {
  const FrameSet fs = load_frameset(layout);
  cfg.validate();
  const DynamicMask mask = load_mask(layout.mask_patch(), fs.info);
  const KeySuppression ks = build_key_suppression(mask, cfg.suppress_layers, cfg.suppress_mode);
  write_key_suppression(ks, layout.key_mask());
}

SegReport eval_seg(const FrameSet& fs, const DynamicMask& pred, double boundary_fraction) {
  if (fs.gt.masks.empty()) throw SchemaError("frame set has no ground-truth masks");
  const DynamicMask gt = DynamicMask::from_blob(fs.gt.masks, fs.info);
  const DynamicMask pixels = to_pixel_mask(pred, fs.info);
  const double diagonal = std::hypot(static_cast<double>(fs.info.height),
                                     static_cast<double>(fs.info.width));
  const std::vector<SequenceScores> seq = {score_sequence(pixels, gt, boundary_fraction * diagonal)};
  return seg_report(seq);
}

TrajMetrics eval_pose(const FrameSet& estimate, const FrameSet& reference) {
  if (reference.gt.trajectory.empty()) throw SchemaError("frame set has no ground-truth trajectory");
  return traj_metrics(trajectory_from_cameras(estimate.cameras),
                      trajectory_from_blob(reference.gt.trajectory));
}

ReconReport eval_recon(const PointCloud& pred, const FrameSet& reference, const Sim3& align,
                       std::size_t stride) {
  if (reference.gt.points.empty()) throw SchemaError("frame set has no ground-truth points");
  if (stride < 1) throw ValidationError("recon stride must be >= 1");
  std::vector<std::size_t> chosen;
  std::size_t seen = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred.dynamic_flag[i]) continue;
    if (seen++ % stride == 0) chosen.push_back(i);
  }
  const PointCloud statics = pred.subset(chosen);

  const auto pts = reference.gt.points.as_f32();
  PointCloud gt;
  gt.resize(pts.size() / 3);
  for (std::size_t i = 0; i < gt.size(); ++i) {
    for (int a = 0; a < 3; ++a) gt.positions(static_cast<Eigen::Index>(i), a) = pts[3 * i + std::size_t(a)];
  }
  return recon_metrics(statics, gt, align);
}

std::string seg_report_text(const SegReport& r) { return seg_lines(r, ""); }
std::string seg_report_json(const SegReport& r) { return seg_json(r).dump(2) + "\n"; }

std::string pose_report_text(const TrajMetrics& m) {
  std::ostringstream out;
  out << "ATE " << fixed(m.ate, 6) << "\nRTE " << fixed(m.rte, 6) << "\nRRE " << fixed(m.rre, 6)
      << "\n";
  return out.str();
}
std::string pose_report_json(const TrajMetrics& m) { return pose_json(m).dump(2) + "\n"; }

std::string recon_report_text(const ReconReport& r) {
  std::ostringstream out;
  out << "accuracy_mean " << fixed(r.accuracy.mean, 6) << "\naccuracy_median "
      << fixed(r.accuracy.median, 6) << "\ncompleteness_mean " << fixed(r.completeness.mean, 6)
      << "\ncompleteness_median " << fixed(r.completeness.median, 6) << "\ndistance_mean "
      << fixed(r.distance.mean, 6) << "\ndistance_median " << fixed(r.distance.median, 6) << "\n";
  return out.str();
}
std::string recon_report_json(const ReconReport& r) { return recon_json(r).dump(2) + "\n"; }

std::string pipeline_report_text(const PipelineReport& r) {
  std::ostringstream out;
  out << "alpha " << fixed(r.alpha, 6) << "\n";
  out << seg_lines(r.initial, "initial_");
  out << "tau " << fixed(r.tau, 6) << "\n";
  out << seg_lines(r.refined, "");
  out << pose_report_text(r.pose);
  out << recon_report_text(r.recon);
  out << "suppressed_keys " << r.suppressed_keys << "\n";
  return out.str();
}

std::string pipeline_report_json(const PipelineReport& r) {
  const json doc = {{"alpha", r.alpha},
                    {"tau", r.tau},
                    {"segmentation", {{"initial", seg_json(r.initial)}, {"refined", seg_json(r.refined)}}},
                    {"pose", pose_json(r.pose)},
                    {"recon", recon_json(r.recon)},
                    {"suppressed_keys", r.suppressed_keys}};
  return doc.dump(2) + "\n";
}

PipelineReport run_pipeline(const RunConfig& config, const RunLayout& layout, bool generate) {
  config.scene.validate();
  config.pipeline.validate();
  fs::create_directories(layout.run);
  if (generate) stage_gen(config.scene, layout);
  write_text(layout.config(), config_to_json(config));

  {
    // Everything the later stages read is checked up front.
    const FrameSet fs = load_frameset(layout);
    config.pipeline.validate_against(fs);
  }
  const PipelineConfig& cfg = config.pipeline;
  stage_mine(cfg, layout);
  PipelineReport report;
  report.alpha = stage_mask(cfg, config.scene.seed, layout);
  stage_refine(cfg, layout);
  stage_suppress(cfg, layout);

  const FrameSet fs = load_frameset(layout);
  report.initial = eval_seg(fs, load_mask(layout.mask_patch(), fs.info), cfg.boundary_fraction);
  report.refined = eval_seg(fs, load_mask(layout.mask_pixel(), fs.info), cfg.boundary_fraction);
  report.pose = eval_pose(fs, fs);
  report.recon = eval_recon(read_ply(layout.points()), fs, report.pose.alignment, kReconStride);
  report.tau = json::parse(std::ifstream(layout.refine_summary())).at("tau").get<double>();
  const TensorBlob key_mask = read_blob(layout.key_mask());
  for (std::uint8_t v : key_mask.as_u8()) report.suppressed_keys += v;

  write_text(layout.run / "report.txt", pipeline_report_text(report));
  write_text(layout.run / "report.json", pipeline_report_json(report));
  logger().info("pipeline: JM {:.4f} FM {:.4f} (initial JM {:.4f} FM {:.4f})", report.refined.jm,
                report.refined.fm, report.initial.jm, report.initial.fm);
  return report;
}

}  // namespace gramdyn
