#include "gramdyn/cli.hpp"

#include <filesystem>
#include <iostream>
#include <optional>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "gramdyn/config.hpp"
#include "gramdyn/error.hpp"
#include "gramdyn/frameset.hpp"
#include "gramdyn/parallel.hpp"
#include "gramdyn/pipeline.hpp"
#include "gramdyn/point_cloud.hpp"

namespace gramdyn {

namespace fs = std::filesystem;

namespace {

/// Flags shared by the subcommands; unset optionals leave the config alone.
struct Options {
  std::string config;
  std::string out;
  std::string frameset;
  int threads = 0;
  std::optional<std::uint64_t> seed;

  std::optional<int> window_n;
  std::optional<int> window_stride;
  std::string layers_shallow, layers_middle, layers_deep, layers_deep_var;
  std::optional<int> heads;
  std::optional<int> clusters;
  bool per_token = false;
  std::optional<double> lambda;
  std::optional<double> tau;
  std::optional<int> sor_k;
  std::optional<double> sor_sigma;
  std::string sor_scope;
  std::string suppress_layers;
  std::string mode;
  std::optional<double> boundary_fraction;

  // stage-specific inputs
  std::string pred;
  std::string cloud;
  std::string ply_mode = "merged";
  std::string output;
  std::size_t stride = 1;
  bool no_gen = false;
};

void add_common(CLI::App* app, Options& o) {
  app->add_option("--out", o.out, "Run directory holding every stage's files")->required();
  app->add_option("--config", o.config, "Config file (JSON with comments; see configs/default.cfg)");
  app->add_option("--frameset", o.frameset, "Frame set directory (default <out>/frameset)");
  app->add_option("--threads", o.threads, "Worker threads, 0 = all cores; output does not depend on it")
      ->check(CLI::NonNegativeNumber);
}

void add_seed(CLI::App* app, Options& o) {
  app->add_option("--seed", o.seed, "Scene seed, also seeding token k-means (default from config)");
}

void add_pipeline_flags(CLI::App* app, Options& o) {
  app->add_option("--window-n", o.window_n, "Source frames on each side of the reference frame");
  app->add_option("--window-stride", o.window_stride, "Frame stride inside the window");
  app->add_option("--layers-shallow", o.layers_shallow, "Shallow layers for S^KK and V^QK, e.g. 1");
  app->add_option("--layers-middle", o.layers_middle, "Middle layers for S^QQ, e.g. 4-8");
  app->add_option("--layers-deep", o.layers_deep, "Deep layers for the S^QQ term, e.g. 18-22");
  app->add_option("--layers-deep-var", o.layers_deep_var, "Deep layers for the V^QQ term, e.g. 19,20");
  app->add_option("--heads", o.heads, "Heads per Gram product (1 = channels flattened)");
  app->add_option("--k", o.clusters, "Token k-means cluster count");
  app->add_flag("--per-token", o.per_token, "Otsu on token saliency instead of cluster scores");
  app->add_option("--lambda", o.lambda, "Photometric weight in the refinement score");
  app->add_option("--tau", o.tau, "Fixed refinement threshold on raw cluster scores (default Otsu)");
  app->add_option("--sor-k", o.sor_k, "Outlier-removal neighbor count");
  app->add_option("--sor-sigma", o.sor_sigma, "Outlier-removal standard-deviation multiplier");
  app->add_option("--sor-scope", o.sor_scope, "Outlier removal per frame or pooled")
      ->check(CLI::IsMember({"per-frame", "pooled"}));
  app->add_option("--suppress-layers", o.suppress_layers, "Layers whose dynamic keys are suppressed, e.g. 1-5");
  app->add_option("--mode", o.mode, "Key suppression mode")
      ->check(CLI::IsMember({"neg-inf-bias", "zero-key"}));
  app->add_option("--boundary-fraction", o.boundary_fraction,
                  "Boundary-F tolerance as a fraction of the image diagonal");
}

RunConfig resolve(const Options& o) {
  RunConfig cfg = o.config.empty() ? RunConfig{} : load_config(o.config);
  if (o.seed) cfg.scene.seed = *o.seed;
  PipelineConfig& p = cfg.pipeline;
  if (o.window_n) p.saliency.window.half_count = *o.window_n;
  if (o.window_stride) p.saliency.window.stride = *o.window_stride;
  if (!o.layers_shallow.empty()) p.saliency.shallow_layers = parse_layer_list(o.layers_shallow);
  if (!o.layers_middle.empty()) p.saliency.middle_layers = parse_layer_list(o.layers_middle);
  if (!o.layers_deep.empty()) p.saliency.deep_mean_layers = parse_layer_list(o.layers_deep);
  if (!o.layers_deep_var.empty()) p.saliency.deep_var_layers = parse_layer_list(o.layers_deep_var);
  if (o.heads) p.saliency.gram.heads = *o.heads;
  if (o.clusters) p.clusters = *o.clusters;
  if (o.per_token) p.binarize.per_token = true;
  if (o.lambda) p.refine.lambda = *o.lambda;
  if (o.tau) p.refine.tau = *o.tau;
  if (o.sor_k) p.refine.sor_k = *o.sor_k;
  if (o.sor_sigma) p.refine.sor_sigma = *o.sor_sigma;
  if (!o.sor_scope.empty()) p.refine.sor_scope = parse_sor_scope(o.sor_scope);
  if (!o.suppress_layers.empty()) p.suppress_layers = parse_layer_list(o.suppress_layers);
  if (!o.mode.empty()) p.suppress_mode = parse_suppression_mode(o.mode);
  if (o.boundary_fraction) p.boundary_fraction = *o.boundary_fraction;
  cfg.scene.validate();
  p.validate();
  return cfg;
}

RunLayout layout_of(const Options& o) {
  return RunLayout(o.out, o.frameset.empty() ? std::nullopt : std::optional<fs::path>(o.frameset));
}

void emit(std::ostream& out, const RunLayout& layout, const std::string& stem,
          const std::string& text, const std::string& json) {
  write_text(layout.run / (stem + ".txt"), text);
  write_text(layout.run / (stem + ".json"), json);
  out << text;
}

std::string error_line(const char* kind, const std::string& message) {
  return nlohmann::json{{"error", kind}, {"message", message}}.dump() + "\n";
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Dynamic-region mining from attention Gram statistics, with mask refinement, "
               "key suppression and evaluation. Subcommands share a run directory (--out)."};
  app.name("gramdyn");
  app.require_subcommand(1);
  Options o;

  auto* gen = app.add_subcommand("gen", "Render the synthetic scene into <out>/frameset");
  add_common(gen, o);
  add_seed(gen, o);

  auto* mine = app.add_subcommand("mine", "Gram statistics and saliency: stats/, dyn.vg4t, w_*.vg4t");
  add_common(mine, o);
  add_pipeline_flags(mine, o);

  auto* mask = app.add_subcommand("mask", "Cluster and threshold dyn.vg4t: mask_patch.vg4t, alpha.txt");
  add_common(mask, o);
  add_seed(mask, o);
  add_pipeline_flags(mask, o);

  auto* refine = app.add_subcommand(
      "refine", "Refine mask_patch.vg4t: mask_pixel.vg4t, points.ply, refine_scores.vg4t");
  add_common(refine, o);
  add_pipeline_flags(refine, o);

  auto* suppress = app.add_subcommand("suppress", "Key-suppression blob key_mask.vg4t from mask_patch.vg4t");
  add_common(suppress, o);
  add_pipeline_flags(suppress, o);

  auto* eval = app.add_subcommand("eval", "Evaluate predictions against the frame set's ground truth");
  eval->require_subcommand(1);
  auto* eval_seg_cmd = eval->add_subcommand("seg", "JM/JR/FM/FR of a mask blob: seg_report.{txt,json}");
  add_common(eval_seg_cmd, o);
  add_pipeline_flags(eval_seg_cmd, o);
  eval_seg_cmd->add_option("--pred", o.pred, "Mask blob, patch or pixel level (default <out>/mask_pixel.vg4t)");
  auto* eval_pose_cmd = eval->add_subcommand("pose", "ATE/RTE/RRE of a frame set's cameras: pose_report.{txt,json}");
  add_common(eval_pose_cmd, o);
  eval_pose_cmd->add_option("--pred", o.pred, "Frame set whose cameras are evaluated (default --frameset)");
  auto* eval_recon_cmd = eval->add_subcommand("recon", "Accuracy/completeness of static points: recon_report.{txt,json}");
  add_common(eval_recon_cmd, o);
  eval_recon_cmd->add_option("--pred", o.pred, "Flagged PLY (default <out>/points.ply)");
  eval_recon_cmd->add_option("--stride", o.stride, "Use every n-th static point")->check(CLI::PositiveNumber);

  auto* ply = app.add_subcommand("export-ply", "Filter a flagged PLY into merged, static or dynamic points");
  add_common(ply, o);
  ply->add_option("--cloud", o.cloud, "Input PLY (default <out>/points.ply)");
  ply->add_option("--ply-mode", o.ply_mode, "Which points to keep")
      ->check(CLI::IsMember({"merged", "static-only", "dynamic-only"}));
  ply->add_option("--output", o.output, "Output PLY path")->required();

  auto* pipe = app.add_subcommand("pipeline", "gen through eval in one call: report.{txt,json}");
  add_common(pipe, o);
  add_seed(pipe, o);
  add_pipeline_flags(pipe, o);
  pipe->add_flag("--no-gen", o.no_gen, "Reuse the existing frame set instead of rendering one");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  }

  try {
    const int threads = o.threads > 0 ? o.threads : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    set_thread_count(threads);
    const RunConfig cfg = resolve(o);
    const RunLayout layout = layout_of(o);

    if (gen->parsed()) {
      stage_gen(cfg.scene, layout);
    } else if (mine->parsed()) {
      stage_mine(cfg.pipeline, layout);
    } else if (mask->parsed()) {
      const double alpha = stage_mask(cfg.pipeline, cfg.scene.seed, layout);
      out << "alpha " << alpha << "\n";
    } else if (refine->parsed()) {
      stage_refine(cfg.pipeline, layout);
    } else if (suppress->parsed()) {
      stage_suppress(cfg.pipeline, layout);
    } else if (eval_seg_cmd->parsed()) {
      const FrameSet frames = read_frameset(layout.frameset);
      const fs::path pred = o.pred.empty() ? layout.mask_pixel() : fs::path(o.pred);
      const SegReport r = eval_seg(frames, DynamicMask::from_blob(read_blob(pred), frames.info),
                                   cfg.pipeline.boundary_fraction);
      emit(out, layout, "seg_report", seg_report_text(r), seg_report_json(r));
    } else if (eval_pose_cmd->parsed()) {
      const FrameSet reference = read_frameset(layout.frameset);
      const TrajMetrics m = o.pred.empty() ? eval_pose(reference, reference)
                                           : eval_pose(read_frameset(o.pred), reference);
      emit(out, layout, "pose_report", pose_report_text(m), pose_report_json(m));
    } else if (eval_recon_cmd->parsed()) {
      const FrameSet reference = read_frameset(layout.frameset);
      const fs::path pred = o.pred.empty() ? layout.points() : fs::path(o.pred);
      const ReconReport r = eval_recon(read_ply(pred), reference, Sim3{}, o.stride);
      emit(out, layout, "recon_report", recon_report_text(r), recon_report_json(r));
    } else if (ply->parsed()) {
      const fs::path cloud = o.cloud.empty() ? layout.points() : fs::path(o.cloud);
      const std::size_t n = export_ply(read_ply(cloud), o.output, parse_ply_mode(o.ply_mode));
      out << "wrote " << n << " points\n";
    } else if (pipe->parsed()) {
      const PipelineReport r = run_pipeline(cfg, layout, !o.no_gen);
      out << pipeline_report_text(r);
    }
  } catch (const Error& e) {
    err << error_line(e.kind(), e.what());
    return kExitStageError;
  } catch (const fs::filesystem_error& e) {
    err << error_line("IoError", e.what());
    return kExitStageError;
  } catch (const std::exception& e) {
    err << error_line("InternalError", e.what());
    return kExitStageError;
  }
  return kExitOk;
}

int run(int argc, const char* const* argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args, std::cout, std::cerr);
}

}  // namespace gramdyn
