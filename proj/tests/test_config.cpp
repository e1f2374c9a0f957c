#include <doctest.h>

#include "gramdyn/config.hpp"
#include "gramdyn/error.hpp"
#include "test_support.hpp"

using namespace gramdyn;

namespace {

const std::filesystem::path kDefaultConfig = std::filesystem::path(GRAMDYN_SOURCE_DIR) / "configs/default.cfg";

bool throws_naming(const std::string& text, const std::string& needle) {
  try {
    parse_config(text);
  } catch (const ValidationError& e) {
    return std::string(e.what()).find(needle) != std::string::npos;
  }
  return false;
}

}  // namespace

TEST_CASE("shipped default config equals the built-in defaults") {
  CHECK(config_to_json(load_config(kDefaultConfig)) == config_to_json(RunConfig{}));
  CHECK(config_to_json(parse_config("{}")) == config_to_json(RunConfig{}));
  CHECK(config_to_json(parse_config("// nothing\n{ /* at all */ }")) == config_to_json(RunConfig{}));
}

TEST_CASE("config round trips through its JSON form") {
  const RunConfig edited = parse_config(R"({
    "scene": { "seed": 99, "frames": 6,
               "spheres": [ { "center": [0, 0, 1], "radius": 0.2, "dynamic": true } ] },
    "pipeline": { "window": { "n": 2, "stride": 1 },
                  "layers": { "middle": "4-6" },
                  "threshold": { "per_token": true, "bins": 64 },
                  "refine": { "tau": 0.4, "sor_scope": "pooled" },
                  "suppress": { "layers": "1,3", "mode": "zero-key" } }
  })");
  CHECK(edited.scene.seed == 99);
  CHECK(edited.scene.spheres.size() == 1);
  CHECK(edited.scene.planes.size() == 2);
  CHECK(edited.pipeline.saliency.middle_layers == std::vector<int>{4, 5, 6});
  CHECK(edited.pipeline.suppress_layers == std::vector<int>{1, 3});
  CHECK(edited.pipeline.suppress_mode == SuppressionMode::ZeroKey);
  CHECK(edited.pipeline.binarize.per_token);
  CHECK(edited.pipeline.refine.tau == 0.4);
  const std::string once = config_to_json(edited);
  CHECK(config_to_json(parse_config(once)) == once);
  CHECK(once != config_to_json(RunConfig{}));
}

TEST_CASE("config errors name the offending key") {
  CHECK(throws_naming(R"({"scene": {"frame": 3}})", "scene.frame"));
  CHECK(throws_naming(R"({"pipeline": {"refine": {"lambda": "big"}}})", "pipeline.refine.lambda"));
  CHECK(throws_naming(R"({"pipeline": {"window": {"n": 1.5}}})", "pipeline.window.n"));
  CHECK(throws_naming(R"({"extra": 1})", "extra"));
  CHECK(throws_naming(R"({"scene": {"seed": -1}})", "scene.seed"));
  CHECK(throws_naming(R"({"pipeline": {"suppress": {"mode": "drop"}}})", "drop"));
  CHECK_THROWS_AS(parse_config("{ \"scene\": "), ValidationError);
  CHECK_THROWS_AS(parse_config("[]"), ValidationError);
  CHECK_THROWS_AS(load_config("/nonexistent/gramdyn.cfg"), NotFound);
}

TEST_CASE("out-of-range values are rejected") {
  CHECK_THROWS_AS(parse_config(R"({"pipeline": {"threshold": {"clusters": 1}}})"), ValidationError);
  CHECK_THROWS_AS(parse_config(R"({"pipeline": {"eval": {"boundary_fraction": 0}}})"), ValidationError);
  CHECK_THROWS_AS(parse_config(R"({"pipeline": {"suppress": {"layers": []}}})"), ValidationError);
  CHECK_THROWS_AS(parse_config(R"({"scene": {"width": 500}})"), ValidationError);
}

TEST_CASE("layer lists") {
  CHECK(parse_layer_list("4-8") == std::vector<int>{4, 5, 6, 7, 8});
  CHECK(parse_layer_list("1,4,5") == std::vector<int>{1, 4, 5});
  CHECK(parse_layer_list("1,4-6") == std::vector<int>{1, 4, 5, 6});
  CHECK(parse_layer_list("7") == std::vector<int>{7});
  for (const char* bad : {"", "a", "4-", "8-4", "1,,2", "1;2", "3-x"}) {
    INFO(bad);
    CHECK_THROWS_AS(parse_layer_list(bad), ValidationError);
  }
}

TEST_CASE("config is checked against a frame set") {
  const FrameSet fs = gramdyn::testing::tiny_frameset({.layers = {1, 4}});
  PipelineConfig cfg;
  CHECK_THROWS_AS(cfg.validate_against(fs), SchemaError);
  cfg.saliency.middle_layers = {4};
  cfg.saliency.deep_var_layers = {4};
  cfg.saliency.deep_mean_layers = {4};
  cfg.clusters = 2;
  CHECK_NOTHROW(cfg.validate_against(fs));
  cfg.clusters = 1000;
  CHECK_THROWS_AS(cfg.validate_against(fs), ValidationError);
}
