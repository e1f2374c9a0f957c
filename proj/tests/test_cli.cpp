#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <iterator>
#include <map>
#include <sys/wait.h>

#include <json.hpp>

#include "test_support.hpp"

using gramdyn::testing::TempDir;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code = -1;
  std::string out, err;
};

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

/// Runs the built binary through the shell, capturing both streams.
Outcome gramdyn_cli(const std::string& args, const TempDir& scratch) {
  const char* bin = std::getenv("GRAMDYN_BIN");
  REQUIRE_MESSAGE(bin != nullptr, "GRAMDYN_BIN is not set");
  const fs::path out = scratch / "stdout.txt", err = scratch / "stderr.txt";
  const std::string cmd = std::string("'") + bin + "' " + args + " >'" + out.string() + "' 2>'" +
                          err.string() + "'";
  const int status = std::system(cmd.c_str());
  Outcome o;
  o.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  o.out = slurp(out);
  o.err = slurp(err);
  return o;
}

/// Eight 266x266 frames of the fixture; small enough for several full runs.
fs::path small_config(const TempDir& dir, const std::string& extra_features = "") {
  const fs::path path = dir / "small.cfg";
  std::ofstream(path) << R"({
  // Reduced fixture for command-line tests.
  "scene": { "frames": 8, "height": 266, "width": 266,
             "orbit": { "focal": 359.45945945945948 },
             "features": { )" << extra_features << R"( } }
})";
  return path;
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), dir).string()] = slurp(e.path());
  }
  return out;
}

}  // namespace

TEST_CASE("usage errors exit 2 and help exits 0") {
  TempDir dir;
  CHECK(gramdyn_cli("--help", dir).code == 0);
  for (const char* sub : {"gen", "mine", "mask", "refine", "suppress", "pipeline", "export-ply"}) {
    const auto help = gramdyn_cli(std::string(sub) + " --help", dir);
    CHECK(help.code == 0);
    CHECK(help.out.find("--out") != std::string::npos);
  }
  CHECK(gramdyn_cli("frobnicate", dir).code == 2);
  CHECK(gramdyn_cli("", dir).code == 2);
  CHECK(gramdyn_cli("gen", dir).code == 2);  // --out is required
  CHECK(gramdyn_cli("gen --out x --bogus", dir).code == 2);
  CHECK(gramdyn_cli("refine --out x --sor-scope everywhere", dir).code == 2);
  CHECK(gramdyn_cli("eval --out x", dir).code == 2);
}

TEST_CASE("stage errors exit 1 with a machine-readable line") {
  TempDir dir;
  const auto missing = gramdyn_cli("mine --out '" + (dir / "nothing").string() + "'", dir);
  CHECK(missing.code == 1);
  const auto j = nlohmann::json::parse(missing.err);
  CHECK(j.contains("error"));
  CHECK(j.contains("message"));

  const auto bad_config = gramdyn_cli("gen --out '" + (dir / "r").string() + "' --config '" +
                                          (dir / "absent.cfg").string() + "'", dir);
  CHECK(bad_config.code == 1);
  CHECK(nlohmann::json::parse(bad_config.err)["error"] == "NotFound");
}

TEST_CASE("mine names a missing layer") {
  TempDir dir;
  const fs::path cfg = small_config(dir, R"("layer_ids": [1, 5, 6, 7, 8, 18, 19, 20, 21, 22])");
  const std::string common = " --out '" + (dir / "run").string() + "' --config '" + cfg.string() + "'";
  REQUIRE(gramdyn_cli("gen" + common, dir).code == 0);
  const auto mine = gramdyn_cli("mine" + common, dir);
  CHECK(mine.code == 1);
  const auto j = nlohmann::json::parse(mine.err);
  CHECK(j["error"] == "SchemaError");
  CHECK(j["message"].get<std::string>().find("layer 4") != std::string::npos);
}

TEST_CASE("eval seg of the ground truth scores 1") {
  TempDir dir;
  const fs::path cfg = small_config(dir);
  const fs::path run = dir / "run";
  const std::string common = " --out '" + run.string() + "' --config '" + cfg.string() + "'";
  REQUIRE(gramdyn_cli("gen" + common, dir).code == 0);
  const auto seg = gramdyn_cli("eval seg" + common + " --pred '" + (run / "frameset/gt/masks.vg4t").string() + "'", dir);
  REQUIRE(seg.code == 0);
  CHECK(seg.out.find("JM 100.00") != std::string::npos);
  CHECK(seg.out.find("FM 100.00") != std::string::npos);
  const auto j = nlohmann::json::parse(slurp(run / "seg_report.json"));
  CHECK(j["JM"] == 1.0);
  CHECK(j["FM"] == 1.0);

  const auto pose = gramdyn_cli("eval pose" + common, dir);
  REQUIRE(pose.code == 0);
  CHECK(nlohmann::json::parse(slurp(run / "pose_report.json"))["ATE"].get<double>() < 1e-6);
}

TEST_CASE("pipeline equals the stages run one by one and ignores thread count") {
  TempDir dir;
  const fs::path cfg = small_config(dir);
  auto args = [&](const char* run) {
    return " --out '" + (dir / run).string() + "' --config '" + cfg.string() + "'";
  };
  REQUIRE(gramdyn_cli("pipeline --threads 1" + args("one"), dir).code == 0);
  REQUIRE(gramdyn_cli("pipeline --threads 4" + args("four"), dir).code == 0);
  const auto one = snapshot(dir / "one");
  CHECK(one.count("report.txt") == 1);
  CHECK(one == snapshot(dir / "four"));

  for (const char* stage : {"gen", "mine", "mask", "refine", "suppress"}) {
    INFO(stage);
    REQUIRE(gramdyn_cli(std::string(stage) + args("staged"), dir).code == 0);
  }
  const auto staged = snapshot(dir / "staged");
  CHECK(staged.size() > 10);
  for (const auto& [name, bytes] : staged) {
    INFO(name);
    REQUIRE(one.count(name) == 1);
    CHECK(one.at(name) == bytes);
  }
}

TEST_CASE("export-ply splits the flagged cloud") {
  TempDir dir;
  const fs::path cfg = small_config(dir);
  const std::string common = " --out '" + (dir / "run").string() + "' --config '" + cfg.string() + "'";
  REQUIRE(gramdyn_cli("pipeline" + common, dir).code == 0);
  auto count = [&](const char* mode) {
    const auto o = gramdyn_cli("export-ply" + common + " --ply-mode " + mode + " --output '" +
                                   (dir / (std::string(mode) + ".ply")).string() + "'", dir);
    REQUIRE(o.code == 0);
    return std::stoul(o.out.substr(o.out.find(' ') + 1));
  };
  const auto merged = count("merged"), kept = count("static-only"), dropped = count("dynamic-only");
  CHECK(merged == kept + dropped);
  CHECK(dropped > 0);
  CHECK(kept > dropped);
}
