#include "gramdyn/frameset.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "gramdyn/error.hpp"

namespace gramdyn {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kFormat = "vg4t-frameset";
constexpr int kManifestVersion = 1;

void expect_dims(const TensorBlob& blob, const std::string& name, DType dtype,
                 const std::vector<std::size_t>& dims) {
  if (blob.empty()) throw SchemaError(name + ": tensor missing");
  if (blob.dtype() != dtype) {
    throw SchemaError(name + ": dtype " + dtype_name(blob.dtype()) + ", expected " +
                      dtype_name(dtype));
  }
  if (blob.dims() != dims) {
    throw SchemaError(name + ": dims " + format_dims(blob.dims()) + " contradict manifest " +
                      format_dims(dims));
  }
}

json camera_to_json(const Camera& cam) {
  json rot = json::array();
  for (int r = 0; r < 3; ++r) {
    rot.push_back({cam.rotation(r, 0), cam.rotation(r, 1), cam.rotation(r, 2)});
  }
  return {{"fx", cam.fx},
          {"fy", cam.fy},
          {"cx", cam.cx},
          {"cy", cam.cy},
          {"rotation", rot},
          {"translation", {cam.translation.x(), cam.translation.y(), cam.translation.z()}}};
}

Camera camera_from_json(const json& j) {
  Camera cam;
  cam.fx = j.at("fx").get<double>();
  cam.fy = j.at("fy").get<double>();
  cam.cx = j.at("cx").get<double>();
  cam.cy = j.at("cy").get<double>();
  const auto& rot = j.at("rotation");
  if (rot.size() != 3) throw SchemaError("camera rotation must be 3x3");
  for (int r = 0; r < 3; ++r) {
    if (rot[r].size() != 3) throw SchemaError("camera rotation must be 3x3");
    for (int c = 0; c < 3; ++c) cam.rotation(r, c) = rot[r][c].get<double>();
  }
  const auto& t = j.at("translation");
  if (t.size() != 3) throw SchemaError("camera translation must have 3 entries");
  for (int i = 0; i < 3; ++i) cam.translation[i] = t[i].get<double>();
  return cam;
}

}  // namespace

fs::path layer_blob_path(char which, int layer) {
  char name[32];
  std::snprintf(name, sizeof name, "%c_l%02d.vg4t", which, layer);
  return fs::path("tensors") / name;
}

namespace {

std::string layer_name(char which, int layer) {
  return std::string(which == 'q' ? "query" : "key") + " tensor for layer " +
         std::to_string(layer) + " (" + layer_blob_path(which, layer).generic_string() + ")";
}

}  // namespace

FrameSet FrameSet::allocate(const FrameSetInfo& info) {
  FrameSet out;
  out.info = info;
  out.cameras.assign(info.frames, Camera{});
  const auto F = info.frames, H = info.height, W = info.width, Np = info.tokens();
  out.images = TensorBlob::zeros(DType::F32, {F, H, W, 3});
  out.depth = TensorBlob::zeros(DType::F32, {F, H, W});
  out.features = TensorBlob::zeros(DType::F32, {F, Np, info.feature_dim});
  for (int layer : info.layer_ids) {
    out.queries[layer] = TensorBlob::zeros(DType::F32, {F, Np, info.channels});
    out.keys[layer] = TensorBlob::zeros(DType::F32, {F, Np, info.channels});
  }
  return out;
}

bool FrameSet::has_layer(int layer) const {
  return queries.contains(layer) && keys.contains(layer);
}

namespace {

const TensorBlob& layer_blob(const std::map<int, TensorBlob>& blobs, char which, int layer) {
  auto it = blobs.find(layer);
  if (it == blobs.end()) throw SchemaError(layer_name(which, layer) + " is missing");
  return it->second;
}

}  // namespace

TokenMap FrameSet::query(int layer, std::size_t frame) const {
  const auto data = layer_blob(queries, 'q', layer).as_f32();
  const auto stride = info.tokens() * info.channels;
  return TokenMap(data.data() + frame * stride, static_cast<Eigen::Index>(info.tokens()),
                  static_cast<Eigen::Index>(info.channels));
}

TokenMap FrameSet::key(int layer, std::size_t frame) const {
  const auto data = layer_blob(keys, 'k', layer).as_f32();
  const auto stride = info.tokens() * info.channels;
  return TokenMap(data.data() + frame * stride, static_cast<Eigen::Index>(info.tokens()),
                  static_cast<Eigen::Index>(info.channels));
}

TokenMap FrameSet::feature(std::size_t frame) const {
  const auto data = features.as_f32();
  const auto stride = info.tokens() * info.feature_dim;
  return TokenMap(data.data() + frame * stride, static_cast<Eigen::Index>(info.tokens()),
                  static_cast<Eigen::Index>(info.feature_dim));
}

DepthView FrameSet::depth_map(std::size_t frame) const {
  const auto data = depth.as_f32();
  return DepthView(data.data() + frame * info.pixels(), static_cast<Eigen::Index>(info.height),
                   static_cast<Eigen::Index>(info.width));
}

ColorView FrameSet::image(std::size_t frame) const {
  const auto data = images.as_f32();
  return ColorView(data.data() + frame * info.pixels() * 3,
                   static_cast<Eigen::Index>(info.pixels()), 3);
}

void FrameSet::validate() const {
  const auto F = info.frames, H = info.height, W = info.width, P = info.patch;
  if (F < 2) throw ValidationError("frame set needs at least 2 frames, got " + std::to_string(F));
  if (P < 1 || H < 1 || W < 1) throw ValidationError("image and patch size must be positive");
  if (H % P != 0 || W % P != 0) {
    throw ValidationError("image size " + std::to_string(H) + "x" + std::to_string(W) +
                          " is not a multiple of patch size " + std::to_string(P));
  }
  if (info.channels < 1) throw ValidationError("channel_dim must be >= 1");
  if (info.feature_dim < 1) throw ValidationError("feature_dim must be >= 1");
  if (info.layer_ids.empty()) throw ValidationError("layer_ids must not be empty");
  if (cameras.size() != F) {
    throw SchemaError("manifest lists " + std::to_string(cameras.size()) + " cameras for " +
                      std::to_string(F) + " frames");
  }
  for (std::size_t t = 0; t < F; ++t) {
    if (!cameras[t].valid()) {
      throw ValidationError("camera " + std::to_string(t) +
                            " is invalid (need fx, fy > 0 and a proper rotation)");
    }
  }
  const auto Np = info.tokens();
  expect_dims(images, "images (tensors/images.vg4t)", DType::F32, {F, H, W, 3});
  expect_dims(depth, "depth (tensors/depth.vg4t)", DType::F32, {F, H, W});
  expect_dims(features, "features (tensors/features.vg4t)", DType::F32,
              {F, Np, info.feature_dim});
  for (int layer : info.layer_ids) {
    auto q = queries.find(layer);
    auto k = keys.find(layer);
    if (q == queries.end()) throw SchemaError(layer_name('q', layer) + " is missing");
    if (k == keys.end()) throw SchemaError(layer_name('k', layer) + " is missing");
    expect_dims(q->second, layer_name('q', layer), DType::F32, {F, Np, info.channels});
    expect_dims(k->second, layer_name('k', layer), DType::F32, {F, Np, info.channels});
  }
  if (queries.size() != info.layer_ids.size() || keys.size() != info.layer_ids.size()) {
    throw SchemaError("query/key tensors present for layers not listed in layer_ids");
  }
  for (float v : images.as_f32()) {
    if (!(v >= 0.0f && v <= 1.0f)) throw ValidationError("image values must lie in [0, 1]");
  }
  for (float v : depth.as_f32()) {
    if (!std::isfinite(v) || v < 0.0f) throw ValidationError("depth must be finite and >= 0");
  }
  if (!gt.masks.empty()) expect_dims(gt.masks, "gt masks", DType::U8, {F, H, W});
  if (!gt.trajectory.empty()) expect_dims(gt.trajectory, "gt trajectory", DType::F32, {F, 3, 4});
  if (!gt.points.empty()) {
    if (gt.points.dims().size() != 2 || gt.points.dims()[1] != 3) {
      throw SchemaError("gt points: dims " + format_dims(gt.points.dims()) + ", expected [N, 3]");
    }
    for (float v : gt.points.as_f32()) {
      if (!std::isfinite(v)) throw ValidationError("gt points contain non-finite values");
    }
    if (!gt.point_colors.empty()) {
      expect_dims(gt.point_colors, "gt point colors", DType::F32, gt.points.dims());
    }
  }
}

FrameSet read_frameset(const fs::path& dir) {
  const auto manifest_path = dir / "manifest.json";
  if (!fs::is_regular_file(manifest_path)) {
    throw NotFound("manifest not found: " + manifest_path.string());
  }
  json manifest;
  try {
    std::ifstream in(manifest_path);
    manifest = json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError("manifest.json is not valid JSON: " + std::string(e.what()));
  }

  FrameSet out;
  try {
    if (manifest.value("format", std::string()) != kFormat) {
      throw FormatError("manifest format is not '" + std::string(kFormat) + "'");
    }
    if (manifest.value("version", -1) != kManifestVersion) {
      throw FormatError("unsupported manifest version");
    }
    auto& info = out.info;
    info.frames = manifest.at("frame_count").get<std::size_t>();
    const auto size = manifest.at("image_size").get<std::vector<std::size_t>>();
    if (size.size() != 2) throw SchemaError("image_size must be [H, W]");
    info.height = size[0];
    info.width = size[1];
    info.patch = manifest.at("patch_size").get<std::size_t>();
    info.channels = manifest.at("channel_dim").get<std::size_t>();
    info.feature_dim = manifest.at("feature_dim").get<std::size_t>();
    info.layer_ids = manifest.at("layer_ids").get<std::vector<int>>();
    if (info.patch == 0 || info.height % info.patch || info.width % info.patch) {
      throw ValidationError("image size is not a multiple of patch size");
    }
    if (manifest.contains("token_count") &&
        manifest["token_count"].get<std::size_t>() != info.tokens()) {
      throw SchemaError("token_count contradicts image_size / patch_size");
    }
    for (const auto& cam : manifest.at("cameras")) out.cameras.push_back(camera_from_json(cam));

    const auto& tensors = manifest.at("tensors");
    out.images = read_blob(dir / tensors.at("images").get<std::string>());
    out.depth = read_blob(dir / tensors.at("depth").get<std::string>());
    out.features = read_blob(dir / tensors.at("features").get<std::string>());
    for (int layer : info.layer_ids) {
      const auto key = std::to_string(layer);
      out.queries[layer] = read_blob(dir / tensors.at("q").at(key).get<std::string>());
      out.keys[layer] = read_blob(dir / tensors.at("k").at(key).get<std::string>());
    }
    if (manifest.contains("ground_truth")) {
      const auto& gt = manifest["ground_truth"];
      auto load = [&](const char* name, TensorBlob& blob) {
        if (gt.contains(name)) blob = read_blob(dir / gt[name].get<std::string>());
      };
      load("masks", out.gt.masks);
      load("trajectory", out.gt.trajectory);
      load("points", out.gt.points);
      load("point_colors", out.gt.point_colors);
    }
  } catch (const json::exception& e) {
    throw SchemaError("manifest.json: " + std::string(e.what()));
  }
  out.validate();
  return out;
}

void write_frameset(const FrameSet& frameset, const fs::path& dir) {
  frameset.validate();
  std::error_code ec;
  fs::create_directories(dir / "tensors", ec);
  if (ec) throw IoError("cannot create " + (dir / "tensors").string() + ": " + ec.message());

  const auto& info = frameset.info;
  json tensors = {{"images", "tensors/images.vg4t"},
                  {"depth", "tensors/depth.vg4t"},
                  {"features", "tensors/features.vg4t"},
                  {"q", json::object()},
                  {"k", json::object()}};
  write_blob(frameset.images, dir / "tensors/images.vg4t");
  write_blob(frameset.depth, dir / "tensors/depth.vg4t");
  write_blob(frameset.features, dir / "tensors/features.vg4t");
  for (int layer : info.layer_ids) {
    const auto key = std::to_string(layer);
    tensors["q"][key] = layer_blob_path('q', layer).generic_string();
    tensors["k"][key] = layer_blob_path('k', layer).generic_string();
    write_blob(frameset.queries.at(layer), dir / layer_blob_path('q', layer));
    write_blob(frameset.keys.at(layer), dir / layer_blob_path('k', layer));
  }

  json cameras = json::array();
  for (const auto& cam : frameset.cameras) cameras.push_back(camera_to_json(cam));

  json manifest = {{"format", kFormat},
                   {"version", kManifestVersion},
                   {"frame_count", info.frames},
                   {"image_size", {info.height, info.width}},
                   {"patch_size", info.patch},
                   {"token_count", info.tokens()},
                   {"channel_dim", info.channels},
                   {"feature_dim", info.feature_dim},
                   {"layer_ids", info.layer_ids},
                   {"cameras", cameras},
                   {"tensors", tensors}};

  json gt = json::object();
  auto store = [&](const char* name, const TensorBlob& blob) {
    if (blob.empty()) return;
    const std::string rel = std::string("gt/") + name + ".vg4t";
    write_blob(blob, dir / rel);
    gt[name] = rel;
  };
  store("masks", frameset.gt.masks);
  store("trajectory", frameset.gt.trajectory);
  store("points", frameset.gt.points);
  store("point_colors", frameset.gt.point_colors);
  if (!gt.empty()) manifest["ground_truth"] = gt;

  std::ofstream out(dir / "manifest.json", std::ios::trunc);
  if (!out) throw IoError("cannot write " + (dir / "manifest.json").string());
  out << manifest.dump(2) << '\n';
  if (!out) throw IoError("write failed on manifest.json");
}

}  // namespace gramdyn
