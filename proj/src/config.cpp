#include "gramdyn/config.hpp"

#include <charconv>
#include <concepts>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "gramdyn/error.hpp"
#include "gramdyn/frameset.hpp"

namespace gramdyn {

using nlohmann::json;

namespace {

/// One JSON object being read: remembers which keys were consumed so that
/// leftovers can be reported as unknown.
class Section {
 public:
  Section(const json& node, std::string path) : node_(node), path_(std::move(path)) {
    if (!node_.is_object()) fail("", "expected an object");
  }

  const json* find(const char* key) {
    seen_.insert(key);
    const auto it = node_.find(key);
    return it == node_.end() ? nullptr : &*it;
  }

  [[noreturn]] void fail(const std::string& key, const std::string& what) const {
    const std::string where = key.empty() ? path_ : path_ + "." + key;
    throw ValidationError("config " + where + ": " + what);
  }

  void read(const char* key, double& out) {
    if (const json* v = find(key)) {
      if (!v->is_number()) fail(key, "expected a number");
      out = v->get<double>();
    }
  }

  void read(const char* key, int& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_integer()) fail(key, "expected an integer");
      const auto wide = v->get<std::int64_t>();
      if (wide < std::numeric_limits<int>::min() || wide > std::numeric_limits<int>::max()) {
        fail(key, "integer out of range");
      }
      out = static_cast<int>(wide);
    }
  }

  template <std::unsigned_integral U>
  void read(const char* key, U& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_unsigned()) fail(key, "expected a non-negative integer");
      out = v->get<U>();
    }
  }

  void read(const char* key, bool& out) {
    if (const json* v = find(key)) {
      if (!v->is_boolean()) fail(key, "expected true or false");
      out = v->get<bool>();
    }
  }

  void read(const char* key, std::optional<double>& out) {
    if (const json* v = find(key)) {
      if (v->is_null()) {
        out.reset();
      } else if (v->is_number()) {
        out = v->get<double>();
      } else {
        fail(key, "expected a number or null");
      }
    }
  }

  void read(const char* key, Eigen::Vector3d& out) {
    if (const json* v = find(key)) {
      if (!v->is_array() || v->size() != 3) fail(key, "expected [x, y, z]");
      for (int i = 0; i < 3; ++i) {
        if (!(*v)[static_cast<std::size_t>(i)].is_number()) fail(key, "expected [x, y, z]");
        out[i] = (*v)[static_cast<std::size_t>(i)].get<double>();
      }
    }
  }

  /// Integer list, or a layer string such as "4-8".
  void read_layers(const char* key, std::vector<int>& out) {
    if (const json* v = find(key)) {
      if (v->is_string()) {
        out = parse_layer_list(v->get<std::string>());
        return;
      }
      if (!v->is_array()) fail(key, "expected a list of layer ids");
      std::vector<int> layers;
      for (const auto& e : *v) {
        if (!e.is_number_integer()) fail(key, "expected a list of layer ids");
        layers.push_back(e.get<int>());
      }
      out = std::move(layers);
    }
  }

  template <typename Parse, typename T>
  void read_enum(const char* key, T& out, Parse parse) {
    if (const json* v = find(key)) {
      if (!v->is_string()) fail(key, "expected a string");
      out = parse(v->get<std::string>());
    }
  }

  std::string child_path(const char* key) const { return path_ + "." + key; }

  void finish() const {
    for (const auto& [key, value] : node_.items()) {
      if (!seen_.contains(key)) fail(key, "unknown key");
    }
  }

 private:
  const json& node_;
  std::string path_;
  std::set<std::string, std::less<>> seen_;
};

void read_texture(const json& node, const std::string& path, Texture& tex) {
  Section s(node, path);
  s.read("base", tex.base);
  s.read("amplitude", tex.amplitude);
  s.read("period", tex.period);
  s.finish();
}

PlaneSpec read_plane(const json& node, const std::string& path) {
  PlaneSpec plane;
  Section s(node, path);
  s.read("center", plane.center);
  s.read("normal", plane.normal);
  s.read("u_axis", plane.u_axis);
  s.read("half_u", plane.half_u);
  s.read("half_v", plane.half_v);
  if (const json* t = s.find("texture")) read_texture(*t, s.child_path("texture"), plane.texture);
  s.finish();
  return plane;
}

SphereSpec read_sphere(const json& node, const std::string& path) {
  SphereSpec sphere;
  Section s(node, path);
  s.read("center", sphere.center);
  s.read("radius", sphere.radius);
  s.read("velocity", sphere.velocity);
  s.read("spin", sphere.spin);
  s.read("dynamic", sphere.dynamic);
  if (const json* t = s.find("texture")) read_texture(*t, s.child_path("texture"), sphere.texture);
  s.finish();
  return sphere;
}

template <typename T, typename Reader>
void read_list(Section& parent, const char* key, std::vector<T>& out, Reader reader) {
  if (const json* v = parent.find(key)) {
    if (!v->is_array()) parent.fail(key, "expected a list");
    std::vector<T> items;
    for (std::size_t i = 0; i < v->size(); ++i) {
      items.push_back(reader((*v)[i], parent.child_path(key) + "[" + std::to_string(i) + "]"));
    }
    out = std::move(items);
  }
}

void read_scene(const json& node, SceneSpec& scene) {
  Section s(node, "scene");
  s.read("seed", scene.seed);
  s.read("frames", scene.frames);
  s.read("height", scene.height);
  s.read("width", scene.width);
  s.read("patch", scene.patch);
  s.read("gt_cloud_stride", scene.gt_cloud_stride);
  read_list(s, "planes", scene.planes, read_plane);
  read_list(s, "spheres", scene.spheres, read_sphere);
  if (const json* o = s.find("orbit")) {
    Section orbit(*o, "scene.orbit");
    orbit.read("target", scene.orbit.target);
    orbit.read("radius", scene.orbit.radius);
    orbit.read("elevation_deg", scene.orbit.elevation_deg);
    orbit.read("start_azimuth_deg", scene.orbit.start_azimuth_deg);
    orbit.read("sweep_deg", scene.orbit.sweep_deg);
    orbit.read("focal", scene.orbit.focal);
    orbit.finish();
  }
  if (const json* f = s.find("features")) {
    FeatureModel& fm = scene.features;
    Section feat(*f, "scene.features");
    feat.read("channels", fm.channels);
    feat.read("feature_dim", fm.feature_dim);
    feat.read_layers("layer_ids", fm.layer_ids);
    feat.read("noise", fm.noise);
    feat.read("drift_shallow", fm.drift_shallow);
    feat.read("drift_middle", fm.drift_middle);
    feat.read("drift_deep", fm.drift_deep);
    feat.read("shallow_last", fm.shallow_last);
    feat.read("deep_first", fm.deep_first);
    feat.finish();
  }
  s.finish();
}

void read_pipeline(const json& node, PipelineConfig& cfg) {
  Section s(node, "pipeline");
  if (const json* w = s.find("window")) {
    Section window(*w, "pipeline.window");
    window.read("n", cfg.saliency.window.half_count);
    window.read("stride", cfg.saliency.window.stride);
    window.finish();
  }
  s.read("heads", cfg.saliency.gram.heads);
  if (const json* l = s.find("layers")) {
    Section layers(*l, "pipeline.layers");
    layers.read_layers("shallow", cfg.saliency.shallow_layers);
    layers.read_layers("middle", cfg.saliency.middle_layers);
    layers.read_layers("deep_var", cfg.saliency.deep_var_layers);
    layers.read_layers("deep_mean", cfg.saliency.deep_mean_layers);
    layers.finish();
  }
  if (const json* t = s.find("threshold")) {
    Section threshold(*t, "pipeline.threshold");
    threshold.read("clusters", cfg.clusters);
    threshold.read("per_token", cfg.binarize.per_token);
    threshold.read("bins", cfg.binarize.bins);
    threshold.finish();
  }
  if (const json* r = s.find("refine")) {
    RefineConfig& rc = cfg.refine;
    Section refine(*r, "pipeline.refine");
    refine.read("lambda", rc.lambda);
    refine.read("tau", rc.tau);
    refine.read("sor_k", rc.sor_k);
    refine.read("sor_sigma", rc.sor_sigma);
    refine.read_enum("sor_scope", rc.sor_scope, parse_sor_scope);
    refine.read("occlusion_margin", rc.occlusion_margin);
    refine.read("occlusion_fraction", rc.occlusion_fraction);
    refine.read("voxel_size", rc.voxel_size);
    refine.read("voxel_factor", rc.voxel_factor);
    refine.finish();
  }
  if (const json* p = s.find("suppress")) {
    Section suppress(*p, "pipeline.suppress");
    suppress.read_layers("layers", cfg.suppress_layers);
    suppress.read_enum("mode", cfg.suppress_mode, parse_suppression_mode);
    suppress.finish();
  }
  if (const json* e = s.find("eval")) {
    Section eval(*e, "pipeline.eval");
    eval.read("boundary_fraction", cfg.boundary_fraction);
    eval.finish();
  }
  s.finish();
}

json vec3(const Eigen::Vector3d& v) { return json::array({v.x(), v.y(), v.z()}); }

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json texture_json(const Texture& t) {
  return {{"base", vec3(t.base)}, {"amplitude", vec3(t.amplitude)}, {"period", t.period}};
}

}  // namespace

std::vector<int> parse_layer_list(const std::string& text) {
  std::vector<int> layers;
  const auto bad = [&] { return ValidationError("bad layer list '" + text + "'"); };
  const auto to_int = [&](std::string_view part) {
    int value = 0;
    const auto [end, ec] = std::from_chars(part.data(), part.data() + part.size(), value);
    if (ec != std::errc{} || end != part.data() + part.size()) throw bad();
    return value;
  };
  std::stringstream stream(text);
  std::string item;
  while (std::getline(stream, item, ',')) {
    const auto dash = item.find('-', 1);
    if (dash == std::string::npos) {
      layers.push_back(to_int(item));
      continue;
    }
    const int first = to_int(std::string_view(item).substr(0, dash));
    const int last = to_int(std::string_view(item).substr(dash + 1));
    if (last < first) throw bad();
    for (int l = first; l <= last; ++l) layers.push_back(l);
  }
  if (layers.empty()) throw bad();
  return layers;
}

void PipelineConfig::validate() const {
  saliency.window.validate();
  if (saliency.gram.heads < 1) throw ValidationError("heads must be >= 1");
  for (const auto* list : {&saliency.shallow_layers, &saliency.middle_layers,
                           &saliency.deep_var_layers, &saliency.deep_mean_layers}) {
    if (list->empty()) throw ValidationError("every saliency layer group needs a layer");
  }
  if (clusters < 2) throw ValidationError("clusters must be >= 2");
  if (binarize.bins < 2) throw ValidationError("Otsu bins must be >= 2");
  refine.validate();
  if (suppress_layers.empty()) throw ValidationError("suppression needs at least one layer");
  if (!(boundary_fraction > 0) || boundary_fraction > 1) {
    throw ValidationError("boundary_fraction must lie in (0, 1]");
  }
}

void PipelineConfig::validate_against(const FrameSet& fs) const {
  validate();
  saliency.validate_against(fs);
  if (fs.features.empty()) throw SchemaError("frame set has no feature tensor");
  const std::size_t tokens = fs.info.frames * fs.info.tokens();
  if (static_cast<std::size_t>(clusters) > tokens) {
    throw ValidationError("clusters (" + std::to_string(clusters) + ") exceed the token count (" +
                          std::to_string(tokens) + ")");
  }
}

RunConfig parse_config(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig config;
  Section top(doc, "config");
  if (const json* scene = top.find("scene")) read_scene(*scene, config.scene);
  if (const json* pipeline = top.find("pipeline")) read_pipeline(*pipeline, config.pipeline);
  top.finish();
  config.scene.validate();
  config.pipeline.validate();
  return config;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFound("config file " + path.string() + " not found");
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str());
}

std::string config_to_json(const RunConfig& config) {
  const SceneSpec& sc = config.scene;
  json planes = json::array();
  for (const auto& p : sc.planes) {
    planes.push_back({{"center", vec3(p.center)},
                      {"normal", vec3(p.normal)},
                      {"u_axis", vec3(p.u_axis)},
                      {"half_u", p.half_u},
                      {"half_v", p.half_v},
                      {"texture", texture_json(p.texture)}});
  }
  json spheres = json::array();
  for (const auto& s : sc.spheres) {
    spheres.push_back({{"center", vec3(s.center)},
                       {"radius", s.radius},
                       {"velocity", vec3(s.velocity)},
                       {"spin", s.spin},
                       {"dynamic", s.dynamic},
                       {"texture", texture_json(s.texture)}});
  }
  const FeatureModel& fm = sc.features;
  json scene = {
      {"seed", sc.seed},
      {"frames", sc.frames},
      {"height", sc.height},
      {"width", sc.width},
      {"patch", sc.patch},
      {"gt_cloud_stride", sc.gt_cloud_stride},
      {"planes", planes},
      {"spheres", spheres},
      {"orbit",
       {{"target", vec3(sc.orbit.target)},
        {"radius", sc.orbit.radius},
        {"elevation_deg", sc.orbit.elevation_deg},
        {"start_azimuth_deg", sc.orbit.start_azimuth_deg},
        {"sweep_deg", sc.orbit.sweep_deg},
        {"focal", sc.orbit.focal}}},
      {"features",
       {{"channels", fm.channels},
        {"feature_dim", fm.feature_dim},
        {"layer_ids", fm.layer_ids},
        {"noise", fm.noise},
        {"drift_shallow", fm.drift_shallow},
        {"drift_middle", fm.drift_middle},
        {"drift_deep", fm.drift_deep},
        {"shallow_last", fm.shallow_last},
        {"deep_first", fm.deep_first}}}};

  const PipelineConfig& pc = config.pipeline;
  const RefineConfig& rc = pc.refine;
  json pipeline = {
      {"window", {{"n", pc.saliency.window.half_count}, {"stride", pc.saliency.window.stride}}},
      {"heads", pc.saliency.gram.heads},
      {"layers",
       {{"shallow", pc.saliency.shallow_layers},
        {"middle", pc.saliency.middle_layers},
        {"deep_var", pc.saliency.deep_var_layers},
        {"deep_mean", pc.saliency.deep_mean_layers}}},
      {"threshold",
       {{"clusters", pc.clusters}, {"per_token", pc.binarize.per_token}, {"bins", pc.binarize.bins}}},
      {"refine",
       {{"lambda", rc.lambda},
        {"tau", optional_number(rc.tau)},
        {"sor_k", rc.sor_k},
        {"sor_sigma", rc.sor_sigma},
        {"sor_scope", sor_scope_name(rc.sor_scope)},
        {"occlusion_margin", optional_number(rc.occlusion_margin)},
        {"occlusion_fraction", rc.occlusion_fraction},
        {"voxel_size", optional_number(rc.voxel_size)},
        {"voxel_factor", rc.voxel_factor}}},
      {"suppress",
       {{"layers", pc.suppress_layers}, {"mode", suppression_mode_name(pc.suppress_mode)}}},
      {"eval", {{"boundary_fraction", pc.boundary_fraction}}}};

  return json{{"scene", scene}, {"pipeline", pipeline}}.dump(2) + "\n";
}

}  // namespace gramdyn
