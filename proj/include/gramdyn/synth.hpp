#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gramdyn/frameset.hpp"

namespace gramdyn {

/// Smooth two-tone albedo: base + amplitude * sin(2 pi x / period) * sin(2 pi y / period)
/// in surface coordinates, clamped to [0, 1].
struct Texture {
  Eigen::Vector3d base{0.5, 0.5, 0.5};
  Eigen::Vector3d amplitude{0.2, 0.2, 0.2};
  double period = 0.3;

  Eigen::Vector3d shade(double x, double y) const;
};

/// Rectangle (half sizes > 0) or infinite plane (half sizes 0) through
/// `center`; `u_axis` and the normal span its frame.
struct PlaneSpec {
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  Eigen::Vector3d normal = Eigen::Vector3d::UnitZ();
  Eigen::Vector3d u_axis = Eigen::Vector3d::UnitX();
  double half_u = 0.0;
  double half_v = 0.0;
  Texture texture;
};

struct SphereSpec {
  Eigen::Vector3d center = Eigen::Vector3d::Zero();  // at frame 0
  double radius = 0.5;
  Eigen::Vector3d velocity = Eigen::Vector3d::Zero();  // per frame
  double spin = 0.0;  // texture rotation about world z, radians per frame
  bool dynamic = false;
  Texture texture;

  Eigen::Vector3d center_at(std::size_t frame) const {
    return center + velocity * static_cast<double>(frame);
  }
};

struct OrbitSpec {
  Eigen::Vector3d target = Eigen::Vector3d::Zero();
  double radius = 4.0;
  double elevation_deg = 70.0;
  double start_azimuth_deg = -45.0;
  double sweep_deg = 90.0;
  double focal = 700.0;
};

/// Parameters of the synthetic attention and backbone tensors. The drift
/// terms scale everything that distinguishes dynamic tokens in each layer
/// band; with all three at 0 dynamic and static tokens share one model.
struct FeatureModel {
  int channels = 32;
  int feature_dim = 32;
  std::vector<int> layer_ids = {1, 4, 5, 6, 7, 8, 18, 19, 20, 21, 22};
  double noise = 0.1;
  double drift_shallow = 1.0;
  double drift_middle = 1.0;
  double drift_deep = 1.0;
  int shallow_last = 3;  // layers <= this use the shallow regime
  int deep_first = 18;   // layers >= this use the deep regime
};

struct SceneSpec {
  std::uint64_t seed = 7;
  std::size_t frames = 24;
  std::size_t height = 518;
  std::size_t width = 518;
  std::size_t patch = 14;
  std::vector<PlaneSpec> planes;
  std::vector<SphereSpec> spheres;
  OrbitSpec orbit;
  FeatureModel features;
  std::size_t gt_cloud_stride = 4;  // pixel stride of the stored static cloud

  /// One moving sphere over a floor and a tilted slab.
  static SceneSpec default_fixture();

  /// Throws ValidationError on inconsistent sizes or degenerate geometry.
  void validate() const;
};

/// Per-pixel renderer output plus which primitive each pixel sees.
struct RenderedScene {
  FrameSet frameset;
  /// Closest-hit primitive per pixel, frame-major: planes are 0..P-1,
  /// spheres P..P+S-1, -1 for no hit.
  std::vector<std::int16_t> primitive;
  std::vector<std::uint8_t> dynamic_primitive;  // per primitive id
};

/// World-to-camera pose of every frame along the orbit.
std::vector<Camera> orbit_cameras(const SceneSpec& spec);

/// Ray-casts depth, color, primitive ids and ground truth (masks, trajectory,
/// static cloud) for every frame. Q/K/feature tensors are left unset.
RenderedScene render_scene(const SceneSpec& spec);

/// Fills the frame set's queries, keys and features from the feature model.
void synth_features(RenderedScene& scene, const SceneSpec& spec);

/// render_scene + synth_features.
RenderedScene gen_scene(const SceneSpec& spec);

}  // namespace gramdyn
