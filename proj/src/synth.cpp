#include "gramdyn/synth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <Eigen/QR>

#include "gramdyn/error.hpp"
#include "gramdyn/log.hpp"
#include "gramdyn/parallel.hpp"
#include "gramdyn/random.hpp"

namespace gramdyn {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Random stream ids. Each tensor family draws from its own stream so adding
// a layer or frame never shifts the values of another.
enum Stream : std::uint64_t {
  kBasis = 1,
  kFrameTerms = 2,
  kQueryNoise = 3,
  kKeyNoise = 4,
  kFeatureBasis = 5,
  kFeatureNoise = 6,
};

std::uint64_t layer_stream(Stream s, int layer) {
  return (static_cast<std::uint64_t>(s) << 32) | static_cast<std::uint32_t>(layer);
}

Eigen::Vector3d degrees_to_direction(double elevation_deg, double azimuth_deg) {
  const double el = elevation_deg * std::numbers::pi / 180.0;
  const double az = azimuth_deg * std::numbers::pi / 180.0;
  return {std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el)};
}

// Orthonormal c x c basis from the QR factorization of a seeded Gaussian.
Eigen::MatrixXd random_basis(std::uint64_t seed, std::uint64_t stream, int n) {
  const CounterRng rng(seed, stream);
  Eigen::MatrixXd g(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) g(i, j) = rng.normal(static_cast<std::uint64_t>(i * n + j));
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  return qr.householderQ() * Eigen::MatrixXd::Identity(n, n);
}

struct Hit {
  double depth = std::numeric_limits<double>::infinity();
  int primitive = -1;
  Eigen::Vector3d point;
};

}  // namespace

Eigen::Vector3d Texture::shade(double x, double y) const {
  const double pattern = std::sin(kTwoPi * x / period) * std::sin(kTwoPi * y / period);
  return (base + amplitude * pattern).cwiseMax(0.0).cwiseMin(1.0);
}

SceneSpec SceneSpec::default_fixture() {
  SceneSpec spec;
  PlaneSpec floor;
  floor.texture.base = {0.55, 0.5, 0.4};
  floor.texture.amplitude = {0.25, 0.2, 0.15};
  floor.texture.period = 0.35;

  PlaneSpec slab;
  const double tilt = 12.0 * std::numbers::pi / 180.0;
  slab.center = {0.55, -0.55, 0.15};
  slab.normal = {0.0, -std::sin(tilt), std::cos(tilt)};
  slab.u_axis = Eigen::Vector3d::UnitX();
  slab.half_u = 0.35;
  slab.half_v = 0.45;
  slab.texture.base = {0.3, 0.45, 0.65};
  slab.texture.amplitude = {0.15, 0.15, 0.2};
  slab.texture.period = 0.2;

  SphereSpec ball;
  ball.center = {-0.45, -0.15, 0.6};
  ball.radius = 0.35;
  ball.velocity = {0.04, 0.015, 0.0};
  ball.spin = 0.05;
  ball.dynamic = true;
  ball.texture.base = {0.8, 0.25, 0.2};
  ball.texture.amplitude = {0.15, 0.1, 0.1};
  ball.texture.period = 0.25;

  spec.planes = {floor, slab};
  spec.spheres = {ball};
  spec.orbit.target = {0.0, -0.2, 0.2};
  return spec;
}

void SceneSpec::validate() const {
  if (frames < 2) throw ValidationError("scene needs at least 2 frames");
  if (patch < 1 || height < patch || width < patch) {
    throw ValidationError("image size must be at least one patch");
  }
  if (height % patch != 0 || width % patch != 0) {
    throw ValidationError("image size " + std::to_string(height) + "x" + std::to_string(width) +
                          " is not a multiple of the patch size " + std::to_string(patch));
  }
  if (planes.size() + spheres.size() == 0) throw ValidationError("scene has no primitives");
  if (planes.size() + spheres.size() > 1000) throw ValidationError("too many primitives");
  for (const auto& p : planes) {
    if (!(p.normal.norm() > 0) || !(p.u_axis.cross(p.normal).norm() > 1e-9)) {
      throw ValidationError("plane normal and u_axis must be non-zero and not parallel");
    }
    if (p.half_u < 0 || p.half_v < 0 || !(p.texture.period > 0)) {
      throw ValidationError("plane sizes must be >= 0 and texture period > 0");
    }
  }
  for (const auto& s : spheres) {
    if (!(s.radius > 0) || !(s.texture.period > 0)) {
      throw ValidationError("sphere radius and texture period must be > 0");
    }
  }
  if (!(orbit.radius > 0) || !(orbit.focal > 0)) {
    throw ValidationError("orbit radius and focal length must be > 0");
  }
  if (std::abs(orbit.elevation_deg) >= 89.9) {
    throw ValidationError("orbit elevation must stay below 89.9 degrees");
  }
  const auto& fm = features;
  if (fm.channels < 16 || fm.feature_dim < 8) {
    throw ValidationError("feature model needs channels >= 16 and feature_dim >= 8");
  }
  if (fm.layer_ids.empty()) throw ValidationError("feature model lists no layers");
  if (!(fm.noise >= 0) || !(fm.drift_shallow >= 0) || !(fm.drift_middle >= 0) ||
      !(fm.drift_deep >= 0)) {
    throw ValidationError("noise and drift magnitudes must be >= 0");
  }
  if (gt_cloud_stride < 1) throw ValidationError("gt_cloud_stride must be >= 1");
}

std::vector<Camera> orbit_cameras(const SceneSpec& spec) {
  std::vector<Camera> cams(spec.frames);
  const double cx = (static_cast<double>(spec.width) - 1.0) / 2.0;
  const double cy = (static_cast<double>(spec.height) - 1.0) / 2.0;
  for (std::size_t t = 0; t < spec.frames; ++t) {
    const double frac = spec.frames > 1 ? double(t) / double(spec.frames - 1) : 0.0;
    const double az = spec.orbit.start_azimuth_deg + spec.orbit.sweep_deg * frac;
    const Eigen::Vector3d eye =
        spec.orbit.target + spec.orbit.radius * degrees_to_direction(spec.orbit.elevation_deg, az);
    cams[t] = look_at<double>(eye, spec.orbit.target, Eigen::Vector3d::UnitZ(), spec.orbit.focal,
                              spec.orbit.focal, cx, cy);
  }
  return cams;
}

RenderedScene render_scene(const SceneSpec& spec) {
  spec.validate();
  const std::size_t F = spec.frames, H = spec.height, W = spec.width;
  FrameSetInfo info;
  info.frames = F;
  info.height = H;
  info.width = W;
  info.patch = spec.patch;
  info.channels = static_cast<std::size_t>(spec.features.channels);
  info.feature_dim = static_cast<std::size_t>(spec.features.feature_dim);
  info.layer_ids = spec.features.layer_ids;
  std::sort(info.layer_ids.begin(), info.layer_ids.end());
  info.layer_ids.erase(std::unique(info.layer_ids.begin(), info.layer_ids.end()),
                       info.layer_ids.end());

  RenderedScene scene;
  scene.frameset = FrameSet::allocate(info);
  FrameSet& fs = scene.frameset;
  fs.cameras = orbit_cameras(spec);
  const std::size_t planes = spec.planes.size();
  scene.dynamic_primitive.assign(planes + spec.spheres.size(), 0);
  for (std::size_t s = 0; s < spec.spheres.size(); ++s) {
    scene.dynamic_primitive[planes + s] = spec.spheres[s].dynamic ? 1 : 0;
  }
  scene.primitive.assign(F * H * W, -1);

  auto depth = fs.depth.as_f32();
  auto images = fs.images.as_f32();
  std::vector<std::uint8_t> masks(F * H * W, 0);

  parallel_for(F, [&](std::size_t t) {
    const Camera& cam = fs.cameras[t];
    const Eigen::Vector3d eye = cam.center();
    const Eigen::Matrix3d Rt = cam.rotation.transpose();
    for (std::size_t r = 0; r < H; ++r) {
      for (std::size_t c = 0; c < W; ++c) {
        // Direction with unit camera-z component: the ray parameter is z-depth.
        const Eigen::Vector3d dir =
            Rt * Eigen::Vector3d((double(c) - cam.cx) / cam.fx, (double(r) - cam.cy) / cam.fy, 1.0);
        Hit best;
        for (std::size_t i = 0; i < planes; ++i) {
          const auto& pl = spec.planes[i];
          const Eigen::Vector3d n = pl.normal.normalized();
          const double denom = n.dot(dir);
          if (std::abs(denom) < 1e-12) continue;
          const double z = n.dot(pl.center - eye) / denom;
          if (!(z > 1e-9) || z >= best.depth) continue;
          const Eigen::Vector3d p = eye + z * dir;
          if (pl.half_u > 0 || pl.half_v > 0) {
            const Eigen::Vector3d u_axis = (pl.u_axis - pl.u_axis.dot(n) * n).normalized();
            const Eigen::Vector3d v_axis = n.cross(u_axis);
            const Eigen::Vector3d d = p - pl.center;
            if (std::abs(d.dot(u_axis)) > pl.half_u || std::abs(d.dot(v_axis)) > pl.half_v) continue;
          }
          best = {z, static_cast<int>(i), p};
        }
        for (std::size_t s = 0; s < spec.spheres.size(); ++s) {
          const auto& sp = spec.spheres[s];
          const Eigen::Vector3d oc = eye - sp.center_at(t);
          const double a = dir.squaredNorm();
          const double b = 2.0 * dir.dot(oc);
          const double cc = oc.squaredNorm() - sp.radius * sp.radius;
          const double disc = b * b - 4.0 * a * cc;
          if (disc < 0) continue;
          const double root = std::sqrt(disc);
          double z = (-b - root) / (2.0 * a);
          if (!(z > 1e-9)) z = (-b + root) / (2.0 * a);
          if (!(z > 1e-9) || z >= best.depth) continue;
          best = {z, static_cast<int>(planes + s), eye + z * dir};
        }
        const std::size_t pix = (t * H + r) * W + c;
        if (best.primitive < 0) continue;
        scene.primitive[pix] = static_cast<std::int16_t>(best.primitive);
        depth[pix] = static_cast<float>(best.depth);
        Eigen::Vector3d color;
        if (static_cast<std::size_t>(best.primitive) < planes) {
          const auto& pl = spec.planes[static_cast<std::size_t>(best.primitive)];
          const Eigen::Vector3d n = pl.normal.normalized();
          const Eigen::Vector3d u_axis = (pl.u_axis - pl.u_axis.dot(n) * n).normalized();
          const Eigen::Vector3d d = best.point - pl.center;
          color = pl.texture.shade(d.dot(u_axis), d.dot(n.cross(u_axis)));
        } else {
          const auto& sp = spec.spheres[static_cast<std::size_t>(best.primitive) - planes];
          const Eigen::Vector3d local =
              Eigen::AngleAxisd(-sp.spin * double(t), Eigen::Vector3d::UnitZ()) *
              ((best.point - sp.center_at(t)) / sp.radius);
          const double lon = std::atan2(local.y(), local.x());
          const double lat = std::asin(std::clamp(local.z(), -1.0, 1.0));
          color = sp.texture.shade(lon * sp.radius, lat * sp.radius);
          masks[pix] = sp.dynamic ? 1 : 0;
        }
        for (int k = 0; k < 3; ++k) images[pix * 3 + static_cast<std::size_t>(k)] = float(color(k));
      }
    }
  });

  fs.gt.masks = TensorBlob::u8({F, H, W}, std::move(masks));
  std::vector<float> traj(F * 12);
  for (std::size_t t = 0; t < F; ++t) {
    const Eigen::Matrix3d R = fs.cameras[t].rotation.transpose();
    const Eigen::Vector3d center = fs.cameras[t].center();
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) traj[t * 12 + std::size_t(r * 4 + c)] = float(R(r, c));
      traj[t * 12 + std::size_t(r * 4 + 3)] = float(center(r));
    }
  }
  fs.gt.trajectory = TensorBlob::f32({F, 3, 4}, std::move(traj));

  std::vector<float> points, colors;
  const std::size_t stride = spec.gt_cloud_stride;
  for (std::size_t t = 0; t < F; ++t) {
    const Camera& cam = fs.cameras[t];
    for (std::size_t r = 0; r < H; r += stride) {
      for (std::size_t c = 0; c < W; c += stride) {
        const std::size_t pix = (t * H + r) * W + c;
        const int prim = scene.primitive[pix];
        if (prim < 0 || scene.dynamic_primitive[static_cast<std::size_t>(prim)]) continue;
        const Eigen::Vector3d X =
            cam.to_world(cam.pixel_to_camera(double(c), double(r), double(depth[pix])));
        for (int k = 0; k < 3; ++k) {
          points.push_back(float(X(k)));
          colors.push_back(images[pix * 3 + static_cast<std::size_t>(k)]);
        }
      }
    }
  }
  const std::size_t n = points.size() / 3;
  if (n > 0) {
    fs.gt.points = TensorBlob::f32({n, 3}, std::move(points));
    fs.gt.point_colors = TensorBlob::f32({n, 3}, std::move(colors));
  }
  return scene;
}

void synth_features(RenderedScene& scene, const SceneSpec& spec) {
  FrameSet& fs = scene.frameset;
  const FeatureModel& fm = spec.features;
  const FrameSetInfo& info = fs.info;
  const std::size_t F = info.frames, Np = info.tokens(), P = info.patch;
  const std::size_t gr = info.grid_rows(), gc = info.grid_cols();
  const std::size_t prims = scene.dynamic_primitive.size();
  const auto c = static_cast<Eigen::Index>(info.channels);
  const auto cf = static_cast<Eigen::Index>(info.feature_dim);
  const std::uint64_t seed = spec.seed;

  // Per-token primitive coverage, dynamic fraction and mean brightness.
  std::vector<double> coverage(F * Np * prims, 0.0);
  std::vector<double> dyn_fraction(F * Np, 0.0);
  std::vector<double> brightness(F * Np, 0.0);
  const auto images = fs.images.as_f32();
  const double per_pixel = 1.0 / double(P * P);
  parallel_for(F, [&](std::size_t t) {
    for (std::size_t r = 0; r < info.height; ++r) {
      for (std::size_t col = 0; col < info.width; ++col) {
        const std::size_t token = t * Np + (r / P) * gc + col / P;
        const std::size_t pix = (t * info.height + r) * info.width + col;
        const int prim = scene.primitive[pix];
        if (prim >= 0) {
          coverage[token * prims + std::size_t(prim)] += per_pixel;
          if (scene.dynamic_primitive[std::size_t(prim)]) dyn_fraction[token] += per_pixel;
        }
        brightness[token] +=
            per_pixel * (images[pix * 3] + images[pix * 3 + 1] + images[pix * 3 + 2]) / 3.0;
      }
    }
  });

  // Fixed positional code, zero-mean over a full grid period.
  auto positional = [&](std::size_t p, const Eigen::MatrixXd& basis, Eigen::Index first) {
    const double a = kTwoPi * double(p / gc) / double(gr);
    const double b = kTwoPi * double(p % gc) / double(gc);
    return (0.3 * (std::sin(a) * basis.col(first) + std::cos(a) * basis.col(first + 1) +
                   std::sin(b) * basis.col(first + 2) + std::cos(b) * basis.col(first + 3)))
        .eval();
  };

  for (int layer : info.layer_ids) {
    const Eigen::MatrixXd E = random_basis(seed, layer_stream(kBasis, layer), int(c));
    const Eigen::VectorXd e0 = E.col(0), e_sem = E.col(1), e_motion = E.col(2), e_var = E.col(3);
    const CounterRng frame_rng(seed, layer_stream(kFrameTerms, layer));
    const CounterRng q_noise(seed, layer_stream(kQueryNoise, layer));
    const CounterRng k_noise(seed, layer_stream(kKeyNoise, layer));
    const bool shallow = layer <= fm.shallow_last;
    const bool deep = layer >= fm.deep_first;
    auto q_data = fs.queries.at(layer).as_f32();
    auto k_data = fs.keys.at(layer).as_f32();

    parallel_for(F, [&](std::size_t t) {
      // Frame-level terms: key offset along e_motion (shallow), drift
      // direction in the free subspace (middle), mean modulation (deep).
      const double gamma = frame_rng.normal(t * 64);
      const double zeta = 0.6 * frame_rng.uniform(t * 64 + 1) - 0.3;
      Eigen::VectorXd drift = Eigen::VectorXd::Zero(c);
      for (Eigen::Index k = 8; k < c; ++k) drift += frame_rng.normal(t * 64 + 2 + std::uint64_t(k)) * E.col(k);
      drift.normalize();

      for (std::size_t p = 0; p < Np; ++p) {
        const double delta = dyn_fraction[t * Np + p];
        const Eigen::VectorXd pos = positional(p, E, 4);
        Eigen::VectorXd q = pos, k = pos;
        if (shallow) {
          const double g = delta * fm.drift_shallow;
          q += e0 + g * e_motion;
          k += (1.0 - g) * e0 + g * e_sem + gamma * e_motion;
        } else if (deep) {
          const double g = delta * fm.drift_deep;
          const Eigen::VectorXd common = (1.0 + g) * e0 + (1.0 - g) * (0.6 + zeta) * e_var;
          q += common;
          k += common;
        } else {
          const double g = delta * fm.drift_middle;
          const Eigen::VectorXd common = (1.0 - g) * e0 + g * drift;
          q += common;
          k += common;
        }
        const std::size_t base = (t * Np + p) * std::size_t(c);
        for (Eigen::Index j = 0; j < c; ++j) {
          const std::size_t idx = base + std::size_t(j);
          q_data[idx] = float(q(j) + fm.noise * q_noise.normal(idx));
          k_data[idx] = float(k(j) + fm.noise * k_noise.normal(idx));
        }
      }
    });
  }

  // Backbone features: primitive prototypes blended by coverage, a texture
  // brightness term and position, plus noise.
  const Eigen::MatrixXd B = random_basis(seed, layer_stream(kFeatureBasis, 0), int(cf));
  const CounterRng proto_rng(seed, layer_stream(kFeatureBasis, 1));
  Eigen::MatrixXd prototypes(cf, static_cast<Eigen::Index>(prims));
  for (std::size_t i = 0; i < prims; ++i) {
    for (Eigen::Index j = 0; j < cf; ++j) {
      prototypes(j, Eigen::Index(i)) =
          2.0 / std::sqrt(double(cf)) * proto_rng.normal(i * std::size_t(cf) + std::size_t(j));
    }
  }
  const CounterRng f_noise(seed, layer_stream(kFeatureNoise, 0));
  auto feat = fs.features.as_f32();
  parallel_for(F, [&](std::size_t t) {
    for (std::size_t p = 0; p < Np; ++p) {
      const std::size_t token = t * Np + p;
      Eigen::VectorXd v = 0.5 * positional(p, B, 1) + 0.5 * (brightness[token] - 0.5) * B.col(0);
      for (std::size_t i = 0; i < prims; ++i) {
        v += coverage[token * prims + i] * prototypes.col(Eigen::Index(i));
      }
      const std::size_t base = token * std::size_t(cf);
      for (Eigen::Index j = 0; j < cf; ++j) {
        const std::size_t idx = base + std::size_t(j);
        feat[idx] = float(v(j) + fm.noise * f_noise.normal(idx));
      }
    }
  });
}

RenderedScene gen_scene(const SceneSpec& spec) {
  auto scene = render_scene(spec);
  synth_features(scene, spec);
  scene.frameset.validate();
  logger().info("generated {} frames of {}x{} ({} tokens per frame)", spec.frames, spec.height,
                spec.width, scene.frameset.info.tokens());
  return scene;
}

}  // namespace gramdyn
