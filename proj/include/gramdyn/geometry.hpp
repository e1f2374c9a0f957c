#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>

#include "gramdyn/camera.hpp"
#include "gramdyn/eigen_types.hpp"
#include "gramdyn/error.hpp"

namespace gramdyn {

struct PointCloud;

/// Support pixels and weights for bilinear interpolation at (u, v). Pixel
/// centers sit on integers; the sampleable domain is [0, W-1] x [0, H-1].
struct BilinearStencil {
  Eigen::Index col0 = 0, col1 = 0, row0 = 0, row1 = 0;
  double wu = 0.0, wv = 0.0;  // weight of col1 / row1
};

inline std::optional<BilinearStencil> bilinear_stencil(double u, double v, Eigen::Index width,
                                                       Eigen::Index height) {
  if (!(u >= 0.0 && v >= 0.0 && u <= double(width - 1) && v <= double(height - 1))) {
    return std::nullopt;
  }
  BilinearStencil s;
  s.col0 = std::min(static_cast<Eigen::Index>(std::floor(u)), std::max<Eigen::Index>(width - 2, 0));
  s.row0 = std::min(static_cast<Eigen::Index>(std::floor(v)), std::max<Eigen::Index>(height - 2, 0));
  s.col1 = std::min(s.col0 + 1, width - 1);
  s.row1 = std::min(s.row0 + 1, height - 1);
  s.wu = u - double(s.col0);
  s.wv = v - double(s.row0);
  return s;
}

/// Blends fetch(row, col) over the stencil in double precision.
template <typename Fetch>
auto bilinear_blend(const BilinearStencil& s, Fetch&& fetch) {
  const auto a = fetch(s.row0, s.col0);
  const auto b = fetch(s.row0, s.col1);
  const auto c = fetch(s.row1, s.col0);
  const auto d = fetch(s.row1, s.col1);
  return ((1.0 - s.wv) * ((1.0 - s.wu) * a + s.wu * b) + s.wv * ((1.0 - s.wu) * c + s.wu * d))
      .eval();
}

/// Bilinear sample of a scalar image; nullopt outside the domain.
template <typename Derived>
std::optional<double> bilinear(const Eigen::DenseBase<Derived>& image, double u, double v) {
  const auto s = bilinear_stencil(u, v, image.cols(), image.rows());
  if (!s) return std::nullopt;
  const auto& m = image.derived();
  return bilinear_blend(*s, [&](Eigen::Index r, Eigen::Index c) {
    return Eigen::Matrix<double, 1, 1>(double(m(r, c)));
  })(0);
}

/// Bilinear depth sample; invalid (nullopt) if outside the domain or if any
/// support pixel has depth 0.
template <typename Derived>
std::optional<double> bilinear_depth(const Eigen::DenseBase<Derived>& depth, double u, double v) {
  const auto s = bilinear_stencil(u, v, depth.cols(), depth.rows());
  if (!s) return std::nullopt;
  const auto& m = depth.derived();
  if (m(s->row0, s->col0) == 0 || m(s->row0, s->col1) == 0 || m(s->row1, s->col0) == 0 ||
      m(s->row1, s->col1) == 0) {
    return std::nullopt;
  }
  return bilinear_blend(*s, [&](Eigen::Index r, Eigen::Index c) {
    return Eigen::Matrix<double, 1, 1>(double(m(r, c)));
  })(0);
}

/// Bilinear RGB sample from an (H*W) x 3 color image of the given width.
template <typename Derived>
std::optional<Eigen::Vector3d> bilinear_color(const Eigen::DenseBase<Derived>& colors,
                                              Eigen::Index width, Eigen::Index height, double u,
                                              double v) {
  const auto s = bilinear_stencil(u, v, width, height);
  if (!s) return std::nullopt;
  const auto& m = colors.derived();
  return bilinear_blend(*s, [&](Eigen::Index r, Eigen::Index c) -> Eigen::Vector3d {
    return m.row(r * width + c).transpose().template cast<double>();
  });
}

template <typename Scalar>
struct ProjectionSample {
  Scalar u{0}, v{0}, d{0};
  Scalar r_d{0};  // d - D(u, v); meaningful only when visible
  bool visible = false;
};

/// Projects a world point into a view. Visible iff in front of the camera,
/// inside the pixel domain, the depth sample is valid, and the point is not
/// more than `occlusion_margin` behind the observed surface.
template <typename Scalar, typename Derived>
ProjectionSample<Scalar> project(
    const Vector3<Scalar>& X, const CameraParams<Scalar>& cam,
    const Eigen::DenseBase<Derived>& depth,
    Scalar occlusion_margin = std::numeric_limits<Scalar>::infinity()) {
  ProjectionSample<Scalar> out;
  const Vector3<Scalar> xc = cam.to_camera(X);
  out.d = xc.z();
  if (!(out.d > 0)) return out;
  out.u = cam.fx * xc.x() / out.d + cam.cx;
  out.v = cam.fy * xc.y() / out.d + cam.cy;
  const auto observed = bilinear_depth(depth, double(out.u), double(out.v));
  if (!observed) return out;
  out.r_d = out.d - Scalar(*observed);
  out.visible = out.r_d <= occlusion_margin;
  return out;
}

/// Spatial depth derivatives in scene units per pixel.
template <typename Scalar>
struct DepthGradient {
  RowMatrix<Scalar> du;  // along columns
  RowMatrix<Scalar> dv;  // along rows
};

/// Central differences, one-sided at the borders. A pixel whose own depth or
/// any 4-neighbor is invalid (0) gets gradient 0.
template <typename Derived>
DepthGradient<typename Derived::Scalar> depth_gradient(const Eigen::DenseBase<Derived>& depth) {
  using Scalar = typename Derived::Scalar;
  const auto& D = depth.derived();
  const Eigen::Index H = D.rows(), W = D.cols();
  DepthGradient<Scalar> g{RowMatrix<Scalar>::Zero(H, W), RowMatrix<Scalar>::Zero(H, W)};

  for (Eigen::Index r = 0; r < H; ++r) {
    for (Eigen::Index c = 0; c < W; ++c) {
      const Eigen::Index c0 = c > 0 ? c - 1 : c;
      const Eigen::Index c1 = c + 1 < W ? c + 1 : c;
      const Eigen::Index r0 = r > 0 ? r - 1 : r;
      const Eigen::Index r1 = r + 1 < H ? r + 1 : r;
      if (D(r, c) == 0 || D(r, c0) == 0 || D(r, c1) == 0 || D(r0, c) == 0 || D(r1, c) == 0) {
        continue;
      }
      if (c1 > c0) g.du(r, c) = (D(r, c1) - D(r, c0)) / Scalar(c1 - c0);
      if (r1 > r0) g.dv(r, c) = (D(r1, c) - D(r0, c)) / Scalar(r1 - r0);
    }
  }
  return g;
}

/// Gradient of r_d = z(X) - D(u(X), v(X)) with respect to the world point,
/// using the bilinearly sampled depth gradient at the projection.
template <typename Scalar, typename GradScalar>
Vector3<Scalar> residual_gradient(const Vector3<Scalar>& X, const CameraParams<Scalar>& cam,
                                  const ProjectionSample<Scalar>& sample,
                                  const DepthGradient<GradScalar>& grad) {
  if (!sample.visible) throw ContractViolation("residual_gradient: point is not visible");
  const Vector3<Scalar> xc = cam.to_camera(X);
  const Scalar x = xc.x(), y = xc.y(), z = xc.z();
  const auto s = bilinear_stencil(double(sample.u), double(sample.v), grad.du.cols(),
                                  grad.du.rows());
  if (!s) throw ContractViolation("residual_gradient: projection outside the gradient map");
  const Eigen::Vector2d dD = bilinear_blend(*s, [&](Eigen::Index r, Eigen::Index c) {
    return Eigen::Vector2d(double(grad.du(r, c)), double(grad.dv(r, c)));
  });
  const auto r1 = cam.rotation.row(0).transpose();
  const auto r2 = cam.rotation.row(1).transpose();
  const auto r3 = cam.rotation.row(2).transpose();
  const Vector3<Scalar> j_u = (cam.fx / z) * r1 - (cam.fx * x / (z * z)) * r3;
  const Vector3<Scalar> j_v = (cam.fy / z) * r2 - (cam.fy * y / (z * z)) * r3;
  return r3 - (Scalar(dD.x()) * j_u + Scalar(dD.y()) * j_v);
}

/// Convenience overload that projects first. Throws ContractViolation if the
/// point is not visible.
template <typename Scalar, typename Derived, typename GradScalar>
Vector3<Scalar> residual_gradient(
    const Vector3<Scalar>& X, const CameraParams<Scalar>& cam,
    const Eigen::DenseBase<Derived>& depth, const DepthGradient<GradScalar>& grad,
    Scalar occlusion_margin = std::numeric_limits<Scalar>::infinity()) {
  return residual_gradient(X, cam, project(X, cam, depth, occlusion_margin), grad);
}

/// One world point per pixel with depth > 0, colored from `colors`
/// ((H*W) x 3), appended to `out` with its source pixel recorded.
void unproject_into(PointCloud& out, const Eigen::Ref<const DepthMap>& depth, const Camera& cam,
                    const Eigen::Ref<const ColorImage>& colors, int frame);

PointCloud unproject(const Eigen::Ref<const DepthMap>& depth, const Camera& cam,
                     const Eigen::Ref<const ColorImage>& colors, int frame = 0);

/// Median of all valid (> 0) depths; 0 if there are none.
double median_valid_depth(std::span<const float> depths);

}  // namespace gramdyn
