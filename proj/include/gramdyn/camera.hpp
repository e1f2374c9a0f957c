#pragma once

#include <cmath>

#include "gramdyn/eigen_types.hpp"

namespace gramdyn {

/// Pinhole camera with a world-to-camera pose (X_c = R X + t). Pixel (u, v)
/// addresses column u, row v; pixel centers sit on integer coordinates.
template <typename Scalar>
struct CameraParams {
  Scalar fx{1}, fy{1}, cx{0}, cy{0};
  Matrix3<Scalar> rotation = Matrix3<Scalar>::Identity();
  Vector3<Scalar> translation = Vector3<Scalar>::Zero();

  Vector3<Scalar> to_camera(const Vector3<Scalar>& world) const {
    return rotation * world + translation;
  }

  Vector3<Scalar> to_world(const Vector3<Scalar>& cam) const {
    return rotation.transpose() * (cam - translation);
  }

  /// Camera center in world coordinates.
  Vector3<Scalar> center() const { return -(rotation.transpose() * translation); }

  /// Back-projects pixel (u, v) at z-depth d to camera coordinates.
  Vector3<Scalar> pixel_to_camera(Scalar u, Scalar v, Scalar depth) const {
    return {(u - cx) / fx * depth, (v - cy) / fy * depth, depth};
  }

  bool valid(Scalar tolerance = Scalar(1e-5)) const {
    if (!(fx > 0) || !(fy > 0)) return false;
    if (!rotation.allFinite() || !translation.allFinite()) return false;
    const Matrix3<Scalar> gram = rotation * rotation.transpose();
    if ((gram - Matrix3<Scalar>::Identity()).cwiseAbs().maxCoeff() > tolerance) return false;
    return std::abs(rotation.determinant() - Scalar(1)) <= tolerance;
  }

  template <typename Other>
  CameraParams<Other> cast() const {
    CameraParams<Other> out;
    out.fx = Other(fx);
    out.fy = Other(fy);
    out.cx = Other(cx);
    out.cy = Other(cy);
    out.rotation = rotation.template cast<Other>();
    out.translation = translation.template cast<Other>();
    return out;
  }

  bool operator==(const CameraParams&) const = default;
};

using Camera = CameraParams<double>;

/// World-to-camera pose looking from `eye` at `target`, OpenCV axes
/// (x right, y down, z forward) with `up` as the world up direction.
template <typename Scalar>
CameraParams<Scalar> look_at(const Vector3<Scalar>& eye, const Vector3<Scalar>& target,
                             const Vector3<Scalar>& up, Scalar fx, Scalar fy, Scalar cx,
                             Scalar cy) {
  const Vector3<Scalar> forward = (target - eye).normalized();
  const Vector3<Scalar> right = forward.cross(up).normalized();
  const Vector3<Scalar> down = forward.cross(right);
  CameraParams<Scalar> cam;
  cam.fx = fx;
  cam.fy = fy;
  cam.cx = cx;
  cam.cy = cy;
  cam.rotation.row(0) = right.transpose();
  cam.rotation.row(1) = down.transpose();
  cam.rotation.row(2) = forward.transpose();
  cam.translation = -(cam.rotation * eye);
  return cam;
}

}  // namespace gramdyn
