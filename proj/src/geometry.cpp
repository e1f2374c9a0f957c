#include "gramdyn/geometry.hpp"

#include <algorithm>
#include <vector>

#include "gramdyn/point_cloud.hpp"

namespace gramdyn {

void unproject_into(PointCloud& out, const Eigen::Ref<const DepthMap>& depth, const Camera& cam,
                    const Eigen::Ref<const ColorImage>& colors, int frame) {
  const Eigen::Index H = depth.rows(), W = depth.cols();
  if (colors.rows() != H * W) {
    throw SchemaError("unproject: color image has " + std::to_string(colors.rows()) +
                      " pixels, depth map has " + std::to_string(H * W));
  }
  const Eigen::Index valid = (depth.array() > 0.0f).count();
  const Eigen::Index base = static_cast<Eigen::Index>(out.size());
  out.positions.conservativeResize(base + valid, Eigen::NoChange);
  out.colors.conservativeResize(base + valid, Eigen::NoChange);
  out.dynamic_flag.resize(static_cast<std::size_t>(base + valid), 0);
  out.source.resize(static_cast<std::size_t>(base + valid));

  const Matrix3<double> Rt = cam.rotation.transpose();
  Eigen::Index i = base;
  for (Eigen::Index r = 0; r < H; ++r) {
    for (Eigen::Index c = 0; c < W; ++c) {
      const float d = depth(r, c);
      if (!(d > 0.0f)) continue;
      const Vector3<double> xc = cam.pixel_to_camera(double(c), double(r), double(d));
      out.positions.row(i) = (Rt * (xc - cam.translation)).transpose();
      out.colors.row(i) = colors.row(r * W + c);
      out.source[static_cast<std::size_t>(i)] = {frame, static_cast<std::int32_t>(r),
                                                 static_cast<std::int32_t>(c)};
      ++i;
    }
  }
}

PointCloud unproject(const Eigen::Ref<const DepthMap>& depth, const Camera& cam,
                     const Eigen::Ref<const ColorImage>& colors, int frame) {
  PointCloud pc;
  pc.resize(0);
  unproject_into(pc, depth, cam, colors, frame);
  return pc;
}

double median_valid_depth(std::span<const float> depths) {
  std::vector<float> valid;
  valid.reserve(depths.size());
  for (float d : depths) {
    if (d > 0.0f) valid.push_back(d);
  }
  if (valid.empty()) return 0.0;
  const auto mid = valid.begin() + static_cast<std::ptrdiff_t>(valid.size() / 2);
  std::nth_element(valid.begin(), mid, valid.end());
  if (valid.size() % 2 == 1) return *mid;
  const float upper = *mid;
  const float lower = *std::max_element(valid.begin(), mid);
  return 0.5 * (double(lower) + double(upper));
}

}  // namespace gramdyn
