#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace gramdyn {

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using Vector3 = Eigen::Matrix<Scalar, 3, 1>;

template <typename Scalar>
using Matrix3 = Eigen::Matrix<Scalar, 3, 3>;

// Per-frame token tensors (Np x c) as laid out in the blobs.
using TokenMatrix = RowMatrix<float>;
using TokenMap = Eigen::Map<const TokenMatrix>;

// H x W images addressed as (row, col).
using DepthMap = RowMatrix<float>;
using DepthView = Eigen::Map<const DepthMap>;

// F x Np per-token maps (statistics, saliency).
using FrameMap = RowMatrix<double>;

// H*W x 3 colors, pixel index = row * W + col.
using ColorImage = Eigen::Matrix<float, Eigen::Dynamic, 3, Eigen::RowMajor>;
using ColorView = Eigen::Map<const ColorImage>;

}  // namespace gramdyn
