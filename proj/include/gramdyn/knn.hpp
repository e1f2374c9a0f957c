#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <queue>
#include <utility>
#include <vector>

#include "gramdyn/eigen_types.hpp"

namespace gramdyn {

/// Squared Euclidean distance, summed x, y, z in that order. Every kNN
/// consumer uses this exact expression so results are reproducible by a
/// brute-force scan.
template <typename Scalar>
inline Scalar squared_distance(const Scalar* a, const Scalar* b) {
  const Scalar dx = a[0] - b[0];
  const Scalar dy = a[1] - b[1];
  const Scalar dz = a[2] - b[2];
  return dx * dx + dy * dy + dz * dz;
}

struct Neighbor {
  double distance_sq = 0.0;
  std::size_t index = 0;
};

/// Static 3-D kd-tree over a row-major N x 3 point array. The points must
/// outlive the tree.
template <typename Scalar>
class KdTree {
 public:
  using Points = Eigen::Matrix<Scalar, Eigen::Dynamic, 3, Eigen::RowMajor>;

  explicit KdTree(const Points& points, std::size_t leaf_size = 16)
      : points_(points), leaf_size_(std::max<std::size_t>(leaf_size, 1)) {
    order_.resize(static_cast<std::size_t>(points.rows()));
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    if (!order_.empty()) build(0, order_.size());
  }

  std::size_t size() const { return order_.size(); }

  /// The k nearest points to `query`, ascending by (distance, index).
  /// `exclude` skips one index (pass the query's own index for self-free kNN).
  std::vector<Neighbor> nearest(const Scalar* query, std::size_t k,
                                std::size_t exclude = kNone) const {
    std::priority_queue<std::pair<double, std::size_t>> heap;
    if (k > 0 && !nodes_.empty()) search(0, query, k, exclude, heap);
    std::vector<Neighbor> out(heap.size());
    for (std::size_t i = heap.size(); i-- > 0;) {
      out[i] = {heap.top().first, heap.top().second};
      heap.pop();
    }
    return out;
  }

  static constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();

 private:
  struct Node {
    std::size_t begin = 0, end = 0;  // range in order_
    int axis = -1;                   // -1 for leaves
    Scalar split{0};
    std::size_t left = 0, right = 0;
    Scalar lo[3]{}, hi[3]{};  // bounding box
  };

  const Scalar* point(std::size_t i) const { return points_.data() + 3 * i; }

  std::size_t build(std::size_t begin, std::size_t end) {
    const std::size_t id = nodes_.size();
    nodes_.push_back({});
    Node node;
    node.begin = begin;
    node.end = end;
    for (int a = 0; a < 3; ++a) {
      node.lo[a] = std::numeric_limits<Scalar>::infinity();
      node.hi[a] = -std::numeric_limits<Scalar>::infinity();
    }
    for (std::size_t i = begin; i < end; ++i) {
      const Scalar* p = point(order_[i]);
      for (int a = 0; a < 3; ++a) {
        node.lo[a] = std::min(node.lo[a], p[a]);
        node.hi[a] = std::max(node.hi[a], p[a]);
      }
    }
    if (end - begin > leaf_size_) {
      int axis = 0;
      for (int a = 1; a < 3; ++a) {
        if (node.hi[a] - node.lo[a] > node.hi[axis] - node.lo[axis]) axis = a;
      }
      if (node.hi[axis] > node.lo[axis]) {
        const std::size_t mid = begin + (end - begin) / 2;
        std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(begin),
                         order_.begin() + static_cast<std::ptrdiff_t>(mid),
                         order_.begin() + static_cast<std::ptrdiff_t>(end),
                         [&](std::size_t x, std::size_t y) {
                           const Scalar px = point(x)[axis], py = point(y)[axis];
                           return px < py || (px == py && x < y);
                         });
        node.axis = axis;
        node.split = point(order_[mid])[axis];
        node.left = build(begin, mid);
        node.right = build(mid, end);
      }
    }
    nodes_[id] = node;
    return id;
  }

  static double box_distance_sq(const Node& n, const Scalar* q) {
    double d = 0.0;
    for (int a = 0; a < 3; ++a) {
      double excess = 0.0;
      if (q[a] < n.lo[a]) excess = double(n.lo[a]) - double(q[a]);
      else if (q[a] > n.hi[a]) excess = double(q[a]) - double(n.hi[a]);
      d += excess * excess;
    }
    return d;
  }

  void search(std::size_t id, const Scalar* q, std::size_t k, std::size_t exclude,
              std::priority_queue<std::pair<double, std::size_t>>& heap) const {
    const Node& n = nodes_[id];
    // The slack keeps rounding in the box bound from pruning exact ties.
    if (heap.size() == k && box_distance_sq(n, q) > heap.top().first * (1.0 + 1e-12)) return;
    if (n.axis < 0) {
      for (std::size_t i = n.begin; i < n.end; ++i) {
        const std::size_t idx = order_[i];
        if (idx == exclude) continue;
        const std::pair<double, std::size_t> cand{double(squared_distance(q, point(idx))), idx};
        if (heap.size() < k) {
          heap.push(cand);
        } else if (cand < heap.top()) {
          heap.pop();
          heap.push(cand);
        }
      }
      return;
    }
    const bool go_left = q[n.axis] < n.split;
    search(go_left ? n.left : n.right, q, k, exclude, heap);
    search(go_left ? n.right : n.left, q, k, exclude, heap);
  }

  const Points& points_;
  std::size_t leaf_size_;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
};

}  // namespace gramdyn
