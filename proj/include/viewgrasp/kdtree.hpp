#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <queue>
#include <vector>

namespace viewgrasp {

/// Static kd-tree over points in R^Dim with exact nearest, k-nearest and
/// radius queries (squared Euclidean metric). Read-only after construction.
template <int Dim>
class KdTree {
 public:
  using Point = Eigen::Matrix<double, Dim, 1>;

  struct Neighbor {
    std::uint32_t index;
    double dist2;
  };

  KdTree() = default;
  explicit KdTree(std::vector<Point> points) : points_(std::move(points)) {
    order_.resize(points_.size());
    std::iota(order_.begin(), order_.end(), 0u);
    if (!points_.empty()) {
      nodes_.reserve(2 * points_.size() / kLeafSize + 2);
      build(0, static_cast<std::uint32_t>(points_.size()));
    }
  }

  std::size_t size() const { return points_.size(); }
  bool empty() const { return points_.empty(); }
  const Point& point(std::size_t i) const { return points_[i]; }

  /// Exact nearest neighbour; index is size() when the tree is empty.
  Neighbor nearest(const Point& q) const {
    Neighbor best{static_cast<std::uint32_t>(points_.size()), std::numeric_limits<double>::infinity()};
    if (!nodes_.empty()) nearest_rec(0, q, best);
    return best;
  }

  /// The k nearest points sorted by increasing distance.
  std::vector<Neighbor> knn(const Point& q, std::size_t k) const {
    std::vector<Neighbor> heap;
    if (k == 0 || nodes_.empty()) return heap;
    heap.reserve(k + 1);
    knn_rec(0, q, k, heap);
    std::sort_heap(heap.begin(), heap.end(), less_dist);
    return heap;
  }

  /// All points with squared distance <= r2, unsorted.
  void radius(const Point& q, double r2, std::vector<Neighbor>& out) const {
    out.clear();
    if (!nodes_.empty()) radius_rec(0, q, r2, out);
  }

 private:
  static constexpr std::uint32_t kLeafSize = 8;

  struct Node {
    std::uint32_t begin, end;  // range in order_
    std::uint32_t left = 0, right = 0;
    int axis = -1;  // -1 for leaves
    double split = 0.0;
  };

  static bool less_dist(const Neighbor& a, const Neighbor& b) { return a.dist2 < b.dist2; }

  std::uint32_t build(std::uint32_t begin, std::uint32_t end) {
    const auto id = static_cast<std::uint32_t>(nodes_.size());
    nodes_.push_back(Node{begin, end});
    if (end - begin <= kLeafSize) return id;
    Point lo = points_[order_[begin]], hi = lo;
    for (std::uint32_t i = begin + 1; i < end; ++i) {
      lo = lo.cwiseMin(points_[order_[i]]);
      hi = hi.cwiseMax(points_[order_[i]]);
    }
    int axis = 0;
    (hi - lo).maxCoeff(&axis);
    if (hi[axis] - lo[axis] <= 0.0) return id;  // all coincident
    const std::uint32_t mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](std::uint32_t a, std::uint32_t b) { return points_[a][axis] < points_[b][axis]; });
    const double split = points_[order_[mid]][axis];
    const std::uint32_t l = build(begin, mid);
    const std::uint32_t r = build(mid, end);
    nodes_[id].axis = axis;
    nodes_[id].split = split;
    nodes_[id].left = l;
    nodes_[id].right = r;
    return id;
  }

  void nearest_rec(std::uint32_t n, const Point& q, Neighbor& best) const {
    const Node& node = nodes_[n];
    if (node.axis < 0) {
      for (std::uint32_t i = node.begin; i < node.end; ++i) {
        const double d = (points_[order_[i]] - q).squaredNorm();
        if (d < best.dist2 || (d == best.dist2 && order_[i] < best.index)) best = {order_[i], d};
      }
      return;
    }
    const double diff = q[node.axis] - node.split;
    const std::uint32_t first = diff < 0.0 ? node.left : node.right;
    const std::uint32_t second = diff < 0.0 ? node.right : node.left;
    nearest_rec(first, q, best);
    if (diff * diff <= best.dist2) nearest_rec(second, q, best);
  }

  void knn_rec(std::uint32_t n, const Point& q, std::size_t k, std::vector<Neighbor>& heap) const {
    const Node& node = nodes_[n];
    if (node.axis < 0) {
      for (std::uint32_t i = node.begin; i < node.end; ++i) {
        const double d = (points_[order_[i]] - q).squaredNorm();
        if (heap.size() < k) {
          heap.push_back({order_[i], d});
          std::push_heap(heap.begin(), heap.end(), less_dist);
        } else if (d < heap.front().dist2) {
          std::pop_heap(heap.begin(), heap.end(), less_dist);
          heap.back() = {order_[i], d};
          std::push_heap(heap.begin(), heap.end(), less_dist);
        }
      }
      return;
    }
    const double diff = q[node.axis] - node.split;
    const std::uint32_t first = diff < 0.0 ? node.left : node.right;
    const std::uint32_t second = diff < 0.0 ? node.right : node.left;
    knn_rec(first, q, k, heap);
    if (heap.size() < k || diff * diff <= heap.front().dist2) knn_rec(second, q, k, heap);
  }

  void radius_rec(std::uint32_t n, const Point& q, double r2, std::vector<Neighbor>& out) const {
    const Node& node = nodes_[n];
    if (node.axis < 0) {
      for (std::uint32_t i = node.begin; i < node.end; ++i) {
        const double d = (points_[order_[i]] - q).squaredNorm();
        if (d <= r2) out.push_back({order_[i], d});
      }
      return;
    }
    const double diff = q[node.axis] - node.split;
    const std::uint32_t first = diff < 0.0 ? node.left : node.right;
    const std::uint32_t second = diff < 0.0 ? node.right : node.left;
    radius_rec(first, q, r2, out);
    if (diff * diff <= r2) radius_rec(second, q, r2, out);
  }

  std::vector<Point> points_;
  std::vector<std::uint32_t> order_;
  std::vector<Node> nodes_;
};

}  // namespace viewgrasp
