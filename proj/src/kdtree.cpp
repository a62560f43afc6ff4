#include "gedf/kdtree.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace gedf {

namespace {
constexpr std::size_t kLeafSize = 12;
}

KdTree::KdTree(std::span<const Eigen::Vector3d> points)
    : points_(points.begin(), points.end()), order_(points.size()) {
  std::iota(order_.begin(), order_.end(), 0);
  if (!points_.empty()) {
    nodes_.reserve(2 * points_.size() / kLeafSize + 2);
    build(0, points_.size());
  }
}

int KdTree::build(std::size_t begin, std::size_t end) {
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back({});
  nodes_[id].begin = begin;
  nodes_[id].end = end;
  if (end - begin <= kLeafSize) return id;

  Eigen::Vector3d lo = Eigen::Vector3d::Constant(std::numeric_limits<double>::infinity());
  Eigen::Vector3d hi = -lo;
  for (std::size_t i = begin; i < end; ++i) {
    lo = lo.cwiseMin(points_[order_[i]]);
    hi = hi.cwiseMax(points_[order_[i]]);
  }
  int axis = 0;
  (hi - lo).maxCoeff(&axis);
  if (hi[axis] == lo[axis]) return id;  // all duplicates

  const std::size_t mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(begin),
                   order_.begin() + static_cast<std::ptrdiff_t>(mid),
                   order_.begin() + static_cast<std::ptrdiff_t>(end),
                   [&](std::size_t a, std::size_t b) { return points_[a][axis] < points_[b][axis]; });
  const double split = points_[order_[mid]][axis];
  const int left = build(begin, mid);
  const int right = build(mid, end);
  nodes_[id].axis = axis;
  nodes_[id].split = split;
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

void KdTree::search(int node_id, const Eigen::Vector3d& q, std::size_t& best,
                    double& best_sq) const {
  const Node& node = nodes_[node_id];
  if (node.axis < 0) {
    for (std::size_t i = node.begin; i < node.end; ++i) {
      const double d = (points_[order_[i]] - q).squaredNorm();
      if (d < best_sq) {
        best_sq = d;
        best = order_[i];
      }
    }
    return;
  }
  const double diff = q[node.axis] - node.split;
  const int near = diff < 0.0 ? node.left : node.right;
  const int far = diff < 0.0 ? node.right : node.left;
  search(near, q, best, best_sq);
  if (diff * diff < best_sq) search(far, q, best, best_sq);
}

KdTree::Hit KdTree::nearest(const Eigen::Vector3d& query) const {
  if (points_.empty()) throw std::logic_error("KdTree::nearest on an empty tree");
  std::size_t best = 0;
  double best_sq = std::numeric_limits<double>::infinity();
  search(0, query, best, best_sq);
  return {best, std::sqrt(best_sq)};
}

}  // namespace gedf
