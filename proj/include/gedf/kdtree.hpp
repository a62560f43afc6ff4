#pragma once

#include <span>
#include <vector>

#include <Eigen/Core>

namespace gedf {

/// Static 3-D k-d tree answering exact nearest-neighbor queries.
class KdTree {
 public:
  KdTree() = default;
  explicit KdTree(std::span<const Eigen::Vector3d> points);

  bool empty() const { return points_.empty(); }
  std::size_t size() const { return points_.size(); }

  struct Hit {
    std::size_t index = 0;
    double distance = 0.0;
  };
  /// Nearest stored point. Requires a non-empty tree.
  Hit nearest(const Eigen::Vector3d& query) const;

 private:
  struct Node {
    int axis = -1;  // -1 marks a leaf
    double split = 0.0;
    std::size_t begin = 0;
    std::size_t end = 0;
    int left = -1;
    int right = -1;
  };

  int build(std::size_t begin, std::size_t end);
  void search(int node, const Eigen::Vector3d& q, std::size_t& best, double& best_sq) const;

  std::vector<Eigen::Vector3d> points_;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
};

}  // namespace gedf
