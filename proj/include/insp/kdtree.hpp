#pragma once

#include <vector>

#include "insp/geometry.hpp"

namespace insp {

/// Static 3D kd-tree over a point set. Distance ties resolve to the lower index.
class KdTree {
 public:
  KdTree() = default;
  explicit KdTree(std::vector<Vec3> points, int leaf_size = 8);

  const std::vector<Vec3>& points() const { return points_; }
  std::size_t size() const { return points_.size(); }

  /// Index of the nearest point within max_dist, or -1.
  int nearest(const Vec3& q, double max_dist, double* dist2 = nullptr) const;
  /// The k nearest points ordered by (distance, index).
  std::vector<int> knn(const Vec3& q, int k) const;

 private:
  struct Node {
    double split = 0.0;
    int axis = -1;  // -1 for leaves
    int left = -1, right = -1;
    int begin = 0, end = 0;  // leaf range in sorted_
  };
  int build(int begin, int end);
  template <class Visit>
  void search(int node, const Vec3& q, Visit& visit) const;

  std::vector<Vec3> points_;
  std::vector<Vec3> sorted_;   // points in leaf order
  std::vector<int> original_;  // sorted_ position -> input index
  std::vector<Node> nodes_;
  int leaf_size_ = 8;
};

}  // namespace insp
