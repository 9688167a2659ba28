#include "insp/kdtree.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <queue>

namespace insp {

KdTree::KdTree(std::vector<Vec3> points, int leaf_size) : points_(std::move(points)), leaf_size_(std::max(1, leaf_size)) {
  original_.resize(points_.size());
  std::iota(original_.begin(), original_.end(), 0);
  if (!points_.empty()) build(0, static_cast<int>(points_.size()));
  sorted_.reserve(points_.size());
  for (int i : original_) sorted_.push_back(points_[std::size_t(i)]);
}

int KdTree::build(int begin, int end) {
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back({});
  if (end - begin <= leaf_size_) {
    nodes_[std::size_t(id)].begin = begin;
    nodes_[std::size_t(id)].end = end;
    return id;
  }
  // Split on the axis of largest spread, at the median.
  Vec3 mn = Vec3::Constant(std::numeric_limits<double>::infinity()), mx = -mn;
  for (int i = begin; i < end; ++i) {
    const Vec3& p = points_[std::size_t(original_[std::size_t(i)])];
    mn = mn.cwiseMin(p);
    mx = mx.cwiseMax(p);
  }
  int axis = 0;
  (mx - mn).maxCoeff(&axis);
  const int mid = (begin + end) / 2;
  std::nth_element(original_.begin() + begin, original_.begin() + mid, original_.begin() + end, [&](int a, int b) {
    const double pa = points_[std::size_t(a)][axis], pb = points_[std::size_t(b)][axis];
    return pa < pb || (pa == pb && a < b);
  });
  const double split = points_[std::size_t(original_[std::size_t(mid)])][axis];
  const int left = build(begin, mid);
  const int right = build(mid, end);
  Node& n = nodes_[std::size_t(id)];
  n.axis = axis;
  n.split = split;
  n.left = left;
  n.right = right;
  return id;
}

// `visit(sorted_index, d2)` consumes leaf points; `visit.bound()` is the current pruning radius squared.
// Left holds values <= split, right values >= split.
template <class Visit>
void KdTree::search(int node, const Vec3& q, Visit& visit) const {
  const Node& n = nodes_[std::size_t(node)];
  if (n.axis < 0) {
    for (int i = n.begin; i < n.end; ++i) visit(i, (sorted_[std::size_t(i)] - q).squaredNorm());
    return;
  }
  const double diff = q[n.axis] - n.split;
  const int near = diff < 0 ? n.left : n.right;
  const int far = diff < 0 ? n.right : n.left;
  search(near, q, visit);
  if (diff * diff <= visit.bound()) search(far, q, visit);
}

namespace {

struct NearestVisit {
  const std::vector<int>& original;
  double best_d2;
  int best = -1;
  double bound() const { return best_d2; }
  void operator()(int i, double d2) {
    const int idx = original[std::size_t(i)];
    if (d2 < best_d2 || (d2 == best_d2 && (best < 0 || idx < best))) {
      best_d2 = d2;
      best = idx;
    }
  }
};

struct KnnVisit {
  const std::vector<int>& original;
  std::size_t k;
  std::priority_queue<std::pair<double, int>> heap;  // max-heap on (distance, index)
  double bound() const { return heap.size() < k ? std::numeric_limits<double>::infinity() : heap.top().first; }
  void operator()(int i, double d2) {
    const std::pair<double, int> cand{d2, original[std::size_t(i)]};
    if (heap.size() < k) {
      heap.push(cand);
    } else if (cand < heap.top()) {
      heap.pop();
      heap.push(cand);
    }
  }
};

}  // namespace

int KdTree::nearest(const Vec3& q, double max_dist, double* dist2) const {
  if (nodes_.empty()) return -1;
  NearestVisit v{original_, max_dist * max_dist};
  search(0, q, v);
  if (dist2 && v.best >= 0) *dist2 = v.best_d2;
  return v.best;
}

std::vector<int> KdTree::knn(const Vec3& q, int k) const {
  if (k <= 0 || nodes_.empty()) return {};
  KnnVisit v{original_, std::size_t(k), {}};
  search(0, q, v);
  std::vector<int> out(v.heap.size());
  for (std::size_t i = v.heap.size(); i-- > 0;) {
    out[i] = v.heap.top().second;
    v.heap.pop();
  }
  return out;
}

}  // namespace insp
