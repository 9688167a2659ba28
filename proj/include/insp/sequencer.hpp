#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "insp/mapping.hpp"

namespace insp::sequencer {

struct InspectionPoint {
  Vec3 position = Vec3::Zero();
  double yaw = 0.0;           // [-pi, pi)
  double gimbal_pitch = 0.0;  // [-pi/2, pi/2]
  int recorded_index = 0;

  bool valid() const;
  friend bool operator==(const InspectionPoint&, const InspectionPoint&) = default;
};

inline constexpr double kUnreachable = 1e9;

struct DistanceMatrix {
  int n = 0;
  std::vector<double> cost;
  std::vector<std::uint8_t> unreachable;

  explicit DistanceMatrix(int size = 0)
      : n(size),
        cost(static_cast<std::size_t>(size) * static_cast<std::size_t>(size), 0.0),
        unreachable(static_cast<std::size_t>(size) * static_cast<std::size_t>(size), 0) {}

  double at(int i, int j) const { return cost[index(i, j)]; }
  bool is_unreachable(int i, int j) const { return unreachable[index(i, j)] != 0; }
  void set(int i, int j, double c, bool unreach = false);
  std::size_t index(int i, int j) const { return static_cast<std::size_t>(i) * static_cast<std::size_t>(n) + static_cast<std::size_t>(j); }

  /// Builds a matrix from pairwise Euclidean distances.
  static DistanceMatrix euclidean(const std::vector<Vec3>& points);
};

struct Tour {
  std::vector<int> order;
  double cost = 0.0;
};

class SequencerError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Closed-tour cost: consecutive legs plus the return leg.
double tour_cost(const DistanceMatrix& m, const std::vector<int>& order);

/// Entry (i, j) = |p_i - c_i| + A*(c_i, c_j) + |c_j - p_j| on the global map,
/// c being the coarse cell centres. Unreachable pairs get kUnreachable and a flag.
/// Throws SequencerError for a point outside the global extent.
DistanceMatrix build_distance_matrix(const std::vector<InspectionPoint>& points, const mapping::GlobalMap& global);
namespace serial {
DistanceMatrix build_distance_matrix(const std::vector<InspectionPoint>& points, const mapping::GlobalMap& global);
}  // namespace serial

inline constexpr int kHeldKarpMax = 13;

/// Exact fixed-start tour by subset dynamic programming; the lexicographically
/// smallest among optimal tours. Throws SequencerError when n > kHeldKarpMax.
Tour held_karp(const DistanceMatrix& m);

/// Nearest neighbour (or identity, whichever is cheaper), then 2-opt and
/// Or-opt to local optimality. Candidate lists of 8 neighbours when n > 12.
Tour solve_heuristic(const DistanceMatrix& m);

struct OptimizationResult {
  std::vector<InspectionPoint> ordered;
  Tour tour;
  double recorded_cost = 0.0;
  double optimized_cost = 0.0;
  double reduction = 0.0;  // fraction of the recorded cost saved
  std::vector<int> unreachable_points;
  DistanceMatrix matrix;
};

OptimizationResult optimize_points(const std::vector<InspectionPoint>& recorded, const mapping::GlobalMap& global);

}  // namespace insp::sequencer
