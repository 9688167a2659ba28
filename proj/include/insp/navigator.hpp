#pragma once

#include <optional>
#include <vector>

#include "insp/control.hpp"
#include "insp/mapping.hpp"
#include "insp/planning.hpp"

namespace insp::nav {

struct NavConfig {
  mapping::MapConfig map;
  double slide_threshold = 2.0;   // m between the vehicle and the window centre before sliding
  int global_update_every = 5;    // scans between global-map updates
  double reference_speed = 1.2;   // m/s along the reference path
  int horizon = 20;
  double mpc_dt = 0.1;
  control::MpcWeights weights;
  double v_max_axis = 2.5 / 1.7320508075688772;  // keeps |v| under the vehicle limit on diagonals
  double a_max = 6.0;
  int max_box_edge = 20;
  std::size_t max_expansions = 400000;
  int escape_limit = 4000;  // cells explored when leaving an inflated start cell
  bool allow_partial = true;  // plan to the reachable cell nearest an unreachable goal
};

enum class PlanStatus { Ok, Partial, StartUnknown, StartBlocked, GoalOutside, GoalBlocked, NoPath, CorridorFailed };
const char* to_string(PlanStatus s);

struct Plan {
  planning::GridPath path;
  planning::Corridor corridor;
  std::vector<Vec3> reference;  // polyline: current position, path cells, exact goal
  Vec3 goal = Vec3::Zero();  // where the plan ends
};

struct ControlOutput {
  Vec3 accel = Vec3::Zero();
  bool feasible = false;
  bool needs_replan = false;
  int box_violations = 0;  // predicted stages outside their box by more than 1e-6 (feasible solves only)
  std::size_t stages_checked = 0;
};

/// World-frame mapping, planning and corridor-constrained MPC for one vehicle.
class Navigator {
 public:
  Navigator(const NavConfig& config, const Vec3& start, std::optional<mapping::GlobalMap> global = std::nullopt);

  const NavConfig& config() const { return config_; }
  const mapping::LocalMap& map() const { return map_; }
  const mapping::GlobalMap& global() const { return global_; }
  mapping::GlobalMap& global() { return global_; }

  /// Integrates one world-frame scan, slides the window after the vehicle and
  /// marks the corridor stale when a delta lands inside one of its boxes.
  mapping::MapUpdate integrate(const lidar::ScanFrame& frame, const Vec3& vehicle);
  void flush_global();

  bool in_window(const Vec3& p) const { return map_.prob().in_window(map_.prob().cell_of(p)); }
  bool traversable(const Vec3& p) const;
  /// Inflation state at a point; OccupiedInflation outside the window.
  mapping::InflationState inflation(const Vec3& p) const;
  /// nearest_no_inflation, or nullopt when the point is outside the window or nothing is free.
  std::optional<Vec3> nearest_free(const Vec3& p) const;
  /// Moves `goal` toward `from` until it lies inside the window (with a one-cell margin).
  Vec3 clamp_to_window(const Vec3& from, const Vec3& goal) const;

  /// A* on the inflated map plus a corridor. A start cell that is Known Free
  /// but inflated is left along a Known Free escape path first. When the goal
  /// cannot be reached the plan ends at the reachable cell nearest to it
  /// (status Partial) if allowed.
  PlanStatus plan(const Vec3& position, const Vec3& goal);
  bool has_plan() const { return plan_.has_value(); }
  const std::optional<Plan>& current_plan() const { return plan_; }
  void clear_plan() { plan_.reset(); }
  bool stale() const { return stale_; }

  /// One MPC solve along the current plan; brakes when there is no usable plan.
  ControlOutput control(const Vec3& position, const Vec3& velocity) const;

 private:
  std::optional<std::vector<Cell>> escape_path(const Cell& start) const;

  NavConfig config_;
  mapping::LocalMap map_;
  mapping::GlobalMap global_;
  std::optional<Plan> plan_;
  bool stale_ = false;
  int scans_ = 0;
};

}  // namespace insp::nav
