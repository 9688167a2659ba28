#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <vector>

#include "insp/dynamics.hpp"
#include "insp/mapping.hpp"

namespace insp::planning {

/// Pilot stick input: forward, lateral, vertical, yaw rate; all in [-1, 1].
struct JoystickCommand {
  std::array<double, 4> axes{0.0, 0.0, 0.0, 0.0};
  bool record_pressed = false;
  double gimbal_axis = 0.0;

  bool valid() const;
  /// Copy with every axis clamped into [-1, 1].
  JoystickCommand clamped() const;
};

struct LocalGoal {
  Vec3 position = Vec3::Zero();
  double yaw = 0.0;
};

/// Goal = p + R(yaw) * axes_xyz * horizon; yaw reference advances by
/// axis 3 * yaw_rate_max over one planner tick.
LocalGoal compute_local_goal(const JoystickCommand& cmd, const sim::QuadState& state, double horizon,
                             double yaw_rate_max = sim::QuadLimits{}.yaw_rate_max, double tick = 0.1);

struct GridPath {
  std::vector<Cell> cells;
  std::vector<Vec3> waypoints;  // cell centres
  double length = 0.0;
  bool empty() const { return cells.empty(); }
};

enum class SearchStatus { Found, StartBlocked, GoalBlocked, Unreachable, LimitReached };
const char* to_string(SearchStatus s);

struct SearchResult {
  SearchStatus status = SearchStatus::Unreachable;
  GridPath path;
  std::size_t expansions = 0;
  /// Expanded cell nearest the goal (Euclidean), ties to the lower cost, then
  /// the lexicographically smaller cell. Meaningful when the search failed.
  Cell closest = Cell::Zero();
  bool ok() const { return status == SearchStatus::Found; }
};

struct SearchOptions {
  std::size_t max_expansions = 0;  // 0 = unlimited
};

/// Grid abstraction for the search: a traversability predicate plus resolution.
struct SearchGrid {
  double resolution = 0.2;
  std::function<bool(const Cell&)> traversable;
};

/// 26-connected A* with Euclidean costs and heuristic. Ties on f go to the
/// lower heuristic, then to the lexicographically smaller cell.
SearchResult astar(const Cell& start, const Cell& goal, const SearchGrid& grid, const SearchOptions& opts = {});
SearchResult astar(const Vec3& start, const Vec3& goal, const mapping::InflatedMap& map, const SearchOptions& opts = {});
SearchResult astar(const Vec3& start, const Vec3& goal, const mapping::GlobalMap& map, const SearchOptions& opts = {});

/// Exact length of a 26-connected step sequence: res * (axis + sqrt2 * face + sqrt3 * cube).
double canonical_length(const std::vector<Cell>& cells, double resolution);

struct Corridor {
  std::vector<Box> boxes;                        // meters
  std::vector<std::pair<Cell, Cell>> cell_boxes;  // inclusive min/max cell of each box
};

class CorridorError : public std::runtime_error {
 public:
  explicit CorridorError(const std::string& what, int waypoint = -1)
      : std::runtime_error(what), waypoint_(waypoint) {}
  int waypoint() const { return waypoint_; }

 private:
  int waypoint_;
};

/// Greedy box-expansion corridor along a path of Known Free cells.
/// Throws CorridorError when a waypoint is not Known Free.
Corridor generate_sfc(const GridPath& path, const mapping::ProbabilityMap& prob, int max_box_edge = 20);

/// Nearest Free global-map cell by 6-connected BFS (same neighbour order),
/// at most `max_depth` steps from the point's own cell.
std::optional<Cell> nearest_free_cell(const mapping::GlobalMap& global, const Vec3& point, int max_depth = 3);

/// A* between two points on the global map, with each endpoint snapped to its
/// nearest Free cell. The path length includes the snapping legs.
SearchResult astar_snapped(const Vec3& start, const Vec3& goal, const mapping::GlobalMap& map, int max_snap = 3,
                           const SearchOptions& opts = {});

/// 6-connected BFS (order +x,-x,+y,-y,+z,-z) to the first NoInflation cell.
/// Throws mapping::OutOfWindow when the point lies outside the window.
std::optional<Vec3> nearest_no_inflation(const Vec3& point, const mapping::InflatedMap& inflated);

}  // namespace insp::planning
