#include "insp/planning.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <queue>
#include <string>
#include <unordered_map>

namespace insp::planning {

using mapping::CellClass;
using mapping::InflationState;

bool JoystickCommand::valid() const {
  for (double a : axes)
    if (!(a >= -1.0 && a <= 1.0)) return false;
  return gimbal_axis >= -1.0 && gimbal_axis <= 1.0;
}

JoystickCommand JoystickCommand::clamped() const {
  JoystickCommand c = *this;
  for (double& a : c.axes) a = std::isfinite(a) ? std::clamp(a, -1.0, 1.0) : 0.0;
  c.gimbal_axis = std::isfinite(gimbal_axis) ? std::clamp(gimbal_axis, -1.0, 1.0) : 0.0;
  return c;
}

LocalGoal compute_local_goal(const JoystickCommand& cmd, const sim::QuadState& state, double horizon,
                             double yaw_rate_max, double tick) {
  if (!(horizon > 0.0)) throw std::invalid_argument("compute_local_goal: horizon must be positive");
  const JoystickCommand c = cmd.clamped();
  const Vec3 body(c.axes[0], c.axes[1], c.axes[2]);
  LocalGoal g;
  g.position = state.position + yaw_rotation(state.yaw) * (body * horizon);
  g.yaw = c.axes[3] == 0.0 ? state.yaw : wrap_angle(state.yaw + c.axes[3] * yaw_rate_max * tick);
  return g;
}

const char* to_string(SearchStatus s) {
  switch (s) {
    case SearchStatus::Found: return "found";
    case SearchStatus::StartBlocked: return "start_blocked";
    case SearchStatus::GoalBlocked: return "goal_blocked";
    case SearchStatus::Unreachable: return "unreachable";
    case SearchStatus::LimitReached: return "limit_reached";
  }
  return "?";
}

namespace {

const double kSqrt2 = std::sqrt(2.0);
const double kSqrt3 = std::sqrt(3.0);

// Step counts by kind: axis, face-diagonal, cube-diagonal.
struct StepCounts {
  int axis = 0, face = 0, cube = 0;
  double value() const { return axis + kSqrt2 * face + kSqrt3 * cube; }
  StepCounts plus(int kind) const {
    StepCounts s = *this;
    if (kind == 1) ++s.axis;
    if (kind == 2) ++s.face;
    if (kind == 3) ++s.cube;
    return s;
  }
  friend bool operator==(const StepCounts&, const StepCounts&) = default;
};

struct NodeInfo {
  StepCounts g;
  double g_value = 0.0;
  Cell parent = Cell::Zero();
  bool has_parent = false;
  bool closed = false;
};

struct QueueEntry {
  double f;
  double h;
  Cell cell;
  double g_value;
};

struct QueueOrder {
  // priority_queue pops the "largest"; invert so the best entry comes first.
  bool operator()(const QueueEntry& a, const QueueEntry& b) const {
    if (a.f != b.f) return a.f > b.f;
    if (a.h != b.h) return a.h > b.h;
    return cell_less(b.cell, a.cell);
  }
};

std::vector<Cell> neighbour_offsets() {
  std::vector<Cell> out;
  for (int x = -1; x <= 1; ++x)
    for (int y = -1; y <= 1; ++y)
      for (int z = -1; z <= 1; ++z)
        if (x || y || z) out.emplace_back(x, y, z);
  return out;
}

int step_kind(const Cell& d) { return std::abs(d.x()) + std::abs(d.y()) + std::abs(d.z()); }

GridPath make_path(std::vector<Cell> cells, double res) {
  GridPath p;
  p.waypoints.reserve(cells.size());
  for (const Cell& c : cells) p.waypoints.push_back(cell_center(c, res));
  p.length = canonical_length(cells, res);
  p.cells = std::move(cells);
  return p;
}

}  // namespace

double canonical_length(const std::vector<Cell>& cells, double resolution) {
  StepCounts s;
  for (std::size_t i = 1; i < cells.size(); ++i) {
    const Cell d = cells[i] - cells[i - 1];
    if ((d.array().abs() > 1).any()) throw std::invalid_argument("canonical_length: cells are not 26-adjacent");
    s = s.plus(step_kind(d));
  }
  return resolution * s.value();
}

SearchResult astar(const Cell& start, const Cell& goal, const SearchGrid& grid, const SearchOptions& opts) {
  SearchResult r;
  if (!grid.traversable(start)) {
    r.status = SearchStatus::StartBlocked;
    return r;
  }
  if (!grid.traversable(goal)) {
    r.status = SearchStatus::GoalBlocked;
    return r;
  }
  static const std::vector<Cell> offsets = neighbour_offsets();
  auto heuristic = [&](const Cell& c) { return (goal - c).cast<double>().norm(); };

  std::unordered_map<Cell, NodeInfo, CellHash, CellEqual> nodes;
  std::priority_queue<QueueEntry, std::vector<QueueEntry>, QueueOrder> open;
  nodes[start] = NodeInfo{};
  open.push({heuristic(start), heuristic(start), start, 0.0});
  r.closest = start;
  double closest_h = heuristic(start), closest_g = 0.0;

  while (!open.empty()) {
    const QueueEntry top = open.top();
    open.pop();
    NodeInfo& node = nodes[top.cell];
    if (node.closed || top.g_value != node.g_value) continue;
    node.closed = true;
    ++r.expansions;
    if (top.h < closest_h ||
        (top.h == closest_h && (top.g_value < closest_g ||
                                      (top.g_value == closest_g && cell_less(top.cell, r.closest))))) {
      r.closest = top.cell;
      closest_h = top.h;
      closest_g = top.g_value;
    }
    if (top.cell == goal) {
      std::vector<Cell> cells{goal};
      Cell c = goal;
      while (nodes[c].has_parent) {
        c = nodes[c].parent;
        cells.push_back(c);
      }
      std::reverse(cells.begin(), cells.end());
      r.status = SearchStatus::Found;
      r.path = make_path(std::move(cells), grid.resolution);
      return r;
    }
    if (opts.max_expansions && r.expansions >= opts.max_expansions) {
      r.status = SearchStatus::LimitReached;
      return r;
    }
    const StepCounts g = node.g;
    for (const Cell& o : offsets) {
      const Cell n = top.cell + o;
      if (!grid.traversable(n)) continue;
      const StepCounts ng = g.plus(step_kind(o));
      const double ngv = ng.value();
      auto [it, inserted] = nodes.try_emplace(n);
      NodeInfo& info = it->second;
      if (info.closed) continue;
      if (!inserted && ngv >= info.g_value) continue;
      info.g = ng;
      info.g_value = ngv;
      info.parent = top.cell;
      info.has_parent = true;
      const double h = heuristic(n);
      open.push({ngv + h, h, n, ngv});
    }
  }
  r.status = SearchStatus::Unreachable;
  return r;
}

SearchResult astar(const Vec3& start, const Vec3& goal, const mapping::InflatedMap& map, const SearchOptions& opts) {
  SearchGrid grid{map.resolution(), [&map](const Cell& c) { return map.traversable(c); }};
  return astar(map.cell_of(start), map.cell_of(goal), grid, opts);
}

SearchResult astar(const Vec3& start, const Vec3& goal, const mapping::GlobalMap& map, const SearchOptions& opts) {
  SearchGrid grid{map.resolution(), [&map](const Cell& c) { return map.traversable(c); }};
  return astar(map.cell_of(start), map.cell_of(goal), grid, opts);
}

// ---------------------------------------------------------------- Corridor

namespace {

bool block_free(const mapping::ProbabilityMap& prob, const Cell& lo, const Cell& hi) {
  for (int x = lo.x(); x <= hi.x(); ++x)
    for (int y = lo.y(); y <= hi.y(); ++y)
      for (int z = lo.z(); z <= hi.z(); ++z) {
        const Cell c(x, y, z);
        if (!prob.in_window(c) || prob.classify(c) != CellClass::KnownFree) return false;
      }
  return true;
}

// Grows the box one layer at a time, faces visited round-robin in the order
// +x, -x, +y, -y, +z, -z, until every face is blocked or at the edge limit.
void expand_box(const mapping::ProbabilityMap& prob, Cell& lo, Cell& hi, int max_edge) {
  std::array<bool, 6> active{true, true, true, true, true, true};
  bool any = true;
  while (any) {
    any = false;
    for (int f = 0; f < 6; ++f) {
      if (!active[f]) continue;
      const int axis = f / 2;
      if (hi[axis] - lo[axis] + 1 >= max_edge) {
        active[f] = false;
        continue;
      }
      Cell llo = lo, lhi = hi;
      if (f % 2 == 0) {
        llo[axis] = lhi[axis] = hi[axis] + 1;
      } else {
        llo[axis] = lhi[axis] = lo[axis] - 1;
      }
      if (block_free(prob, llo, lhi)) {
        if (f % 2 == 0) {
          ++hi[axis];
        } else {
          --lo[axis];
        }
        any = true;
      } else {
        active[f] = false;
      }
    }
  }
}

bool inside(const Cell& c, const Cell& lo, const Cell& hi) {
  return (c.array() >= lo.array()).all() && (c.array() <= hi.array()).all();
}

Box to_box(const Cell& lo, const Cell& hi, double res) {
  return {lo.cast<double>() * res, (hi.cast<double>() + Vec3::Ones()) * res};
}

}  // namespace

Corridor generate_sfc(const GridPath& path, const mapping::ProbabilityMap& prob, int max_box_edge) {
  if (max_box_edge < 1) throw std::invalid_argument("generate_sfc: max_box_edge must be >= 1");
  Corridor corridor;
  const auto& cells = path.cells;
  const std::size_t n = cells.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (!prob.in_window(cells[i]) || prob.classify(cells[i]) != CellClass::KnownFree) {
      throw CorridorError("waypoint " + std::to_string(i) + " is not Known Free", static_cast<int>(i));
    }
  }
  const double res = prob.resolution();
  auto push = [&](const Cell& lo, const Cell& hi) {
    corridor.cell_boxes.emplace_back(lo, hi);
    corridor.boxes.push_back(to_box(lo, hi, res));
  };

  std::size_t next = 0;
  while (next < n) {
    Cell lo = cells[next], hi = cells[next];
    if (next > 0) {
      // Seed across the step from the last covered waypoint so the new box
      // overlaps the previous one.
      const Cell a = cells[next - 1];
      const Cell blo = a.cwiseMin(cells[next]), bhi = a.cwiseMax(cells[next]);
      if ((bhi - blo).maxCoeff() + 1 <= max_box_edge && block_free(prob, blo, bhi)) {
        lo = blo;
        hi = bhi;
      }
    }
    expand_box(prob, lo, hi, max_box_edge);
    if (!corridor.cell_boxes.empty()) {
      const auto& [plo, phi] = corridor.cell_boxes.back();
      if ((lo.cwiseMax(plo).array() > hi.cwiseMin(phi).array()).any()) {
        throw CorridorError("consecutive corridor boxes do not overlap at waypoint " + std::to_string(next),
                            static_cast<int>(next));
      }
    }
    push(lo, hi);
    while (next < n && inside(cells[next], lo, hi)) ++next;
  }
  if (n >= 2 && corridor.boxes.size() < 2) {
    Cell lo = cells.back(), hi = cells.back();
    expand_box(prob, lo, hi, max_box_edge);
    push(lo, hi);
  }
  return corridor;
}

std::optional<Vec3> nearest_no_inflation(const Vec3& point, const mapping::InflatedMap& inflated) {
  const Cell start = inflated.cell_of(point);
  const mapping::Window& w = inflated.window();
  if (!w.contains(start)) throw mapping::OutOfWindow("nearest_no_inflation: point outside the map window");
  if (inflated.state(start) == InflationState::NoInflation) return inflated.center_of(start);

  static const Cell order[6] = {Cell(1, 0, 0), Cell(-1, 0, 0), Cell(0, 1, 0),
                                Cell(0, -1, 0), Cell(0, 0, 1), Cell(0, 0, -1)};
  std::vector<std::uint8_t> seen(w.cell_count(), 0);
  std::deque<Cell> queue{start};
  seen[w.slot(start)] = 1;
  while (!queue.empty()) {
    const Cell c = queue.front();
    queue.pop_front();
    for (const Cell& o : order) {
      const Cell nb = c + o;
      if (!w.contains(nb) || seen[w.slot(nb)]) continue;
      if (inflated.state(nb) == InflationState::NoInflation) return inflated.center_of(nb);
      seen[w.slot(nb)] = 1;
      queue.push_back(nb);
    }
  }
  return std::nullopt;
}

std::optional<Cell> nearest_free_cell(const mapping::GlobalMap& global, const Vec3& point, int max_depth) {
  const Cell start = global.cell_of(point);
  if (global.traversable(start)) return start;
  static const Cell order[6] = {Cell(1, 0, 0), Cell(-1, 0, 0), Cell(0, 1, 0),
                                Cell(0, -1, 0), Cell(0, 0, 1), Cell(0, 0, -1)};
  std::unordered_map<Cell, int, CellHash, CellEqual> depth{{start, 0}};
  std::deque<Cell> queue{start};
  while (!queue.empty()) {
    const Cell c = queue.front();
    queue.pop_front();
    const int d = depth[c];
    if (d >= max_depth) continue;
    for (const Cell& o : order) {
      const Cell nb = c + o;
      if (!global.in_bounds(nb) || depth.count(nb)) continue;
      if (global.is_free(nb)) return nb;
      depth.emplace(nb, d + 1);
      queue.push_back(nb);
    }
  }
  return std::nullopt;
}

SearchResult astar_snapped(const Vec3& start, const Vec3& goal, const mapping::GlobalMap& map, int max_snap,
                           const SearchOptions& opts) {
  const auto s = nearest_free_cell(map, start, max_snap);
  const auto g = nearest_free_cell(map, goal, max_snap);
  if (!s) return {SearchStatus::StartBlocked, {}, 0};
  if (!g) return {SearchStatus::GoalBlocked, {}, 0};
  SearchGrid grid{map.resolution(), [&map](const Cell& c) { return map.traversable(c); }};
  auto r = astar(*s, *g, grid, opts);
  if (r.ok()) r.path.length += (start - r.path.waypoints.front()).norm() + (r.path.waypoints.back() - goal).norm();
  return r;
}

}  // namespace insp::planning
