#include "insp/navigator.hpp"

#include <deque>
#include <unordered_map>

namespace insp::nav {

using mapping::CellClass;
using mapping::InflationState;

const char* to_string(PlanStatus s) {
  switch (s) {
    case PlanStatus::Ok: return "ok";
    case PlanStatus::Partial: return "partial";
    case PlanStatus::StartUnknown: return "start_unknown";
    case PlanStatus::StartBlocked: return "start_blocked";
    case PlanStatus::GoalOutside: return "goal_outside";
    case PlanStatus::GoalBlocked: return "goal_blocked";
    case PlanStatus::NoPath: return "no_path";
    case PlanStatus::CorridorFailed: return "corridor_failed";
  }
  return "?";
}

Navigator::Navigator(const NavConfig& config, const Vec3& start, std::optional<mapping::GlobalMap> global)
    : config_(config),
      map_(config.map, start),
      global_(global ? std::move(*global)
                     : mapping::GlobalMap(config.map.global_resolution, config.map.global_extent, Vec3::Zero())) {}

mapping::MapUpdate Navigator::integrate(const lidar::ScanFrame& frame, const Vec3& vehicle) {
  mapping::MapUpdate update = map_.integrate(frame);
  const auto& w = map_.prob().window();
  const Vec3 centre = (w.origin.cast<double>() + Vec3::Constant(0.5 * w.size)) * config_.map.resolution;
  if ((vehicle - centre).cwiseAbs().maxCoeff() > config_.slide_threshold) {
    auto slid = map_.slide_to(vehicle);
    update.deltas.insert(update.deltas.end(), slid.deltas.begin(), slid.deltas.end());
    update.inflation_changes.insert(update.inflation_changes.end(), slid.inflation_changes.begin(),
                                    slid.inflation_changes.end());
    stale_ = true;
  }
  if (plan_ && !stale_) {
    for (const auto& d : update.deltas) {
      if (d.after == CellClass::KnownFree) continue;
      for (const auto& [lo, hi] : plan_->corridor.cell_boxes) {
        if ((d.cell.array() >= lo.array()).all() && (d.cell.array() <= hi.array()).all()) {
          stale_ = true;
          break;
        }
      }
      if (stale_) break;
    }
  }
  if (++scans_ % config_.global_update_every == 0) mapping::update_global(global_, map_.prob());
  return update;
}

void Navigator::flush_global() { mapping::update_global(global_, map_.prob()); }

bool Navigator::traversable(const Vec3& p) const { return map_.inflated().traversable(map_.inflated().cell_of(p)); }

mapping::InflationState Navigator::inflation(const Vec3& p) const {
  const Cell c = map_.inflated().cell_of(p);
  return map_.inflated().in_bounds(c) ? map_.inflated().state(c) : mapping::InflationState::OccupiedInflation;
}

std::optional<Vec3> Navigator::nearest_free(const Vec3& p) const {
  if (!in_window(p)) return std::nullopt;
  return planning::nearest_no_inflation(p, map_.inflated());
}

Vec3 Navigator::clamp_to_window(const Vec3& from, const Vec3& goal) const {
  const auto& w = map_.prob().window();
  const double res = config_.map.resolution;
  const Vec3 lo = (w.origin.cast<double>() + Vec3::Constant(1.0)) * res;
  const Vec3 hi = (w.origin.cast<double>() + Vec3::Constant(w.size - 1.0)) * res;
  if ((goal.array() >= lo.array()).all() && (goal.array() < hi.array()).all()) return goal;
  // Largest fraction of the segment that stays inside.
  double s = 1.0;
  for (int a = 0; a < 3; ++a) {
    const double d = goal[a] - from[a];
    if (goal[a] < lo[a] && d < 0) s = std::min(s, (lo[a] - from[a]) / d);
    if (goal[a] >= hi[a] && d > 0) s = std::min(s, (hi[a] - 1e-6 - from[a]) / d);
  }
  return from + std::max(0.0, s) * (goal - from);
}

std::optional<std::vector<Cell>> Navigator::escape_path(const Cell& start) const {
  // BFS over Known Free cells to the nearest NoInflation cell.
  static const Cell order[6] = {Cell(1, 0, 0), Cell(-1, 0, 0), Cell(0, 1, 0),
                                Cell(0, -1, 0), Cell(0, 0, 1), Cell(0, 0, -1)};
  const auto& prob = map_.prob();
  const auto& inf = map_.inflated();
  std::unordered_map<Cell, Cell, CellHash, CellEqual> parent{{start, start}};
  std::deque<Cell> queue{start};
  int explored = 0;
  while (!queue.empty() && explored++ < config_.escape_limit) {
    const Cell c = queue.front();
    queue.pop_front();
    for (const Cell& o : order) {
      const Cell nb = c + o;
      if (parent.count(nb) || !prob.in_window(nb) || prob.classify(nb) != CellClass::KnownFree) continue;
      parent.emplace(nb, c);
      if (inf.state(nb) == InflationState::NoInflation) {
        std::vector<Cell> chain{nb};
        for (Cell p = c; p != start; p = parent.at(p)) chain.push_back(p);
        chain.push_back(start);
        std::reverse(chain.begin(), chain.end());
        return chain;
      }
      queue.push_back(nb);
    }
  }
  return std::nullopt;
}

PlanStatus Navigator::plan(const Vec3& position, const Vec3& goal) {
  stale_ = false;
  const auto& prob = map_.prob();
  const auto& inf = map_.inflated();
  const Cell start = prob.cell_of(position);
  const Cell goal_cell = prob.cell_of(goal);
  if (!prob.in_window(start) || prob.classify(start) != CellClass::KnownFree) {
    plan_.reset();
    return PlanStatus::StartUnknown;
  }
  if (!prob.in_window(goal_cell)) {
    plan_.reset();
    return PlanStatus::GoalOutside;
  }
  if (!inf.traversable(goal_cell)) {
    plan_.reset();
    return PlanStatus::GoalBlocked;
  }

  std::vector<Cell> prefix;
  Cell search_start = start;
  if (!inf.traversable(start)) {
    auto chain = escape_path(start);
    if (!chain) {
      plan_.reset();
      return PlanStatus::StartBlocked;
    }
    prefix.assign(chain->begin(), chain->end() - 1);
    search_start = chain->back();
  }
  planning::SearchGrid grid{config_.map.resolution, [&inf](const Cell& c) { return inf.traversable(c); }};
  auto result = planning::astar(search_start, goal_cell, grid, {config_.max_expansions});
  PlanStatus status = PlanStatus::Ok;
  Vec3 end = goal;
  if (!result.ok()) {
    const bool failed = result.status == planning::SearchStatus::Unreachable ||
                        result.status == planning::SearchStatus::LimitReached;
    if (!config_.allow_partial || !failed || result.closest == search_start) {
      plan_.reset();
      return PlanStatus::NoPath;
    }
    end = prob.center_of(result.closest);
    result = planning::astar(search_start, result.closest, grid, {config_.max_expansions});
    if (!result.ok()) {
      plan_.reset();
      return PlanStatus::NoPath;
    }
    status = PlanStatus::Partial;
  }
  Plan p;
  p.goal = end;
  p.path.cells = prefix;
  p.path.cells.insert(p.path.cells.end(), result.path.cells.begin(), result.path.cells.end());
  for (const auto& c : p.path.cells) p.path.waypoints.push_back(prob.center_of(c));
  p.path.length = planning::canonical_length(p.path.cells, config_.map.resolution);
  try {
    p.corridor = planning::generate_sfc(p.path, prob, config_.max_box_edge);
  } catch (const planning::CorridorError&) {
    plan_.reset();
    return PlanStatus::CorridorFailed;
  }
  p.reference.push_back(position);
  for (std::size_t i = 1; i < p.path.waypoints.size(); ++i) p.reference.push_back(p.path.waypoints[i]);
  // the exact goal shares the last cell, so it is inside the corridor
  if ((p.reference.back() - end).norm() > 0.0) p.reference.push_back(end);
  plan_ = std::move(p);
  return status;
}

ControlOutput Navigator::control(const Vec3& position, const Vec3& velocity) const {
  ControlOutput out;
  auto brake = [&] {
    out.accel = control::braking_command(velocity, config_.a_max, config_.mpc_dt);
    out.feasible = false;
    out.needs_replan = true;
    return out;
  };
  if (!plan_) return brake();
  const auto refs =
      control::sample_reference(plan_->reference, position, config_.reference_speed, config_.horizon, config_.mpc_dt);
  const auto assignment = control::assign_stage_boxes(plan_->corridor.boxes, position, refs);
  if (assignment.empty()) return brake();
  control::MpcProblem prob;
  prob.horizon = config_.horizon;
  prob.dt = config_.mpc_dt;
  prob.position = position;
  prob.velocity = velocity;
  prob.reference = refs;
  prob.boxes = control::stage_constraint_boxes(plan_->corridor.boxes, assignment);
  prob.weights = config_.weights;
  prob.v_max = config_.v_max_axis;
  prob.a_max = config_.a_max;
  const auto sol = control::mpc_step(prob);
  if (!sol.feasible) return brake();
  out.accel = sol.command();
  out.feasible = true;
  for (int k = 1; k <= prob.horizon; ++k) {
    ++out.stages_checked;
    if (!prob.boxes[std::size_t(k)].contains(sol.positions[std::size_t(k)], 1e-6)) ++out.box_violations;
  }
  return out;
}

}  // namespace insp::nav
