#include "insp/executor.hpp"

#include <cmath>

namespace insp::mission {

namespace {
constexpr double kTargetMoved = 0.1;   // m of target motion that forces a replan
constexpr int kBlockedDebounce = 10;   // planner ticks a near goal must stay blocked before falling back
constexpr double kFallbackTravel = 15.0;  // s allowed to reach the fallback point before the timer starts anyway
}  // namespace

const char* to_string(Mode m) {
  switch (m) {
    case Mode::Relocalizing: return "relocalizing";
    case Mode::EnRoute: return "en_route";
    case Mode::Hovering: return "hovering";
    case Mode::Aligning: return "aligning";
    case Mode::Capturing: return "capturing";
    case Mode::Fallback: return "fallback";
    case Mode::Returning: return "returning";
    case Mode::Landed: return "landed";
  }
  return "?";
}

Executor::Executor(const Mission& mission, const ExecutorConfig& config)
    : config_(config), ordered_(mission.ordered_points()) {
  config_.mission = mission.config;
  if (ordered_.empty()) throw MissionError("mission has no inspection points");
}

const InspectionPoint& Executor::current_point() const { return ordered_.at(std::size_t(k_)); }

void Executor::log_event(MissionLog& log, const WorldState& s, const char* type, int index, const std::string& detail) {
  log.events.push_back({s.t, type, index, s.position, detail});
}

void Executor::enter(Mode m, const WorldState& s) {
  mode_ = m;
  mode_start_ = s.t;
}

void Executor::start(const WorldState& s, MissionLog&) {
  k_ = 0;
  yaw_target_ = s.yaw;
  gimbal_target_ = s.gimbal_pitch;
  best_distance_ = 1e18;
  progress_t_ = s.t;
  enter(Mode::EnRoute, s);
}

void Executor::abort(const WorldState& s, MissionLog& log, const std::string& type, const std::string& detail) {
  log_event(log, s, type.c_str(), -1, detail);
  log_event(log, s, event::kLanded, -1, "in place");
  enter(Mode::Landed, s);
}

void Executor::advance(const WorldState& s, MissionLog& log) {
  target_.reset();
  fallback_ = false;
  fallback_hover_start_.reset();
  fallback_point_.reset();
  guide_.clear();
  guide_t_ = -1e9;
  blocked_ticks_ = 0;
  best_distance_ = 1e18;
  progress_t_ = s.t;
  ++k_;
  if (k_ >= static_cast<int>(ordered_.size())) {
    log_event(log, s, event::kReturning, ordered_.front().recorded_index);
    enter(Mode::Returning, s);
  } else {
    enter(Mode::EnRoute, s);
  }
}

void Executor::capture_done(const WorldState& s, MissionLog& log) {
  if (mode_ != Mode::Capturing) return;
  const int idx = current_point().recorded_index;
  log_event(log, s, event::kSnapshot, idx);
  reached_.push_back(idx);
  advance(s, log);
}

Vec3 Executor::guide_subgoal(const WorldState& s, nav::Navigator& nav, const Vec3& goal) {
  if ((goal - guide_goal_).norm() > 1e-9 || s.t - guide_t_ >= config_.guide_period) {
    guide_goal_ = goal;
    guide_t_ = s.t;
    guide_.clear();
    const auto r = planning::astar_snapped(s.position, goal, nav.global(), 3, {200000});
    if (r.ok()) guide_ = r.path.waypoints;
  }
  Vec3 sub;
  if (!guide_.empty()) {
    // Farthest guide waypoint reached before the path first leaves the horizon.
    std::size_t best = 0;
    double best_d = 1e18;
    for (std::size_t i = 0; i < guide_.size(); ++i) {
      const double d = (guide_[i] - s.position).norm();
      if (d < best_d) {
        best_d = d;
        best = i;
      }
    }
    std::size_t pick = best;
    for (std::size_t i = best; i < guide_.size(); ++i) {
      if ((guide_[i] - s.position).norm() > config_.horizon) break;
      pick = i;
    }
    sub = guide_[pick];
  } else {
    const Vec3 d = goal - s.position;
    sub = s.position + d * std::min(1.0, config_.horizon / std::max(d.norm(), 1e-9));
  }
  sub = nav.clamp_to_window(s.position, sub);
  if (!nav.traversable(sub)) {
    if (auto f = nav.nearest_free(sub)) sub = *f;
  }
  return sub;
}

void Executor::replan(const WorldState& s, nav::Navigator& nav, const Vec3& target) {
  const bool moved = !target_ || (*target_ - target).norm() > kTargetMoved;
  if (!moved && nav.has_plan() && !nav.stale() && s.t - last_plan_t_ < config_.replan_period) return;
  target_ = target;
  last_plan_t_ = s.t;
  auto status = nav.plan(s.position, target);
  if (status == nav::PlanStatus::GoalBlocked || status == nav::PlanStatus::GoalOutside) {
    const Vec3 inside = nav.clamp_to_window(s.position, target);
    if (auto f = nav.nearest_free(inside)) status = nav.plan(s.position, *f);
  }
}

void Executor::navigate(const WorldState& s, nav::Navigator& nav, const Vec3& goal, bool allow_fallback,
                        MissionLog& log) {
  Vec3 target = goal;
  if (fallback_) {
    target = *fallback_point_;
  } else if ((goal - s.position).norm() <= config_.horizon && nav.in_window(goal)) {
    if (nav.traversable(goal)) {
      blocked_ticks_ = 0;
    } else {
      // Unknown space around the point usually clears on approach; only an observed obstacle counts.
      const bool occupied = nav.inflation(goal) == mapping::InflationState::OccupiedInflation;
      const bool near = occupied && (goal - s.position).norm() <= config_.fallback_radius;
      blocked_ticks_ = near ? blocked_ticks_ + 1 : 0;
      const auto free = nav.nearest_free(goal);
      if (near && blocked_ticks_ >= kBlockedDebounce) {
        if (!allow_fallback) {
          abort(s, log, event::kReturnUnreachable, "return point blocked");
          return;
        }
        fallback_ = true;
        fallback_point_ = free ? *free : s.position;
        fallback_start_ = s.t;
        log_event(log, s, event::kFallbackUsed, current_point().recorded_index, "nearest free point");
        target = *fallback_point_;
      } else if (free) {
        target = *free;
      } else {
        target = s.position;
      }
    }
  } else {
    blocked_ticks_ = 0;
    target = guide_subgoal(s, nav, goal);
  }

  replan(s, nav, target);

  const double dist = (goal - s.position).norm();
  if (dist < best_distance_ - config_.progress_step) {
    best_distance_ = dist;
    progress_t_ = s.t;
  }
  if (s.t - progress_t_ > config_.stall_limit && !fallback_) {
    if (!allow_fallback) {
      abort(s, log, event::kReturnUnreachable, "no path to the return point");
      return;
    }
    fallback_ = true;
    fallback_point_ = s.position;
    fallback_start_ = s.t;
    log_event(log, s, event::kFallbackUsed, current_point().recorded_index, "no path, holding position");
    replan(s, nav, s.position);
  }
}

void Executor::update(const WorldState& s, nav::Navigator& nav, MissionLog& log) {
  switch (mode_) {
    case Mode::Relocalizing:
    case Mode::Landed:
    case Mode::Capturing:
      return;
    case Mode::EnRoute:
    case Mode::Fallback: {
      const auto& q = current_point();
      if (!fallback_ && (s.position - q.position).norm() <= config_.mission.arrival_tolerance) {
        log_event(log, s, event::kPointReached, q.recorded_index);
        enter(Mode::Hovering, s);
        replan(s, nav, q.position);
        return;
      }
      navigate(s, nav, q.position, true, log);
      if (fallback_) {
        if (mode_ != Mode::Fallback) enter(Mode::Fallback, s);
        const bool at_point = (s.position - *fallback_point_).norm() <= config_.mission.arrival_tolerance;
        if (!fallback_hover_start_ && (at_point || s.t - fallback_start_ >= kFallbackTravel))
          fallback_hover_start_ = s.t;
        if (fallback_hover_start_ && s.t - *fallback_hover_start_ >= config_.mission.abandon_limit) {
          log_event(log, s, event::kPointAbandoned, q.recorded_index);
          abandoned_.push_back(q.recorded_index);
          advance(s, log);
        }
      }
      return;
    }
    case Mode::Hovering: {
      replan(s, nav, current_point().position);
      if (s.t - mode_start_ >= config_.mission.hover_duration) {
        yaw_target_ = current_point().yaw;
        gimbal_target_ = current_point().gimbal_pitch;
        enter(Mode::Aligning, s);
      }
      return;
    }
    case Mode::Aligning: {
      replan(s, nav, current_point().position);
      const double ey = std::abs(wrap_angle(s.yaw - yaw_target_));
      const double eg = std::abs(s.gimbal_pitch - gimbal_target_);
      const double tol = s.t - mode_start_ >= config_.align_timeout ? config_.mission.align_tolerance
                                                                     : config_.align_fine;
      if (ey <= tol && eg <= tol) enter(Mode::Capturing, s);
      return;
    }
    case Mode::Returning: {
      const Vec3 home = ordered_.front().position;
      if ((s.position - home).norm() <= config_.mission.arrival_tolerance) {
        log_event(log, s, event::kLanded, ordered_.front().recorded_index);
        enter(Mode::Landed, s);
        nav.clear_plan();
        return;
      }
      navigate(s, nav, home, false, log);
      return;
    }
  }
}

}  // namespace insp::mission
