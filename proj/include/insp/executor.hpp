#pragma once

#include <optional>
#include <string>
#include <vector>

#include "insp/mission.hpp"
#include "insp/navigator.hpp"

namespace insp::mission {

enum class Mode { Relocalizing, EnRoute, Hovering, Aligning, Capturing, Fallback, Returning, Landed };
const char* to_string(Mode m);

struct ExecutorConfig {
  MissionConfig mission;
  double horizon = 6.0;          // m, farthest sub-goal along the guide path
  double fallback_radius = 3.0;  // m, goal distance at which a blocked goal triggers the fallback
  double replan_period = 1.0;    // s
  double guide_period = 2.0;     // s between global-map guide searches
  double stall_limit = 15.0;     // s without progress toward the goal before falling back in place
  double progress_step = 0.2;    // m of distance reduction that counts as progress
  double align_fine = 1e-3;      // rad, alignment target before capture
  double align_timeout = 4.0;    // s, capture anyway once within the mission tolerance
};

/// Vehicle state as estimated in the world frame.
struct WorldState {
  double t = 0.0;
  Vec3 position = Vec3::Zero();
  Vec3 velocity = Vec3::Zero();
  double yaw = 0.0;
  double gimbal_pitch = 0.0;
};

/// Autonomous tour state machine. Advanced at the planner rate; the owner
/// applies its targets every control tick and performs captures on request.
class Executor {
 public:
  Executor(const Mission& mission, const ExecutorConfig& config);

  Mode mode() const { return mode_; }
  /// Index into the visiting order of the point being worked on.
  int step() const { return k_; }
  bool landed() const { return mode_ == Mode::Landed; }

  /// Leaves Relocalizing and heads for the first point.
  void start(const WorldState& s, MissionLog& log);
  /// Ends the mission in place (e.g. failed relocalization).
  void abort(const WorldState& s, MissionLog& log, const std::string& type, const std::string& detail);

  /// Planner-rate update: state transitions, target selection and replanning.
  void update(const WorldState& s, nav::Navigator& nav, MissionLog& log);

  double yaw_target() const { return yaw_target_; }
  double gimbal_target() const { return gimbal_target_; }
  bool capture_requested() const { return mode_ == Mode::Capturing; }
  /// The point to capture (valid while capture_requested()).
  const InspectionPoint& current_point() const;
  /// Called by the owner after the snapshot has been taken.
  void capture_done(const WorldState& s, MissionLog& log);

  const std::vector<int>& reached() const { return reached_; }
  const std::vector<int>& abandoned() const { return abandoned_; }

 private:
  void enter(Mode m, const WorldState& s);
  void advance(const WorldState& s, MissionLog& log);
  void navigate(const WorldState& s, nav::Navigator& nav, const Vec3& goal, bool allow_fallback, MissionLog& log);
  Vec3 guide_subgoal(const WorldState& s, nav::Navigator& nav, const Vec3& goal);
  void replan(const WorldState& s, nav::Navigator& nav, const Vec3& target);
  void log_event(MissionLog& log, const WorldState& s, const char* type, int index, const std::string& detail = "");

  ExecutorConfig config_;
  std::vector<InspectionPoint> ordered_;
  Mode mode_ = Mode::Relocalizing;
  int k_ = 0;
  double mode_start_ = 0.0;
  double yaw_target_ = 0.0;
  double gimbal_target_ = 0.0;

  // navigation bookkeeping
  std::optional<Vec3> target_;
  double last_plan_t_ = -1e9;
  double best_distance_ = 1e18;
  double progress_t_ = 0.0;
  bool fallback_ = false;
  std::optional<double> fallback_hover_start_;
  std::optional<Vec3> fallback_point_;
  double fallback_start_ = 0.0;
  int blocked_ticks_ = 0;
  std::vector<Vec3> guide_;
  Vec3 guide_goal_ = Vec3::Constant(1e18);
  double guide_t_ = -1e9;

  std::vector<int> reached_;
  std::vector<int> abandoned_;
};

}  // namespace insp::mission
