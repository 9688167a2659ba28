#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "insp/executor.hpp"
#include "insp/lidar.hpp"
#include "insp/mission.hpp"
#include "insp/navigator.hpp"
#include "insp/planning.hpp"
#include "insp/reloc.hpp"
#include "insp/scene.hpp"

namespace insp::session {

class SessionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SessionConfig {
  double tick_rate = 100.0;     // Hz, dynamics
  double control_rate = 20.0;   // Hz, MPC solves (command held in between)
  double planner_rate = 10.0;   // Hz, pilot input, executor and replanning
  double log_rate = 20.0;       // Hz, trajectory samples
  double map_rate = 5.0;        // Hz, map broadcast (decimated by the gateway)
  std::uint64_t seed = 0;
  double odometry_noise = 0.0;  // m, per-axis sigma
  lidar::SensorConfig sensor;
  nav::NavConfig nav;
  sim::QuadLimits limits;
  mission::MissionConfig mission;
  mission::ExecutorConfig executor;
  reloc::RelocConfig reloc;
  reloc::AnchorConfig anchor;
  mission::CameraModel camera;
  double local_goal_horizon = 6.0;  // m, joystick goal distance
  double max_duration = 900.0;      // s, hard stop for either phase

  /// Ticks between events of a rate; throws SessionError unless it divides the tick rate.
  int ticks_per(double rate) const;
  /// Throws SessionError on any inconsistency.
  void validate() const;
};

/// Settings sized for the bundled desk scenes: a 20 m window, 600-ray scans
/// with a full vertical field of view and a 20 m range.
SessionConfig desk_config(std::uint64_t seed = 0);

// Scripted pilot
struct ScriptWaypoint {
  Vec3 position = Vec3::Zero();  // scene frame
  bool record = false;
  std::optional<double> yaw;           // scene frame heading to hold while recording
  std::optional<double> gimbal_pitch;
};

struct PilotScript {
  std::string scene;  // scene file, relative to the script
  Vec3 start = Vec3::Zero();
  double start_yaw = 0.0;
  std::vector<ScriptWaypoint> waypoints;
  /// Start pose for the autonomous phase; defaults to the human start pose.
  std::optional<Vec3> autonomous_start;
  std::optional<double> autonomous_start_yaw;
};

PilotScript parse_script(const std::string& text);
PilotScript load_script(const std::filesystem::path& path);
std::string dump_script(const PilotScript& script);

/// Proportional stick commands toward each waypoint in turn. Recording
/// waypoints are approached closely, the vehicle is settled and aligned, then
/// record is pressed for exactly one planner tick.
class ScriptedPilot {
 public:
  struct Config {
    double horizon = 6.0;         // m, full stick deflection distance
    double record_tolerance = 0.15;
    double pass_tolerance = 0.5;
    double settle_time = 1.0;     // s
    double settle_speed = 0.05;   // m/s
    double align_tolerance = 3e-3;
    double gain = 2.0;            // stick per rad of heading or gimbal error
    double waypoint_timeout = 60.0;
  };

  ScriptedPilot(PilotScript script, Config config);
  explicit ScriptedPilot(PilotScript script) : ScriptedPilot(std::move(script), Config{}) {}

  /// Next stick command given the true scene-frame state. Skipped waypoints
  /// are reported through `skipped`.
  planning::JoystickCommand next(const sim::QuadState& truth, const sim::QuadLimits& limits,
                                 std::vector<int>* skipped = nullptr);
  bool done() const { return index_ >= script_.waypoints.size(); }
  std::size_t index() const { return index_; }
  const PilotScript& script() const { return script_; }

 private:
  PilotScript script_;
  Config config_;
  std::size_t index_ = 0;
  double waypoint_start_ = 0.0;
  std::optional<double> settled_since_;
  bool started_ = false;
};

struct SafetyStats {
  std::size_t ticks = 0;
  std::size_t collision_ticks = 0;       // ticks with the true position inside an obstacle
  std::size_t collision_samples = 0;     // logged samples inside an obstacle
  std::size_t mpc_solves = 0;
  std::size_t mpc_infeasible = 0;
  std::size_t stages_checked = 0;
  std::size_t box_violations = 0;
};

/// Observer hooks for a live session; all optional.
struct SessionHooks {
  std::function<void(const mission::TrajectorySample&)> on_sample;
  std::function<void(const mission::Event&)> on_event;
  std::function<void(const mission::Snapshot&)> on_snapshot;
  std::function<void(const mission::InspectionPoint&)> on_point;
  /// Every integrated scan; observers decimate.
  std::function<void(const mapping::MapUpdate&, const nav::Navigator&)> on_map;
  /// Replaces the scripted pilot's command when set (live teleop).
  std::function<std::optional<planning::JoystickCommand>(double t)> joystick;
  /// Called every tick; returning false stops the session.
  std::function<bool(double t)> keep_running;
};

struct HumanResult {
  mission::Mission mission;
  mission::MissionLog log;
  SafetyStats stats;
  std::vector<int> skipped_waypoints;
};

struct AutonomousResult {
  mission::MissionLog log;
  SafetyStats stats;
  reloc::RelocResult reloc;
  RigidTransform true_world_odom;  // ground truth for the relocalization
  std::vector<int> reached;
  std::vector<int> abandoned;
  bool relocalized = false;
};

/// Human-in-the-loop phase: stationary anchor accumulation, then the pilot
/// (scripted, or live via hooks) steers while the stack avoids obstacles.
HumanResult run_human(const sim::Scene& scene, const PilotScript& script, const SessionConfig& config,
                      const SessionHooks& hooks = {});

/// Autonomous phase from the scene-frame start pose.
AutonomousResult run_autonomous(const sim::Scene& scene, const mission::Mission& mission, const Vec3& start,
                                double start_yaw, const SessionConfig& config, const SessionHooks& hooks = {});

/// Optimizes a mission in place; returns the sequencer report.
sequencer::OptimizationResult optimize_mission(mission::Mission& mission);

}  // namespace insp::session
