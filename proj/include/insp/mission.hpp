#pragma once

#include <filesystem>
#include <iosfwd>
#include <nlohmann/json_fwd.hpp>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "insp/dynamics.hpp"
#include "insp/mapping.hpp"
#include "insp/reloc.hpp"
#include "insp/scene.hpp"
#include "insp/sequencer.hpp"

namespace insp::mission {

using sequencer::InspectionPoint;

struct MissionConfig {
  double hover_duration = 3.0;     // s
  double abandon_limit = 5.0;      // s
  double arrival_tolerance = 0.2;  // m
  double align_tolerance = 0.02;   // rad

  friend bool operator==(const MissionConfig&, const MissionConfig&) = default;
};

class MissionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kMissionFormatVersion = 1;

/// Recorded inspection mission. Points, the anchor and the global map are in
/// the world frame: the human session's odometry frame, whose origin is p_init.
/// p_init and init_yaw give that frame's pose in the scene.
struct Mission {
  std::string scene_id;
  Vec3 p_init = Vec3::Zero();
  double init_yaw = 0.0;
  reloc::AnchorMap anchor;
  std::optional<mapping::GlobalMap> global;
  std::vector<InspectionPoint> points;  // recording order
  std::vector<int> order;               // optimized visiting order, empty until optimized
  MissionConfig config;

  bool optimized() const { return !order.empty(); }
  /// Points in visiting order.
  std::vector<InspectionPoint> ordered_points() const;
  /// Throws MissionError when an invariant does not hold.
  void validate() const;

  friend bool operator==(const Mission&, const Mission&) = default;
};

/// Writes `path` plus sibling binaries `<stem>.anchor.bin` and, when present,
/// `<stem>.global.bin`, referenced from the mission file by relative name.
void save_mission(const Mission& mission, const std::filesystem::path& path);
Mission load_mission(const std::filesystem::path& path);

/// Recording guard for the human phase.
class PointRecorder {
 public:
  enum class Phase { Human, Autonomous };

  void set_phase(Phase p) { phase_ = p; }
  Phase phase() const { return phase_; }

  /// Appends the current pose as the next point. Throws MissionError outside
  /// the human phase. `duplicate` is set when the pose equals an earlier point.
  InspectionPoint record(const sim::QuadState& state, bool* duplicate = nullptr);
  const std::vector<InspectionPoint>& points() const { return points_; }

 private:
  Phase phase_ = Phase::Human;
  std::vector<InspectionPoint> points_;
};

// Camera snapshot: a 32 x 24 depth grid over a 70 x 50 degree frustum.
struct CameraModel {
  int width = 32;
  int height = 24;
  double h_fov_deg = 70.0;
  double v_fov_deg = 50.0;
  double max_range = 40.0;
};

struct Snapshot {
  double stamp = 0.0;
  Vec3 position = Vec3::Zero();
  double yaw = 0.0;
  double gimbal_pitch = 0.0;
  int index = -1;  // recorded index of the inspection point
  int width = 32;
  int height = 24;
  /// Row-major, top row first. Depth is measured along the optical axis;
  /// rays without a return have no hit.
  std::vector<std::optional<Vec3>> hits;
  std::vector<std::optional<double>> depth;

  friend bool operator==(const Snapshot&, const Snapshot&) = default;
};

/// Unit ray for pixel (col, row) of a camera at the given yaw and pitch.
Vec3 camera_ray(const CameraModel& cam, double yaw, double pitch, int col, int row);
Vec3 optical_axis(double yaw, double pitch);

/// Ray-casts the frustum from `state` (scene frame). No alignment check.
Snapshot cast_snapshot(const sim::Scene& scene, const sim::QuadState& state, int index, const CameraModel& cam = {});

/// Throws MissionError unless yaw and gimbal are within `tol` of the point's targets.
void require_aligned(double yaw, double gimbal_pitch, const InspectionPoint& point, double tol);

/// Alignment check followed by the frustum cast; state and point share a frame.
Snapshot capture_snapshot(const sim::Scene& scene, const sim::QuadState& state, const InspectionPoint& point,
                          double tol = 0.02, const CameraModel& cam = {});

/// Fraction of rays whose depths agree within `tol`; a ray agrees when both
/// miss or both hit with |d1 - d2| <= tol.
double snapshot_agreement(const Snapshot& a, const Snapshot& b, double tol = 0.05);

// Mission log
struct TrajectorySample {
  double t = 0.0;
  Vec3 position = Vec3::Zero();  // world frame (as estimated on board)
  Vec3 velocity = Vec3::Zero();
  double yaw = 0.0;
  double gimbal_pitch = 0.0;
  double speed = 0.0;
  Vec3 truth = Vec3::Zero();  // ground-truth position in the scene frame

  friend bool operator==(const TrajectorySample&, const TrajectorySample&) = default;
};

namespace event {
inline constexpr const char* kPhase = "phase";
inline constexpr const char* kPointRecorded = "point_recorded";
inline constexpr const char* kDuplicatePoint = "duplicate_point";
inline constexpr const char* kRelocalized = "relocalized";
inline constexpr const char* kRelocalizationFailed = "relocalization_failed";
inline constexpr const char* kPointReached = "point_reached";
inline constexpr const char* kFallbackUsed = "fallback_used";
inline constexpr const char* kPointAbandoned = "point_abandoned";
inline constexpr const char* kSnapshot = "snapshot";
inline constexpr const char* kReturning = "returning";
inline constexpr const char* kReturnUnreachable = "return_unreachable";
inline constexpr const char* kLanded = "landed";
inline constexpr const char* kWaypointSkipped = "waypoint_skipped";
inline constexpr const char* kMpcInfeasible = "mpc_infeasible";
}  // namespace event

struct Event {
  double t = 0.0;
  std::string type;
  int index = -1;  // recorded index of the point concerned, if any
  Vec3 position = Vec3::Zero();
  std::string detail;

  friend bool operator==(const Event&, const Event&) = default;
};

struct MissionLog {
  std::string phase;  // "human" or "autonomous"
  std::string scene_id;
  std::uint64_t seed = 0;
  std::vector<TrajectorySample> samples;
  std::vector<Event> events;
  std::vector<Snapshot> snapshots;

  std::vector<const Event*> events_of(const std::string& type) const;
  friend bool operator==(const MissionLog&, const MissionLog&) = default;
};

/// Single-record JSON forms, as used in logs and protocol messages.
nlohmann::json to_json(const Snapshot& s);
nlohmann::json to_json(const Event& e);
nlohmann::json to_json(const TrajectorySample& s);

/// Line-delimited JSON: a header record, then samples, events and snapshots.
void write_log(std::ostream& out, const MissionLog& log);
MissionLog read_log(std::istream& in);
void save_log(const MissionLog& log, const std::filesystem::path& path);
MissionLog load_log(const std::filesystem::path& path);

struct Metrics {
  double max_speed = 0.0;
  double average_speed = 0.0;
  double length = 0.0;
  double flight_time = 0.0;  // s
};

/// Throws MissionError for logs with fewer than two samples.
Metrics compute_metrics(const MissionLog& log);
/// "m : ss", rounded to the nearest second.
std::string format_flight_time(double seconds);
/// Markdown table with one row per (mode label, metrics).
std::string metrics_table(const std::vector<std::pair<std::string, Metrics>>& rows);
/// One plain line: "max avg length m : ss".
std::string metrics_line(const Metrics& m);

}  // namespace insp::mission
