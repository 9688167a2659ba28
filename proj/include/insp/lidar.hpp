#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "insp/dynamics.hpp"
#include "insp/scene.hpp"

namespace insp::lidar {

/// Wide-FOV scanner. The defaults describe a 360 x 59 degree head.
struct SensorConfig {
  double h_fov_deg = 360.0;
  double v_min_deg = -7.0;
  double v_max_deg = 52.0;
  double max_range = 40.0;
  int rays_per_frame = 2000;
  double frame_rate = 10.0;
  std::uint64_t seed = 0;

  double v_span_deg() const { return v_max_deg - v_min_deg; }
  bool valid() const {
    return rays_per_frame > 0 && v_max_deg > v_min_deg && h_fov_deg > 0 && max_range > 0 && frame_rate > 0;
  }
};

struct ScanFrame {
  double stamp = 0.0;
  Vec3 sensor_position = Vec3::Zero();
  double sensor_yaw = 0.0;
  std::vector<Vec3> returns;  // hit points
  std::vector<Vec3> misses;   // unit directions with no return within range

  /// Re-expresses the frame in another coordinate system.
  ScanFrame transformed(const RigidTransform& t) const;
  friend bool operator==(const ScanFrame&, const ScanFrame&) = default;
};

struct OdometrySample {
  double stamp = 0.0;
  Vec3 position = Vec3::Zero();
  double yaw = 0.0;
  Vec3 velocity = Vec3::Zero();
  double noise_sigma = 0.0;
};

/// Sensor-frame ray directions for one frame. Successive frames walk a 2D
/// Kronecker sequence, so the pattern never repeats and coverage densifies
/// as frames accumulate.
std::vector<Vec3> pattern_directions(const SensorConfig& config, std::int64_t frame_index);

/// Traces every pattern ray against the scene; rays are processed in parallel,
/// output order follows the pattern.
ScanFrame simulate_scan(const sim::Scene& scene, const sim::QuadState& state, const SensorConfig& config,
                        std::int64_t frame_index);

namespace serial {
/// Single-threaded reference for simulate_scan.
ScanFrame simulate_scan(const sim::Scene& scene, const sim::QuadState& state, const SensorConfig& config,
                        std::int64_t frame_index);
}  // namespace serial

/// Ground truth plus zero-mean Gaussian position noise; yaw is exact.
OdometrySample sample_odometry(const sim::QuadState& state, double noise_sigma, std::uint64_t seed);

/// Scan log: one JSON document per line, one line per frame.
void write_scan_record(std::ostream& out, const ScanFrame& frame);
void save_scan_log(const std::vector<ScanFrame>& frames, const std::filesystem::path& path);
std::vector<ScanFrame> load_scan_log(const std::filesystem::path& path);

/// splitmix64 finaliser; used to derive independent seeds.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

}  // namespace insp::lidar
