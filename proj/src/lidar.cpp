#include "insp/lidar.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "insp/json_util.hpp"

namespace insp::lidar {

namespace {

// Plastic-number Kronecker steps (R2 sequence).
constexpr double kAlpha1 = 0.7548776662466927;
constexpr double kAlpha2 = 0.5698402909980532;

double frac(double x) { return x - std::floor(x); }

double unit_from_bits(std::uint64_t bits) { return static_cast<double>(bits >> 11) * 0x1.0p-53; }

struct RayResult {
  bool hit = false;
  double distance = 0.0;
};

}  // namespace

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9E3779B97F4A7C15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::vector<Vec3> pattern_directions(const SensorConfig& config, std::int64_t frame_index) {
  if (frame_index < 0) throw std::invalid_argument("pattern_directions: frame_index must be >= 0");
  const double off1 = unit_from_bits(mix_seed(config.seed, 1));
  const double off2 = unit_from_bits(mix_seed(config.seed, 2));
  const double deg = kPi / 180.0;
  const double az0 = -0.5 * config.h_fov_deg * deg;
  const double az_span = config.h_fov_deg * deg;
  const double el0 = config.v_min_deg * deg;
  const double el_span = config.v_span_deg() * deg;

  std::vector<Vec3> dirs(static_cast<std::size_t>(config.rays_per_frame));
  const auto base = static_cast<double>(frame_index) * config.rays_per_frame;
  for (int i = 0; i < config.rays_per_frame; ++i) {
    const double n = base + i;
    const double u = frac(off1 + n * kAlpha1);
    const double v = frac(off2 + n * kAlpha2);
    const double az = az0 + u * az_span;
    const double el = el0 + v * el_span;
    const double ce = std::cos(el);
    dirs[static_cast<std::size_t>(i)] = Vec3(ce * std::cos(az), ce * std::sin(az), std::sin(el)).normalized();
  }
  return dirs;
}

namespace {

ScanFrame assemble(const sim::QuadState& state, const std::vector<Vec3>& world_dirs,
                   const std::vector<RayResult>& results) {
  ScanFrame frame;
  frame.stamp = state.time;
  frame.sensor_position = state.position;
  frame.sensor_yaw = state.yaw;
  for (std::size_t i = 0; i < results.size(); ++i) {
    if (results[i].hit) {
      frame.returns.push_back(state.position + world_dirs[i] * results[i].distance);
    } else {
      frame.misses.push_back(world_dirs[i]);
    }
  }
  return frame;
}

std::vector<Vec3> world_directions(const sim::QuadState& state, const SensorConfig& config, std::int64_t frame_index) {
  auto dirs = pattern_directions(config, frame_index);
  const Mat3 r = yaw_rotation(state.yaw);
  for (auto& d : dirs) d = (r * d).normalized();
  return dirs;
}

}  // namespace

ScanFrame simulate_scan(const sim::Scene& scene, const sim::QuadState& state, const SensorConfig& config,
                        std::int64_t frame_index) {
  const auto dirs = world_directions(state, config, frame_index);
  std::vector<RayResult> results(dirs.size());
  const auto n = static_cast<std::int64_t>(dirs.size());
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    if (auto d = sim::ray_hit(scene, state.position, dirs[idx], config.max_range)) {
      results[idx] = {true, *d};
    }
  }
  return assemble(state, dirs, results);
}

namespace serial {

ScanFrame simulate_scan(const sim::Scene& scene, const sim::QuadState& state, const SensorConfig& config,
                        std::int64_t frame_index) {
  const auto dirs = world_directions(state, config, frame_index);
  std::vector<RayResult> results(dirs.size());
  for (std::size_t i = 0; i < dirs.size(); ++i) {
    if (auto d = sim::ray_hit(scene, state.position, dirs[i], config.max_range)) results[i] = {true, *d};
  }
  return assemble(state, dirs, results);
}

}  // namespace serial

ScanFrame ScanFrame::transformed(const RigidTransform& t) const {
  ScanFrame out;
  out.stamp = stamp;
  out.sensor_position = t.apply(sensor_position);
  out.sensor_yaw = wrap_angle(sensor_yaw + t.yaw());
  out.returns.reserve(returns.size());
  for (const auto& p : returns) out.returns.push_back(t.apply(p));
  out.misses.reserve(misses.size());
  for (const auto& d : misses) out.misses.push_back(t.rotate(d).normalized());
  return out;
}

OdometrySample sample_odometry(const sim::QuadState& state, double noise_sigma, std::uint64_t seed) {
  if (noise_sigma < 0.0) throw std::invalid_argument("sample_odometry: noise_sigma must be >= 0");
  OdometrySample s;
  s.stamp = state.time;
  s.position = state.position;
  s.yaw = state.yaw;
  s.velocity = state.velocity;
  s.noise_sigma = noise_sigma;
  if (noise_sigma > 0.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, noise_sigma);
    for (int a = 0; a < 3; ++a) s.position[a] += noise(rng);
  }
  return s;
}

void write_scan_record(std::ostream& out, const ScanFrame& frame) {
  nlohmann::json j;
  j["stamp"] = frame.stamp;
  j["position"] = json_util::to_json(frame.sensor_position);
  j["yaw"] = frame.sensor_yaw;
  j["returns"] = nlohmann::json::array();
  for (const auto& p : frame.returns) j["returns"].push_back(json_util::to_json(p));
  j["misses"] = nlohmann::json::array();
  for (const auto& d : frame.misses) j["misses"].push_back(json_util::to_json(d));
  out << j.dump() << '\n';
}

void save_scan_log(const std::vector<ScanFrame>& frames, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write scan log " + path.string());
  for (const auto& f : frames) write_scan_record(out, f);
}

std::vector<ScanFrame> load_scan_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open scan log " + path.string());
  std::vector<ScanFrame> frames;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    ScanFrame f;
    f.stamp = j.at("stamp").get<double>();
    f.sensor_position = json_util::vec3_from(j.at("position"));
    f.sensor_yaw = j.at("yaw").get<double>();
    for (const auto& p : j.at("returns")) f.returns.push_back(json_util::vec3_from(p));
    for (const auto& d : j.at("misses")) f.misses.push_back(json_util::vec3_from(d));
    frames.push_back(std::move(f));
  }
  return frames;
}

}  // namespace insp::lidar
