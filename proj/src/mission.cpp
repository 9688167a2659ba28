#include "insp/mission.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/core.h>
#include <nlohmann/json.hpp>

#include "insp/json_util.hpp"

namespace insp::mission {

using nlohmann::json;
using json_util::to_json;
using json_util::vec3_from;

std::vector<InspectionPoint> Mission::ordered_points() const {
  std::vector<InspectionPoint> out;
  out.reserve(order.size());
  for (int i : order) out.push_back(points.at(std::size_t(i)));
  return out;
}

void Mission::validate() const {
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (!points[i].valid()) throw MissionError(fmt::format("point {} is invalid", i));
  }
  if (!order.empty()) {
    if (order.size() != points.size()) {
      throw MissionError(fmt::format("order has {} entries for {} points", order.size(), points.size()));
    }
    std::vector<int> sorted = order;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < sorted.size(); ++i) {
      if (sorted[i] != int(i)) throw MissionError("order is not a permutation of the point indices");
    }
    if (order.front() != 0) throw MissionError("order must start at point 0");
  }
  for (const auto& n : anchor.normals) {
    if (std::abs(n.norm() - 1.0) > 1e-5) throw MissionError("anchor normal is not unit length");
  }
  if (anchor.normals.size() != anchor.points.size()) throw MissionError("anchor points and normals differ in count");
  if (!(config.hover_duration >= 0 && config.abandon_limit >= 0 && config.arrival_tolerance > 0 &&
        config.align_tolerance > 0)) {
    throw MissionError("mission config values out of range");
  }
}

namespace {

json point_to_json(const InspectionPoint& p) {
  return {{"position", to_json(p.position)},
          {"yaw", p.yaw},
          {"gimbal_pitch", p.gimbal_pitch},
          {"recorded_index", p.recorded_index}};
}

InspectionPoint point_from_json(const json& j) {
  return {vec3_from(j.at("position")), j.at("yaw").get<double>(), j.at("gimbal_pitch").get<double>(),
          j.at("recorded_index").get<int>()};
}

std::filesystem::path sibling(const std::filesystem::path& path, const std::string& suffix) {
  return path.parent_path() / (path.stem().string() + suffix);
}

}  // namespace

void save_mission(const Mission& mission, const std::filesystem::path& path) {
  mission.validate();
  const auto anchor_path = sibling(path, ".anchor.bin");
  reloc::save_anchor(mission.anchor, anchor_path);
  json j;
  j["format"] = "insp-mission";
  j["version"] = kMissionFormatVersion;
  j["scene_id"] = mission.scene_id;
  j["p_init"] = to_json(mission.p_init);
  j["init_yaw"] = mission.init_yaw;
  j["anchor"] = anchor_path.filename().string();
  j["anchor_voxel"] = mission.anchor.voxel;
  if (mission.global) {
    const auto global_path = sibling(path, ".global.bin");
    mapping::save_snapshot(mapping::snapshot(*mission.global), global_path);
    j["global_map"] = global_path.filename().string();
  }
  j["points"] = json::array();
  for (const auto& p : mission.points) j["points"].push_back(point_to_json(p));
  j["order"] = mission.order;
  j["config"] = {{"hover_duration", mission.config.hover_duration},
                 {"abandon_limit", mission.config.abandon_limit},
                 {"arrival_tolerance", mission.config.arrival_tolerance},
                 {"align_tolerance", mission.config.align_tolerance}};
  std::ofstream out(path);
  if (!out) throw MissionError("cannot write mission " + path.string());
  out << j.dump(2) << '\n';
}

Mission load_mission(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissionError("cannot open mission " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw MissionError(fmt::format("{}: {}", path.string(), e.what()));
  }
  Mission m;
  try {
    if (j.value("format", "") != "insp-mission") throw MissionError(path.string() + ": not a mission file");
    const int version = j.at("version").get<int>();
    if (version != kMissionFormatVersion) {
      throw MissionError(fmt::format("{}: unsupported mission version {} (expected {})", path.string(), version,
                                     kMissionFormatVersion));
    }
    m.scene_id = j.at("scene_id").get<std::string>();
    m.p_init = vec3_from(j.at("p_init"));
    m.init_yaw = j.at("init_yaw").get<double>();
    const auto anchor_path = path.parent_path() / j.at("anchor").get<std::string>();
    if (!std::filesystem::exists(anchor_path)) {
      throw MissionError("missing anchor map file " + anchor_path.string());
    }
    m.anchor = reloc::load_anchor(anchor_path, j.value("anchor_voxel", 0.1));
    if (j.contains("global_map")) {
      const auto global_path = path.parent_path() / j.at("global_map").get<std::string>();
      if (!std::filesystem::exists(global_path)) throw MissionError("missing global map file " + global_path.string());
      m.global = mapping::global_from_snapshot(mapping::load_snapshot(global_path));
    }
    for (const auto& p : j.at("points")) m.points.push_back(point_from_json(p));
    m.order = j.at("order").get<std::vector<int>>();
    const auto& c = j.at("config");
    m.config.hover_duration = c.at("hover_duration").get<double>();
    m.config.abandon_limit = c.at("abandon_limit").get<double>();
    m.config.arrival_tolerance = c.at("arrival_tolerance").get<double>();
    m.config.align_tolerance = c.at("align_tolerance").get<double>();
  } catch (const json::exception& e) {
    throw MissionError(fmt::format("{}: {}", path.string(), e.what()));
  }
  try {
    m.validate();
  } catch (const MissionError& e) {
    throw MissionError(fmt::format("{}: {}", path.string(), e.what()));
  }
  return m;
}

InspectionPoint PointRecorder::record(const sim::QuadState& state, bool* duplicate) {
  if (phase_ != Phase::Human) throw MissionError("points can only be recorded during the human phase");
  InspectionPoint p{state.position, state.yaw, state.gimbal_pitch, static_cast<int>(points_.size())};
  bool dup = false;
  for (const auto& q : points_) {
    dup = dup || (q.position == p.position && q.yaw == p.yaw && q.gimbal_pitch == p.gimbal_pitch);
  }
  if (duplicate) *duplicate = dup;
  points_.push_back(p);
  return p;
}

Vec3 optical_axis(double yaw, double pitch) {
  return Vec3(std::cos(pitch) * std::cos(yaw), std::cos(pitch) * std::sin(yaw), std::sin(pitch));
}

Vec3 camera_ray(const CameraModel& cam, double yaw, double pitch, int col, int row) {
  const Vec3 f = optical_axis(yaw, pitch);
  const Vec3 right(std::sin(yaw), -std::cos(yaw), 0.0);
  const Vec3 up = right.cross(f);
  const double tx = std::tan(0.5 * cam.h_fov_deg * kPi / 180.0);
  const double ty = std::tan(0.5 * cam.v_fov_deg * kPi / 180.0);
  const double u = tx * (2.0 * (col + 0.5) / cam.width - 1.0);
  const double v = ty * (1.0 - 2.0 * (row + 0.5) / cam.height);
  return (f + u * right + v * up).normalized();
}

Snapshot cast_snapshot(const sim::Scene& scene, const sim::QuadState& state, int index, const CameraModel& cam) {
  Snapshot s;
  s.stamp = state.time;
  s.position = state.position;
  s.yaw = state.yaw;
  s.gimbal_pitch = state.gimbal_pitch;
  s.index = index;
  s.width = cam.width;
  s.height = cam.height;
  const auto n = std::size_t(cam.width) * std::size_t(cam.height);
  s.hits.assign(n, std::nullopt);
  s.depth.assign(n, std::nullopt);
  const Vec3 f = optical_axis(state.yaw, state.gimbal_pitch);
  for (int row = 0; row < cam.height; ++row) {
    for (int col = 0; col < cam.width; ++col) {
      const Vec3 d = camera_ray(cam, state.yaw, state.gimbal_pitch, col, row);
      if (auto r = sim::ray_hit(scene, state.position, d, cam.max_range)) {
        const auto i = std::size_t(row) * std::size_t(cam.width) + std::size_t(col);
        s.hits[i] = state.position + *r * d;
        s.depth[i] = *r * d.dot(f);
      }
    }
  }
  return s;
}

void require_aligned(double yaw, double gimbal_pitch, const InspectionPoint& point, double tol) {
  const double ey = std::abs(wrap_angle(yaw - point.yaw));
  const double ep = std::abs(gimbal_pitch - point.gimbal_pitch);
  if (ey > tol || ep > tol) {
    throw MissionError(fmt::format("camera not aligned with point {}: yaw error {:.4f}, pitch error {:.4f} (tol {})",
                                   point.recorded_index, ey, ep, tol));
  }
}

Snapshot capture_snapshot(const sim::Scene& scene, const sim::QuadState& state, const InspectionPoint& point,
                          double tol, const CameraModel& cam) {
  require_aligned(state.yaw, state.gimbal_pitch, point, tol);
  return cast_snapshot(scene, state, point.recorded_index, cam);
}

double snapshot_agreement(const Snapshot& a, const Snapshot& b, double tol) {
  if (a.depth.size() != b.depth.size() || a.depth.empty()) return 0.0;
  std::size_t agree = 0;
  for (std::size_t i = 0; i < a.depth.size(); ++i) {
    const auto& da = a.depth[i];
    const auto& db = b.depth[i];
    if ((!da && !db) || (da && db && std::abs(*da - *db) <= tol)) ++agree;
  }
  return double(agree) / double(a.depth.size());
}

std::vector<const Event*> MissionLog::events_of(const std::string& type) const {
  std::vector<const Event*> out;
  for (const auto& e : events)
    if (e.type == type) out.push_back(&e);
  return out;
}

namespace {

json sample_to_json(const TrajectorySample& s) {
  return {{"record", "sample"},       {"t", s.t},           {"position", to_json(s.position)},
          {"velocity", to_json(s.velocity)}, {"yaw", s.yaw}, {"gimbal_pitch", s.gimbal_pitch},
          {"speed", s.speed},         {"truth", to_json(s.truth)}};
}

json event_to_json(const Event& e) {
  return {{"record", "event"}, {"t", e.t},          {"type", e.type},
          {"index", e.index},  {"position", to_json(e.position)}, {"detail", e.detail}};
}

json snapshot_to_json(const Snapshot& s) {
  json hits = json::array(), depth = json::array();
  for (std::size_t i = 0; i < s.depth.size(); ++i) {
    hits.push_back(s.hits[i] ? to_json(*s.hits[i]) : json(nullptr));
    depth.push_back(s.depth[i] ? json(*s.depth[i]) : json(nullptr));
  }
  return {{"record", "snapshot"}, {"stamp", s.stamp},  {"position", to_json(s.position)},
          {"yaw", s.yaw},         {"gimbal_pitch", s.gimbal_pitch}, {"index", s.index},
          {"width", s.width},     {"height", s.height}, {"hits", hits}, {"depth", depth}};
}

}  // namespace

nlohmann::json to_json(const Snapshot& s) { return snapshot_to_json(s); }
nlohmann::json to_json(const Event& e) { return event_to_json(e); }
nlohmann::json to_json(const TrajectorySample& s) { return sample_to_json(s); }

void write_log(std::ostream& out, const MissionLog& log) {
  out << json{{"record", "header"}, {"phase", log.phase}, {"scene_id", log.scene_id}, {"seed", log.seed}}.dump()
      << '\n';
  for (const auto& s : log.samples) out << sample_to_json(s).dump() << '\n';
  for (const auto& e : log.events) out << event_to_json(e).dump() << '\n';
  for (const auto& s : log.snapshots) out << snapshot_to_json(s).dump() << '\n';
}

MissionLog read_log(std::istream& in) {
  MissionLog log;
  std::string line;
  bool header = false;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto j = json::parse(line);
      const auto kind = j.at("record").get<std::string>();
      if (kind == "header") {
        log.phase = j.at("phase").get<std::string>();
        log.scene_id = j.at("scene_id").get<std::string>();
        log.seed = j.at("seed").get<std::uint64_t>();
        header = true;
      } else if (kind == "sample") {
        TrajectorySample s;
        s.t = j.at("t").get<double>();
        s.position = vec3_from(j.at("position"));
        s.velocity = vec3_from(j.at("velocity"));
        s.yaw = j.at("yaw").get<double>();
        s.gimbal_pitch = j.at("gimbal_pitch").get<double>();
        s.speed = j.at("speed").get<double>();
        s.truth = vec3_from(j.at("truth"));
        log.samples.push_back(s);
      } else if (kind == "event") {
        Event e;
        e.t = j.at("t").get<double>();
        e.type = j.at("type").get<std::string>();
        e.index = j.at("index").get<int>();
        e.position = vec3_from(j.at("position"));
        e.detail = j.at("detail").get<std::string>();
        log.events.push_back(std::move(e));
      } else if (kind == "snapshot") {
        Snapshot s;
        s.stamp = j.at("stamp").get<double>();
        s.position = vec3_from(j.at("position"));
        s.yaw = j.at("yaw").get<double>();
        s.gimbal_pitch = j.at("gimbal_pitch").get<double>();
        s.index = j.at("index").get<int>();
        s.width = j.at("width").get<int>();
        s.height = j.at("height").get<int>();
        for (const auto& h : j.at("hits")) s.hits.push_back(h.is_null() ? std::nullopt : std::optional<Vec3>(vec3_from(h)));
        for (const auto& d : j.at("depth"))
          s.depth.push_back(d.is_null() ? std::nullopt : std::optional<double>(d.get<double>()));
        log.snapshots.push_back(std::move(s));
      } else {
        throw MissionError(fmt::format("unknown record type '{}'", kind));
      }
    } catch (const json::exception& e) {
      throw MissionError(fmt::format("log line {}: {}", lineno, e.what()));
    }
  }
  if (!header) throw MissionError("log has no header record");
  return log;
}

void save_log(const MissionLog& log, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw MissionError("cannot write log " + path.string());
  write_log(out, log);
}

MissionLog load_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissionError("cannot open log " + path.string());
  return read_log(in);
}

Metrics compute_metrics(const MissionLog& log) {
  if (log.samples.size() < 2) throw MissionError("metrics need at least two trajectory samples");
  Metrics m;
  for (std::size_t i = 0; i < log.samples.size(); ++i) {
    m.max_speed = std::max(m.max_speed, log.samples[i].speed);
    if (i > 0) m.length += (log.samples[i].position - log.samples[i - 1].position).norm();
  }
  m.flight_time = log.samples.back().t - log.samples.front().t;
  m.average_speed = m.flight_time > 0 ? m.length / m.flight_time : 0.0;
  return m;
}

std::string format_flight_time(double seconds) {
  const auto total = static_cast<long long>(std::llround(std::max(0.0, seconds)));
  return fmt::format("{} : {:02d}", total / 60, total % 60);
}

std::string metrics_table(const std::vector<std::pair<std::string, Metrics>>& rows) {
  std::string out =
      "| Inspection Mode | Maximum Speed (m/s) | Average Speed (m/s) | Trajectory Length (m) | Flight Time (min : sec) |\n"
      "|---|---|---|---|---|\n";
  for (const auto& [mode, m] : rows) {
    out += fmt::format("| {} | {:.2f} | {:.2f} | {:.2f} | {} |\n", mode, m.max_speed, m.average_speed, m.length,
                       format_flight_time(m.flight_time));
  }
  return out;
}

std::string metrics_line(const Metrics& m) {
  return fmt::format("{:.2f} {:.2f} {:.2f} {}", m.max_speed, m.average_speed, m.length,
                     format_flight_time(m.flight_time));
}

}  // namespace insp::mission
