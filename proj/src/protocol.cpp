#include "insp/protocol.hpp"

#include <cmath>
#include <nlohmann/json.hpp>

#include "insp/json_util.hpp"

namespace insp::protocol {

using json = nlohmann::json;
using json_util::to_json;
using json_util::vec3_from;

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

double finite_in(const json& j, const char* key, double lo, double hi) {
  if (!j.contains(key)) throw ProtocolError(std::string("missing field '") + key + "'");
  const auto& v = j.at(key);
  if (!v.is_number()) throw ProtocolError(std::string("field '") + key + "' must be a number");
  const double d = v.get<double>();
  if (!std::isfinite(d) || d < lo || d > hi)
    throw ProtocolError(std::string("field '") + key + "' out of range");
  return d;
}

}  // namespace

ClientMessage parse_client(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ProtocolError(std::string("malformed message: ") + e.what());
  }
  if (!j.is_object()) throw ProtocolError("message must be a JSON object");
  if (!j.contains("type") || !j.at("type").is_string()) throw ProtocolError("message has no string 'type'");
  const std::string type = j.at("type").get<std::string>();
  try {
    if (type == "joystick") {
      JoystickMsg m;
      const auto& axes = j.at("axes");
      if (!axes.is_array() || axes.size() != 4) throw ProtocolError("'axes' must hold 4 numbers");
      for (std::size_t i = 0; i < 4; ++i) {
        if (!axes[i].is_number()) throw ProtocolError("'axes' must hold 4 numbers");
        const double a = axes[i].get<double>();
        if (!std::isfinite(a) || a < -1.0 || a > 1.0) throw ProtocolError("axis value outside [-1, 1]");
        m.command.axes[i] = a;
      }
      m.command.gimbal_axis = j.contains("gimbal") ? finite_in(j, "gimbal", -1.0, 1.0) : 0.0;
      m.command.record_pressed = j.value("record", false);
      return m;
    }
    if (type == "record") return RecordMsg{};
    if (type == "set_phase") {
      SetPhaseMsg m{j.at("phase").get<std::string>()};
      if (m.phase != "human" && m.phase != "optimize") throw ProtocolError("unknown phase '" + m.phase + "'");
      return m;
    }
    if (type == "start_autonomous") {
      StartAutonomousMsg m;
      if (j.contains("start")) m.start = vec3_from(j.at("start"));
      if (j.contains("yaw")) m.yaw = finite_in(j, "yaw", -1e3, 1e3);
      return m;
    }
    if (type == "load_mission") {
      LoadMissionMsg m{j.at("path").get<std::string>()};
      if (m.path.empty()) throw ProtocolError("empty mission path");
      return m;
    }
  } catch (const json::exception& e) {
    throw ProtocolError("bad '" + type + "' message: " + e.what());
  }
  throw ProtocolError("unknown message type '" + type + "'");
}

std::string encode(const ClientMessage& msg) {
  json j = std::visit(
      overloaded{
          [](const JoystickMsg& m) {
            const auto& c = m.command;
            return json{{"type", "joystick"},
                        {"axes", {c.axes[0], c.axes[1], c.axes[2], c.axes[3]}},
                        {"gimbal", c.gimbal_axis},
                        {"record", c.record_pressed}};
          },
          [](const RecordMsg&) { return json{{"type", "record"}}; },
          [](const SetPhaseMsg& m) { return json{{"type", "set_phase"}, {"phase", m.phase}}; },
          [](const StartAutonomousMsg& m) {
            json o{{"type", "start_autonomous"}};
            if (m.start) o["start"] = to_json(*m.start);
            if (m.yaw) o["yaw"] = *m.yaw;
            return o;
          },
          [](const LoadMissionMsg& m) { return json{{"type", "load_mission"}, {"path", m.path}}; },
      },
      msg);
  return j.dump();
}

std::string encode_state(const StateMsg& m) {
  json j = mission::to_json(m.sample);
  j.erase("record");
  j["type"] = "state";
  j["phase"] = m.phase;
  return j.dump();
}

std::string encode_map_delta(const MapDeltaMsg& m) {
  json cells = json::array();
  for (const auto& [c, s] : m.cells) cells.push_back({c.x(), c.y(), c.z(), static_cast<int>(s)});
  return json{{"type", "map_delta"}, {"resolution", m.resolution}, {"cells", cells}}.dump();
}

std::string encode_points(const PointsMsg& m) {
  json pts = json::array();
  for (const auto& p : m.points)
    pts.push_back({{"position", to_json(p.position)},
                   {"yaw", p.yaw},
                   {"gimbal_pitch", p.gimbal_pitch},
                   {"recorded_index", p.recorded_index}});
  json j{{"type", "points"}, {"points", pts}, {"order", m.order}};
  if (m.recorded_cost) j["recorded_cost"] = *m.recorded_cost;
  if (m.optimized_cost) j["optimized_cost"] = *m.optimized_cost;
  if (m.recorded_cost && m.optimized_cost && *m.recorded_cost > 0.0)
    j["reduction"] = (*m.recorded_cost - *m.optimized_cost) / *m.recorded_cost;
  return j.dump();
}

std::string encode_event(const mission::Event& e) {
  json j = mission::to_json(e);
  j.erase("record");
  return json{{"type", "event"}, {"event", j}}.dump();
}

std::string encode_snapshot(const mission::Snapshot& s) {
  json j = mission::to_json(s);
  j.erase("record");
  return json{{"type", "snapshot"}, {"snapshot", j}}.dump();
}

std::string encode_metrics(const std::vector<std::pair<std::string, mission::Metrics>>& rows) {
  json r = json::array();
  for (const auto& [label, m] : rows)
    r.push_back({{"mode", label},
                 {"max_speed", m.max_speed},
                 {"average_speed", m.average_speed},
                 {"length", m.length},
                 {"flight_time", mission::format_flight_time(m.flight_time)},
                 {"flight_seconds", m.flight_time}});
  return json{{"type", "metrics"}, {"rows", r}, {"table", mission::metrics_table(rows)}}.dump();
}

std::string encode_error(const std::string& message) {
  return json{{"type", "error"}, {"message", message}}.dump();
}

std::string type_of(const std::string& text) {
  const json j = json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object() || !j.contains("type") || !j.at("type").is_string()) return {};
  return j.at("type").get<std::string>();
}

}  // namespace insp::protocol
