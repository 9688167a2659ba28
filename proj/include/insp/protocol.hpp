#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "insp/mapping.hpp"
#include "insp/mission.hpp"
#include "insp/planning.hpp"

/// Wire protocol between the gateway and the teleop UI. Every message is one
/// JSON object with a "type" member; see docs/protocol.md for the schemas.
namespace insp::protocol {

class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Client -> server
struct JoystickMsg {
  planning::JoystickCommand command;
};
struct RecordMsg {};
struct SetPhaseMsg {
  std::string phase;  // "human" or "optimize"
};
struct StartAutonomousMsg {
  std::optional<Vec3> start;  // scene frame; defaults to the mission's start
  std::optional<double> yaw;
};
struct LoadMissionMsg {
  std::string path;
};

using ClientMessage = std::variant<JoystickMsg, RecordMsg, SetPhaseMsg, StartAutonomousMsg, LoadMissionMsg>;

/// Throws ProtocolError for malformed JSON, unknown types, missing or
/// out-of-range fields.
ClientMessage parse_client(const std::string& text);
std::string encode(const ClientMessage& msg);

// Server -> client
struct StateMsg {
  std::string phase;
  mission::TrajectorySample sample;
};

struct MapDeltaMsg {
  double resolution = 0.2;
  std::vector<std::pair<Cell, mapping::InflationState>> cells;  // cells whose inflation state changed
};

struct PointsMsg {
  std::vector<mission::InspectionPoint> points;  // recording order
  std::vector<int> order;                        // optimized order, empty before optimization
  std::optional<double> recorded_cost;
  std::optional<double> optimized_cost;
};

std::string encode_state(const StateMsg& m);
std::string encode_map_delta(const MapDeltaMsg& m);
std::string encode_points(const PointsMsg& m);
std::string encode_event(const mission::Event& e);
std::string encode_snapshot(const mission::Snapshot& s);
std::string encode_metrics(const std::vector<std::pair<std::string, mission::Metrics>>& rows);
std::string encode_error(const std::string& message);

/// Message type tag of any encoded message (empty when absent or malformed).
std::string type_of(const std::string& text);

}  // namespace insp::protocol
