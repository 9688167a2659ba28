#include <doctest.h>

#include <nlohmann/json.hpp>

#include "insp/protocol.hpp"

using namespace insp;
using namespace insp::protocol;
using json = nlohmann::json;

TEST_CASE("client messages: parse and encode round trip") {
  planning::JoystickCommand c;
  c.axes = {0.5, -1.0, 0.25, 0.0};
  c.gimbal_axis = -0.5;
  c.record_pressed = true;
  const std::vector<ClientMessage> msgs{
      JoystickMsg{c},
      RecordMsg{},
      SetPhaseMsg{"optimize"},
      StartAutonomousMsg{Vec3(1, 2, 3), 0.5},
      StartAutonomousMsg{},
      LoadMissionMsg{"missions/a.json"},
  };
  for (const auto& m : msgs) {
    const auto text = encode(m);
    const auto back = parse_client(text);
    CHECK(back.index() == m.index());
    CHECK(encode(back) == text);
  }
  const auto j = std::get<JoystickMsg>(parse_client(encode(JoystickMsg{c})));
  CHECK(j.command.axes == c.axes);
  CHECK(j.command.gimbal_axis == -0.5);
  CHECK(j.command.record_pressed);
}

TEST_CASE("client messages: joystick defaults") {
  const auto m = std::get<JoystickMsg>(parse_client(R"({"type":"joystick","axes":[0,0,0,0]})"));
  CHECK(m.command.gimbal_axis == 0.0);
  CHECK_FALSE(m.command.record_pressed);
}

TEST_CASE("client messages: every malformed input is rejected") {
  const std::vector<std::string> bad{
      "",
      "{",
      "[]",
      "42",
      R"({"axes":[0,0,0,0]})",
      R"({"type":7})",
      R"({"type":"teleport"})",
      R"({"type":"joystick"})",
      R"({"type":"joystick","axes":[0,0,0]})",
      R"({"type":"joystick","axes":[0,0,0,1.5]})",
      R"({"type":"joystick","axes":[0,"a",0,0]})",
      R"({"type":"joystick","axes":[0,0,0,0],"gimbal":3})",
      R"({"type":"set_phase"})",
      R"({"type":"set_phase","phase":"autonomous"})",
      R"({"type":"start_autonomous","start":[1,2]})",
      R"({"type":"load_mission"})",
      R"({"type":"load_mission","path":""})",
  };
  for (const auto& s : bad) {
    INFO(s);
    CHECK_THROWS_AS(parse_client(s), ProtocolError);
  }
}

TEST_CASE("server messages carry a type tag and their payload") {
  mission::TrajectorySample s;
  s.t = 1.5;
  s.position = Vec3(1, 2, 3);
  s.speed = 0.25;
  const auto state = json::parse(encode_state({"human", s}));
  CHECK(state["type"] == "state");
  CHECK(state["phase"] == "human");
  CHECK(state["t"] == 1.5);
  CHECK(state["speed"] == 0.25);
  CHECK(type_of(encode_state({"human", s})) == "state");

  MapDeltaMsg md;
  md.resolution = 0.2;
  md.cells.emplace_back(Cell(1, -2, 3), mapping::InflationState::OccupiedInflation);
  const auto map = json::parse(encode_map_delta(md));
  CHECK(map["type"] == "map_delta");
  REQUIRE(map["cells"].size() == 1);
  CHECK(map["cells"][0][0] == 1);
  CHECK(map["cells"][0][1] == -2);
  CHECK(map["cells"][0][3] == int(mapping::InflationState::OccupiedInflation));

  PointsMsg pm;
  pm.points.push_back({Vec3(0, 0, 1), 0.5, -0.1, 0});
  pm.points.push_back({Vec3(1, 0, 1), 0.0, 0.0, 1});
  pm.order = {0, 1};
  pm.recorded_cost = 4.0;
  pm.optimized_cost = 3.0;
  const auto pts = json::parse(encode_points(pm));
  CHECK(pts["points"].size() == 2);
  CHECK(pts["order"] == json::array({0, 1}));
  CHECK(pts["reduction"].get<double>() == doctest::Approx(0.25));
  const auto bare = json::parse(encode_points({pm.points, {}, std::nullopt, std::nullopt}));
  CHECK_FALSE(bare.contains("reduction"));
  CHECK(bare["order"].empty());

  mission::Event e{2.0, mission::event::kPointReached, 3, Vec3(1, 1, 1), ""};
  const auto ev = json::parse(encode_event(e));
  CHECK(ev["type"] == "event");
  CHECK(ev["event"]["type"] == mission::event::kPointReached);
  CHECK(ev["event"]["index"] == 3);

  mission::Metrics m{2.0, 2.0, 120.0, 60.0};
  const auto met = json::parse(encode_metrics({{"Human-in-the-loop", m}}));
  CHECK(met["rows"][0]["flight_time"] == "1 : 00");
  CHECK(met["table"].get<std::string>().find("| Human-in-the-loop | 2.00 | 2.00 | 120.00 | 1 : 00 |") !=
        std::string::npos);

  const auto err = json::parse(encode_error("nope"));
  CHECK(err["type"] == "error");
  CHECK(err["message"] == "nope");
  CHECK(type_of("garbage").empty());
  CHECK(type_of("{}").empty());
}
