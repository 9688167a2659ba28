#include <doctest.h>

#include <cstdlib>
#include <thread>

#include "insp/gateway.hpp"
#include "insp/protocol.hpp"
#include "ws_client.hpp"

using namespace insp;
using namespace std::chrono_literals;
using test_support::WsClient;
using json = nlohmann::json;

namespace {

const std::filesystem::path kData = INSP_DATA_DIR;

gateway::GatewayConfig live_config(bool realtime) {
  gateway::GatewayConfig g;
  g.session = session::desk_config(0);
  g.session.anchor.accumulation_time = 1.0;
  g.scene = sim::load_scene(kData / "scenes" / "reloc_room.json");
  g.endpoint.port = 0;
  g.realtime = realtime;
  return g;
}

std::string joystick(double fwd, double left = 0.0) {
  planning::JoystickCommand c;
  c.axes = {fwd, left, 0.0, 0.0};
  return protocol::encode(protocol::JoystickMsg{c});
}

bool is(const json& m, const char* type) { return m.value("type", "") == type; }

double sim_time(const json& state) { return state.value("t", -1.0); }

}  // namespace

TEST_CASE("endpoint parsing and environment override") {
  auto e = gateway::parse_endpoint("0.0.0.0:9000");
  CHECK(e.host == "0.0.0.0");
  CHECK(e.port == 9000);
  e = gateway::parse_endpoint(":1234");
  CHECK(e.host == "127.0.0.1");
  CHECK(e.port == 1234);
  CHECK_THROWS(gateway::parse_endpoint("localhost"));
  CHECK_THROWS(gateway::parse_endpoint("h:99999"));
  CHECK_THROWS(gateway::parse_endpoint("h:12x"));

  ::setenv("INSP_ENDPOINT", "127.0.0.2:4321", 1);
  e = gateway::endpoint_from_env();
  CHECK(e.host == "127.0.0.2");
  CHECK(e.port == 4321);
  ::unsetenv("INSP_ENDPOINT");
  CHECK(gateway::endpoint_from_env().port == 8765);
}

TEST_CASE("bind failure is reported") {
  auto g = live_config(true);
  gateway::Gateway a(g);
  const auto port = a.start();
  g.endpoint.port = port;
  gateway::Gateway b(g);
  CHECK_THROWS_AS(b.start(), std::runtime_error);
  a.stop();
}

TEST_CASE("headless scripted workflow without clients") {
  auto g = live_config(false);
  g.script = session::load_script(kData / "scripts" / "single_point.json");
  const auto out = std::filesystem::temp_directory_path() / "insp_gateway_headless";
  std::filesystem::remove_all(out);
  g.out = out;
  gateway::Gateway gw(g);
  gw.start();
  gw.wait();
  CHECK(gw.finished());
  CHECK(gw.phase() == gateway::Phase::Done);
  const auto logs = gw.logs();
  REQUIRE(logs.size() == 2);
  CHECK(logs[0].phase == "human");
  CHECK(logs[1].phase == "autonomous");
  CHECK(logs[1].events_of(mission::event::kLanded).size() == 1);
  REQUIRE(gw.mission());
  CHECK(gw.mission()->optimized());
  CHECK(std::filesystem::exists(out / "human.jsonl"));
  CHECK(std::filesystem::exists(out / "autonomous.jsonl"));
  CHECK(std::filesystem::exists(out / "mission.json"));
  CHECK(std::filesystem::exists(out / "metrics.md"));
  gw.stop();
  std::filesystem::remove_all(out);
}

TEST_CASE("malformed and unknown messages get an error reply and the session continues") {
  gateway::Gateway gw(live_config(true));
  const auto port = gw.start();
  WsClient c(port);
  REQUIRE(c.wait_for([](const json& m) { return is(m, "state"); }, 3s));
  c.send("{not json");
  c.send(R"({"type":"warp_drive"})");
  c.send(R"({"type":"joystick","axes":[2,0,0,0]})");
  auto err = c.wait_for([](const json& m) { return is(m, "error"); }, 2s);
  REQUIRE(err);
  std::this_thread::sleep_for(300ms);
  CHECK(c.of_type("error").size() == 3);
  const auto before = c.of_type("state").size();
  std::this_thread::sleep_for(500ms);
  CHECK(c.of_type("state").size() > before + 5);
  CHECK(gw.phase() == gateway::Phase::Human);
  c.close();
  gw.stop();
}

TEST_CASE("joystick stream at 20 Hz is echoed by state messages at 20 Hz") {
  gateway::Gateway gw(live_config(true));
  const auto port = gw.start();
  WsClient c(port);
  REQUIRE(c.wait_for([](const json& m) { return is(m, "state"); }, 3s));
  const auto t0 = WsClient::Clock::now();
  const auto duration = 3s;
  auto next = t0;
  while (WsClient::Clock::now() - t0 < duration) {
    c.send(joystick(0.0));
    next += 50ms;
    std::this_thread::sleep_until(next);
  }
  const auto t1 = WsClient::Clock::now();
  std::size_t n = 0;
  for (const auto& r : c.received())
    if (is(r.msg, "state") && r.at >= t0 && r.at < t1) ++n;
  const double rate = double(n) / std::chrono::duration<double>(t1 - t0).count();
  MESSAGE("state rate ", rate, " Hz");
  CHECK(rate >= 18.0);
  CHECK(rate <= 22.0);
  c.close();
  gw.stop();
}

TEST_CASE("disconnect mid-flight acts as a zero-axis command") {
  gateway::Gateway gw(live_config(true));
  const auto port = gw.start();
  WsClient watcher(port);
  auto pilot = std::make_unique<WsClient>(port);
  // Anchor accumulation holds the vehicle for the first second.
  REQUIRE(watcher.wait_for([](const json& m) { return is(m, "state") && sim_time(m) > 1.2; }, 5s));
  for (int i = 0; i < 30; ++i) {
    pilot->send(joystick(0.6));
    std::this_thread::sleep_for(50ms);
  }
  auto moving = watcher.of_type("state").back();
  CHECK(moving.value("speed", 0.0) > 0.3);
  pilot->close();
  pilot.reset();
  std::this_thread::sleep_for(3s);
  const auto states = watcher.of_type("state");
  const auto& last = states.back();
  CHECK(last.value("speed", 1.0) < 0.05);
  CHECK(gw.clients() == 1);
  watcher.close();
  gw.stop();
}

TEST_CASE("workflow guards: human, optimize, autonomous in order") {
  gateway::Gateway gw(live_config(false));
  const auto port = gw.start();
  WsClient c(port);
  REQUIRE(c.wait_for([](const json& m) { return is(m, "state") && sim_time(m) > 2.0; }, 10s));

  c.send(R"({"type":"start_autonomous"})");
  c.send(R"({"type":"set_phase","phase":"optimize"})");
  REQUIRE(c.wait_for([](const json& m) { return is(m, "error"); }, 3s));
  std::this_thread::sleep_for(200ms);
  CHECK(c.of_type("error").size() == 2);
  CHECK(gw.phase() == gateway::Phase::Human);

  c.send(R"({"type":"record"})");
  REQUIRE(c.wait_for([](const json& m) { return is(m, "points") && m["points"].size() == 1; }, 5s));
  c.send(R"({"type":"set_phase","phase":"optimize"})");
  auto pts = c.wait_for([](const json& m) { return is(m, "points") && !m["order"].empty(); }, 10s);
  REQUIRE(pts);
  CHECK((*pts)["order"] == json::array({0}));
  CHECK(pts->contains("recorded_cost"));
  REQUIRE(c.wait_for([](const json& m) { return is(m, "metrics"); }, 5s));
  for (int i = 0; i < 100 && gw.phase() != gateway::Phase::Ready; ++i) std::this_thread::sleep_for(20ms);
  CHECK(gw.phase() == gateway::Phase::Ready);

  const auto before = c.count();
  c.send(R"({"type":"set_phase","phase":"optimize"})");
  REQUIRE(c.wait_for([](const json& m) { return is(m, "error"); }, 3s, before));

  c.send(R"({"type":"start_autonomous"})");
  REQUIRE(c.wait_for(
      [](const json& m) { return is(m, "event") && m["event"].value("type", "") == mission::event::kLanded; }, 60s,
      before));
  for (int i = 0; i < 200 && gw.phase() != gateway::Phase::Done; ++i) std::this_thread::sleep_for(20ms);
  CHECK(gw.phase() == gateway::Phase::Done);
  CHECK(c.wait_for([](const json& m) { return is(m, "snapshot"); }, 1s, before));
  CHECK(gw.logs().size() == 2);
  c.close();
  gw.stop();
}

TEST_CASE("map deltas are broadcast at the map rate") {
  gateway::Gateway gw(live_config(true));
  const auto port = gw.start();
  WsClient c(port);
  std::this_thread::sleep_for(2500ms);
  const auto maps = c.of_type("map_delta");
  REQUIRE(!maps.empty());
  CHECK(maps.size() <= 13);
  std::size_t cells = 0;
  for (const auto& m : maps) {
    CHECK(m["resolution"].get<double>() > 0.0);
    cells += m["cells"].size();
  }
  CHECK(cells > 0);
  c.close();
  gw.stop();
}

TEST_CASE("a stalled client does not slow the simulation tick") {
  auto measure = [](bool stall) {
    gateway::Gateway gw(live_config(true));
    const auto port = gw.start();
    std::unique_ptr<WsClient> c;
    if (stall) c = std::make_unique<WsClient>(port, false);
    std::this_thread::sleep_for(3s);
    const auto s = gw.tick_stats();
    if (c) c->close();
    gw.stop();
    return s;
  };
  const auto stalled = measure(true);
  MESSAGE("mean tick period ", stalled.mean_period, " s, max lateness ", stalled.max_lateness, " s");
  CHECK(stalled.ticks > 200);
  CHECK(std::abs(stalled.mean_period - 0.01) <= 0.001);
}
