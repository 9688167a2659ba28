#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "insp/mission.hpp"
#include "insp/scene.hpp"
#include "insp/session.hpp"

namespace insp::gateway {

struct Endpoint {
  std::string host = "127.0.0.1";
  unsigned short port = 8765;  // 0 picks a free port
};

/// Parses "host:port" or ":port"; throws std::invalid_argument.
Endpoint parse_endpoint(const std::string& text);
/// The INSP_ENDPOINT environment variable when set, else `fallback`.
Endpoint endpoint_from_env(const Endpoint& fallback = {});

struct GatewayConfig {
  session::SessionConfig session;
  sim::Scene scene;
  std::optional<session::PilotScript> script;  // headless pilot; the full workflow then runs unattended
  std::optional<mission::Mission> mission;      // preloaded optimized mission
  Endpoint endpoint;
  Vec3 start = Vec3(0.0, 0.0, 1.0);             // live human phase start pose (scene frame)
  double start_yaw = 0.0;
  bool realtime = true;                         // pace ticks against the wall clock
  std::filesystem::path out;                    // directory for logs, mission and metrics; empty = none
  std::size_t max_map_cells = 20000;            // per map_delta message
};

struct TickStats {
  std::uint64_t ticks = 0;
  double mean_period = 0.0;  // s, over the paced ticks
  double max_lateness = 0.0; // s behind schedule
};

enum class Phase { Idle, Human, Ready, Autonomous, Done };
const char* to_string(Phase p);

/// Simulation owner plus a WebSocket endpoint. The simulation runs on its own
/// thread; client I/O runs on another. They exchange messages through queues
/// only: joystick and control messages flow in, state (latest wins), map
/// deltas (latest wins) and events, snapshots, points and metrics (queued)
/// flow out.
class Gateway {
 public:
  explicit Gateway(GatewayConfig config);
  ~Gateway();
  Gateway(const Gateway&) = delete;
  Gateway& operator=(const Gateway&) = delete;

  /// Binds the endpoint and starts both threads; returns the bound port.
  /// Throws std::runtime_error when the port cannot be bound.
  unsigned short start();
  /// Stops the simulation and closes all connections.
  void stop();
  /// Blocks until the simulation thread finishes (headless scripted runs) or stop() is called.
  void wait();
  /// True once the simulation thread has exited.
  bool finished() const;

  Phase phase() const { return phase_.load(); }
  TickStats tick_stats() const;
  /// Logs of finished phases, in order.
  std::vector<mission::MissionLog> logs() const;
  std::optional<mission::Mission> mission() const;
  std::size_t clients() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  std::atomic<Phase> phase_{Phase::Idle};
};

}  // namespace insp::gateway
