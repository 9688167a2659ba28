#include "insp/gateway.hpp"

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include <cstdlib>
#include <deque>
#include <fstream>
#include <mutex>
#include <thread>
#include <unordered_set>

#include "insp/protocol.hpp"

namespace insp::gateway {

namespace beast = boost::beast;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;
using Clock = std::chrono::steady_clock;

Endpoint parse_endpoint(const std::string& text) {
  const auto colon = text.rfind(':');
  if (colon == std::string::npos) throw std::invalid_argument("endpoint must be host:port, got '" + text + "'");
  Endpoint e;
  if (colon > 0) e.host = text.substr(0, colon);
  const std::string port = text.substr(colon + 1);
  char* end = nullptr;
  const long v = std::strtol(port.c_str(), &end, 10);
  if (port.empty() || *end != '\0' || v < 0 || v > 65535) throw std::invalid_argument("bad port in '" + text + "'");
  e.port = static_cast<unsigned short>(v);
  return e;
}

Endpoint endpoint_from_env(const Endpoint& fallback) {
  const char* v = std::getenv("INSP_ENDPOINT");
  return (v && *v) ? parse_endpoint(v) : fallback;
}

const char* to_string(Phase p) {
  switch (p) {
    case Phase::Idle: return "idle";
    case Phase::Human: return "human";
    case Phase::Ready: return "ready";
    case Phase::Autonomous: return "autonomous";
    case Phase::Done: return "done";
  }
  return "?";
}

namespace {

class Client;

/// What a client connection needs from its owner.
class ClientSink {
 public:
  virtual ~ClientSink() = default;
  virtual void on_message(const std::shared_ptr<Client>& c, const std::string& text) = 0;
  virtual void on_closed(const std::shared_ptr<Client>& c) = 0;
};

class Client : public std::enable_shared_from_this<Client> {
 public:
  Client(tcp::socket socket, ClientSink& sink) : ws_(std::move(socket)), sink_(sink) {}

  void run() {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.async_accept([self = shared_from_this()](beast::error_code ec) {
      if (ec) return self->close();
      self->read();
      self->pump();
    });
  }

  // Producer side, any thread.
  void push_reliable(std::string msg) {
    {
      std::lock_guard lock(mu_);
      reliable_.push_back(std::move(msg));
    }
    schedule();
  }
  void set_state(std::string msg) {
    {
      std::lock_guard lock(mu_);
      state_ = std::move(msg);
    }
    schedule();
  }
  void set_map(std::string msg) {
    {
      std::lock_guard lock(mu_);
      map_ = std::move(msg);
    }
    schedule();
  }
  void shutdown() {
    net::post(ws_.get_executor(), [self = shared_from_this()] {
      beast::error_code ec;
      beast::get_lowest_layer(self->ws_).socket().close(ec);
    });
  }

 private:
  void schedule() { net::post(ws_.get_executor(), [self = shared_from_this()] { self->pump(); }); }

  void read() {
    ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) return self->close();
      std::string text = beast::buffers_to_string(self->buffer_.data());
      self->buffer_.consume(self->buffer_.size());
      self->sink_.on_message(self, text);
      self->read();
    });
  }

  // I/O thread only.
  void pump() {
    if (writing_ || closed_ || !ws_.is_open()) return;
    {
      std::lock_guard lock(mu_);
      if (!reliable_.empty()) {
        current_ = std::move(reliable_.front());
        reliable_.pop_front();
      } else if (state_) {
        current_ = std::move(*state_);
        state_.reset();
      } else if (map_) {
        current_ = std::move(*map_);
        map_.reset();
      } else {
        return;
      }
    }
    writing_ = true;
    ws_.text(true);
    ws_.async_write(net::buffer(current_), [self = shared_from_this()](beast::error_code ec, std::size_t) {
      self->writing_ = false;
      if (ec) return self->close();
      self->pump();
    });
  }

  void close() {
    if (closed_) return;
    closed_ = true;
    sink_.on_closed(shared_from_this());
  }

  websocket::stream<beast::tcp_stream> ws_;
  ClientSink& sink_;
  beast::flat_buffer buffer_;
  std::mutex mu_;
  std::deque<std::string> reliable_;
  std::optional<std::string> state_;
  std::optional<std::string> map_;
  std::string current_;
  bool writing_ = false;
  bool closed_ = false;
};

}  // namespace

struct Gateway::Impl : ClientSink {
  Gateway& self;
  GatewayConfig config;
  net::io_context ioc;
  tcp::acceptor acceptor{ioc};
  std::thread io_thread;
  std::thread sim_thread;
  std::atomic<bool> stopping{false};
  std::atomic<bool> sim_done{false};

  mutable std::mutex clients_mu;
  std::vector<std::shared_ptr<Client>> clients;

  std::mutex inbox_mu;
  std::deque<protocol::ClientMessage> inbox;

  mutable std::mutex results_mu;
  std::vector<mission::MissionLog> logs;
  std::optional<mission::Mission> mission;
  std::optional<mission::Metrics> human_metrics;

  mutable std::mutex stats_mu;
  TickStats stats;
  Clock::time_point run_start{};
  Clock::time_point first_tick{};
  std::uint64_t paced = 0;

  // Simulation-thread state.
  planning::JoystickCommand joystick;
  bool pending_record = false;
  bool end_human = false;
  std::optional<protocol::StartAutonomousMsg> auto_request;
  std::unordered_set<Cell, CellHash, CellEqual> pending_cells;
  const nav::Navigator* live_nav = nullptr;
  double next_map_t = 0.0;
  std::vector<mission::InspectionPoint> live_points;
  std::string phase_name = "idle";

  Impl(Gateway& g, GatewayConfig c) : self(g), config(std::move(c)) {}

  // ---------------------------------------------------------------- I/O side

  void accept() {
    acceptor.async_accept([this](beast::error_code ec, tcp::socket socket) {
      if (ec) return;
      auto c = std::make_shared<Client>(std::move(socket), *this);
      {
        std::lock_guard lock(clients_mu);
        clients.push_back(c);
      }
      c->run();
      accept();
    });
  }

  void on_message(const std::shared_ptr<Client>& c, const std::string& text) override {
    try {
      auto msg = protocol::parse_client(text);
      std::lock_guard lock(inbox_mu);
      inbox.push_back(std::move(msg));
    } catch (const protocol::ProtocolError& e) {
      c->push_reliable(protocol::encode_error(e.what()));
    }
  }

  void on_closed(const std::shared_ptr<Client>& c) override {
    {
      std::lock_guard lock(clients_mu);
      clients.erase(std::remove(clients.begin(), clients.end(), c), clients.end());
    }
    // Failsafe: a vanished pilot leaves the sticks centred.
    std::lock_guard lock(inbox_mu);
    inbox.push_back(protocol::JoystickMsg{});
  }

  template <class F>
  void each_client(F&& f) {
    std::vector<std::shared_ptr<Client>> snapshot;
    {
      std::lock_guard lock(clients_mu);
      snapshot = clients;
    }
    for (auto& c : snapshot) f(*c);
  }
  void broadcast_reliable(const std::string& m) {
    each_client([&](Client& c) { c.push_reliable(m); });
  }
  void broadcast_state(const std::string& m) {
    each_client([&](Client& c) { c.set_state(m); });
  }
  void broadcast_map(const std::string& m) {
    each_client([&](Client& c) { c.set_map(m); });
  }
  void error(const std::string& m) { broadcast_reliable(protocol::encode_error(m)); }

  // ---------------------------------------------------------------- simulation side

  void set_phase(Phase p) {
    self.phase_.store(p);
    phase_name = to_string(p);
  }

  std::deque<protocol::ClientMessage> take_inbox() {
    std::lock_guard lock(inbox_mu);
    std::deque<protocol::ClientMessage> out;
    out.swap(inbox);
    return out;
  }

  void pace(double t) {
    if (!config.realtime) return;
    const auto now = Clock::now();
    if (paced == 0) {
      run_start = now - std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(t));
      first_tick = now;
    }
    const auto due = run_start + std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(t));
    {
      std::lock_guard lock(stats_mu);
      ++paced;
      stats.ticks = paced;
      const double late = std::chrono::duration<double>(now - due).count();
      stats.max_lateness = std::max(stats.max_lateness, late);
      if (paced > 1) stats.mean_period = std::chrono::duration<double>(now - first_tick).count() / double(paced - 1);
    }
    if (now < due) std::this_thread::sleep_until(due);
  }

  void publish_map(double t) {
    if (!live_nav || t + 1e-9 < next_map_t) return;
    next_map_t = t + 1.0 / config.session.map_rate;
    if (pending_cells.empty()) return;
    protocol::MapDeltaMsg m;
    m.resolution = live_nav->config().map.resolution;
    const auto& inf = live_nav->map().inflated();
    std::vector<Cell> cells(pending_cells.begin(), pending_cells.end());
    std::sort(cells.begin(), cells.end(), cell_less);
    std::size_t taken = 0;
    for (const auto& c : cells) {
      if (taken >= config.max_map_cells) break;
      pending_cells.erase(c);
      ++taken;
      if (inf.in_bounds(c)) m.cells.emplace_back(c, inf.state(c));
    }
    broadcast_map(protocol::encode_map_delta(m));
  }

  session::SessionHooks hooks() {
    session::SessionHooks h;
    h.on_sample = [this](const mission::TrajectorySample& s) {
      broadcast_state(protocol::encode_state({phase_name, s}));
    };
    h.on_event = [this](const mission::Event& e) { broadcast_reliable(protocol::encode_event(e)); };
    h.on_snapshot = [this](const mission::Snapshot& s) { broadcast_reliable(protocol::encode_snapshot(s)); };
    h.on_point = [this](const mission::InspectionPoint& q) {
      live_points.push_back(q);
      broadcast_reliable(protocol::encode_points({live_points, {}, std::nullopt, std::nullopt}));
    };
    h.on_map = [this](const mapping::MapUpdate& u, const nav::Navigator& nav) {
      live_nav = &nav;
      for (const auto& c : u.inflation_changes) pending_cells.insert(c);
    };
    return h;
  }

  void save_log(const mission::MissionLog& log) {
    {
      std::lock_guard lock(results_mu);
      logs.push_back(log);
    }
    if (!config.out.empty()) {
      std::filesystem::create_directories(config.out);
      mission::save_log(log, config.out / (log.phase + ".jsonl"));
    }
  }

  void publish_metrics(const std::optional<mission::Metrics>& autonomous) {
    std::vector<std::pair<std::string, mission::Metrics>> rows;
    if (human_metrics) rows.emplace_back("Human-in-the-loop", *human_metrics);
    if (autonomous) rows.emplace_back("Autonomous", *autonomous);
    if (rows.empty()) return;
    broadcast_reliable(protocol::encode_metrics(rows));
    if (!config.out.empty()) {
      std::ofstream out(config.out / "metrics.md");
      out << mission::metrics_table(rows);
    }
  }

  bool optimize(mission::Mission& m) {
    try {
      const auto r = session::optimize_mission(m);
      broadcast_reliable(protocol::encode_points({m.points, m.order, r.recorded_cost, r.optimized_cost}));
      if (!config.out.empty()) {
        std::filesystem::create_directories(config.out);
        mission::save_mission(m, config.out / "mission.json");
      }
      std::lock_guard lock(results_mu);
      mission = m;
      return true;
    } catch (const std::exception& e) {
      error(std::string("optimization failed: ") + e.what());
      return false;
    }
  }

  void run_human_phase(bool scripted) {
    set_phase(Phase::Human);
    live_points.clear();
    end_human = false;
    joystick = {};
    pending_record = false;
    auto h = hooks();
    session::PilotScript script;
    if (scripted) {
      script = *config.script;
    } else {
      script.start = config.start;
      script.start_yaw = config.start_yaw;
      h.joystick = [this](double) {
        auto cmd = joystick;
        cmd.record_pressed = cmd.record_pressed || pending_record;
        pending_record = false;
        return std::optional<planning::JoystickCommand>(cmd);
      };
    }
    h.keep_running = [this](double t) {
      for (auto& msg : take_inbox()) handle_in_human(msg);
      publish_map(t);
      pace(t);
      return !stopping.load() && !end_human;
    };
    next_map_t = 0.0;
    auto result = session::run_human(config.scene, script, config.session, h);
    live_nav = nullptr;
    pending_cells.clear();
    save_log(result.log);
    human_metrics = mission::compute_metrics(result.log);
    publish_metrics(std::nullopt);
    if (stopping.load()) return;
    if (result.mission.points.empty()) {
      error("human phase ended without inspection points");
      set_phase(Phase::Idle);
      return;
    }
    set_phase(optimize(result.mission) ? Phase::Ready : Phase::Idle);
  }

  void handle_in_human(const protocol::ClientMessage& msg) {
    if (auto* j = std::get_if<protocol::JoystickMsg>(&msg)) {
      joystick = j->command;
    } else if (std::holds_alternative<protocol::RecordMsg>(msg)) {
      pending_record = true;
    } else if (auto* p = std::get_if<protocol::SetPhaseMsg>(&msg)) {
      if (p->phase == "optimize") {
        if (live_points.empty() && !config.script)
          error("record at least one inspection point before optimizing");
        else
          end_human = true;
      } else {
        error("already in the human phase");
      }
    } else if (std::holds_alternative<protocol::StartAutonomousMsg>(msg)) {
      error("optimize the mission before starting the autonomous phase");
    } else if (std::holds_alternative<protocol::LoadMissionMsg>(msg)) {
      error("end the human phase before loading a mission");
    }
  }

  void run_autonomous_phase(const protocol::StartAutonomousMsg& req) {
    std::optional<mission::Mission> m;
    {
      std::lock_guard lock(results_mu);
      m = mission;
    }
    if (!m) {
      error("no optimized mission loaded");
      return;
    }
    set_phase(Phase::Autonomous);
    Vec3 start = req.start.value_or(m->p_init);
    double yaw = req.yaw.value_or(m->init_yaw);
    auto h = hooks();
    h.keep_running = [this](double t) {
      for (auto& msg : take_inbox()) {
        if (std::holds_alternative<protocol::JoystickMsg>(msg) || std::holds_alternative<protocol::RecordMsg>(msg))
          continue;  // no human override during the autonomous phase
        error("autonomous phase in progress");
      }
      publish_map(t);
      pace(t);
      return !stopping.load();
    };
    next_map_t = 0.0;
    try {
      auto result = session::run_autonomous(config.scene, *m, start, yaw, config.session, h);
      live_nav = nullptr;
      pending_cells.clear();
      save_log(result.log);
      publish_metrics(result.log.samples.size() >= 2 ? std::optional(mission::compute_metrics(result.log))
                                                     : std::nullopt);
    } catch (const std::exception& e) {
      live_nav = nullptr;
      error(std::string("autonomous phase failed: ") + e.what());
    }
    set_phase(Phase::Done);
  }

  void idle_loop() {
    while (!stopping.load()) {
      for (auto& msg : take_inbox()) {
        if (std::holds_alternative<protocol::JoystickMsg>(msg) || std::holds_alternative<protocol::RecordMsg>(msg))
          continue;
        if (auto* p = std::get_if<protocol::SetPhaseMsg>(&msg)) {
          if (p->phase == "human") return run_human_phase(false);
          error("nothing to optimize: start a human phase first");
        } else if (auto* s = std::get_if<protocol::StartAutonomousMsg>(&msg)) {
          return run_autonomous_phase(*s);
        } else if (auto* l = std::get_if<protocol::LoadMissionMsg>(&msg)) {
          try {
            auto m = mission::load_mission(l->path);
            if (!m.optimized()) session::optimize_mission(m);
            broadcast_reliable(protocol::encode_points({m.points, m.order, std::nullopt, std::nullopt}));
            std::lock_guard lock(results_mu);
            mission = std::move(m);
            set_phase(Phase::Ready);
          } catch (const std::exception& e) {
            error(std::string("cannot load mission: ") + e.what());
          }
        }
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
  }

  void sim_main() {
    try {
      if (config.mission) {
        mission = config.mission;
        set_phase(Phase::Ready);
      }
      if (config.script) {
        // Unattended workflow: scripted human phase, optimization, autonomous phase.
        run_human_phase(true);
        if (!stopping.load() && self.phase() == Phase::Ready) {
          protocol::StartAutonomousMsg req;
          req.start = config.script->autonomous_start.value_or(config.script->start);
          req.yaw = config.script->autonomous_start_yaw.value_or(config.script->start_yaw);
          run_autonomous_phase(req);
        }
      } else {
        if (!config.mission) run_human_phase(false);
        while (!stopping.load()) idle_loop();
      }
    } catch (const std::exception& e) {
      error(std::string("session aborted: ") + e.what());
    }
    sim_done.store(true);
  }
};

Gateway::Gateway(GatewayConfig config) : impl_(std::make_unique<Impl>(*this, std::move(config))) {
  impl_->config.session.validate();
}

Gateway::~Gateway() { stop(); }

unsigned short Gateway::start() {
  auto& im = *impl_;
  beast::error_code ec;
  const auto address = net::ip::make_address(im.config.endpoint.host, ec);
  if (ec) throw std::runtime_error("bad gateway host '" + im.config.endpoint.host + "': " + ec.message());
  const tcp::endpoint ep(address, im.config.endpoint.port);
  im.acceptor.open(ep.protocol(), ec);
  if (!ec) im.acceptor.set_option(net::socket_base::reuse_address(true), ec);
  if (!ec) im.acceptor.bind(ep, ec);
  if (!ec) im.acceptor.listen(net::socket_base::max_listen_connections, ec);
  if (ec) {
    throw std::runtime_error("cannot bind " + im.config.endpoint.host + ":" +
                             std::to_string(im.config.endpoint.port) + ": " + ec.message());
  }
  const unsigned short port = im.acceptor.local_endpoint().port();
  im.accept();
  im.io_thread = std::thread([&im] {
    auto guard = net::make_work_guard(im.ioc);
    im.ioc.run();
  });
  im.sim_thread = std::thread([&im] { im.sim_main(); });
  return port;
}

void Gateway::stop() {
  if (!impl_) return;
  auto& im = *impl_;
  im.stopping.store(true);
  if (im.sim_thread.joinable()) im.sim_thread.join();
  net::post(im.ioc, [&im] {
    beast::error_code ec;
    im.acceptor.close(ec);
  });
  im.each_client([](Client& c) { c.shutdown(); });
  // Let queued writes and closes drain briefly before stopping the loop.
  std::this_thread::sleep_for(std::chrono::milliseconds(20));
  im.ioc.stop();
  if (im.io_thread.joinable()) im.io_thread.join();
}

void Gateway::wait() {
  while (!impl_->sim_done.load()) std::this_thread::sleep_for(std::chrono::milliseconds(20));
}

bool Gateway::finished() const { return impl_->sim_done.load(); }

TickStats Gateway::tick_stats() const {
  std::lock_guard lock(impl_->stats_mu);
  return impl_->stats;
}

std::vector<mission::MissionLog> Gateway::logs() const {
  std::lock_guard lock(impl_->results_mu);
  return impl_->logs;
}

std::optional<mission::Mission> Gateway::mission() const {
  std::lock_guard lock(impl_->results_mu);
  return impl_->mission;
}

std::size_t Gateway::clients() const {
  std::lock_guard lock(impl_->clients_mu);
  return impl_->clients.size();
}

}  // namespace insp::gateway
