#include "insp/session.hpp"

#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "insp/json_util.hpp"

namespace insp::session {

using json = nlohmann::json;
using json_util::to_json;
using json_util::vec3_from;
using mission::Event;
using mission::MissionLog;
namespace ev = mission::event;

int SessionConfig::ticks_per(double rate) const {
  if (!(rate > 0.0)) throw SessionError("rates must be positive");
  const double ratio = tick_rate / rate;
  const long n = std::lround(ratio);
  if (n < 1 || std::abs(ratio - double(n)) > 1e-9)
    throw SessionError("tick rate " + std::to_string(tick_rate) + " Hz is not a whole multiple of " +
                       std::to_string(rate) + " Hz");
  return static_cast<int>(n);
}

void SessionConfig::validate() const {
  if (!(tick_rate > 0.0)) throw SessionError("tick rate must be positive");
  if (!sensor.valid()) throw SessionError("invalid sensor configuration");
  if (!limits.valid()) throw SessionError("invalid vehicle limits");
  ticks_per(sensor.frame_rate);
  ticks_per(control_rate);
  ticks_per(planner_rate);
  ticks_per(log_rate);
  ticks_per(map_rate);
  if (!(max_duration > anchor.accumulation_time)) throw SessionError("max duration shorter than anchor accumulation");
  if (!(local_goal_horizon > 0.0)) throw SessionError("local goal horizon must be positive");
}

SessionConfig desk_config(std::uint64_t seed) {
  SessionConfig c;
  c.seed = seed;
  c.sensor.v_min_deg = -90.0;
  c.sensor.v_max_deg = 90.0;
  c.sensor.rays_per_frame = 600;
  c.sensor.max_range = 20.0;
  c.nav.map.window_size = 100;
  c.nav.map.carve_cap = 10.0;
  c.nav.map.global_extent = 100.0;
  return c;
}

// ---------------------------------------------------------------- scripts

PilotScript parse_script(const std::string& text) {
  PilotScript s;
  try {
    const json j = json::parse(text);
    if (j.value("format", std::string{}) != "insp-script") throw SessionError("not a pilot script");
    if (j.at("version").get<int>() != 1) throw SessionError("unsupported pilot script version");
    s.scene = j.value("scene", std::string{});
    s.start = vec3_from(j.at("start"));
    s.start_yaw = j.value("start_yaw", 0.0);
    for (const auto& w : j.at("waypoints")) {
      ScriptWaypoint wp;
      wp.position = vec3_from(w.at("position"));
      wp.record = w.value("record", false);
      if (w.contains("yaw")) wp.yaw = w.at("yaw").get<double>();
      if (w.contains("gimbal_pitch")) wp.gimbal_pitch = w.at("gimbal_pitch").get<double>();
      s.waypoints.push_back(wp);
    }
    if (j.contains("autonomous_start")) s.autonomous_start = vec3_from(j.at("autonomous_start"));
    if (j.contains("autonomous_start_yaw")) s.autonomous_start_yaw = j.at("autonomous_start_yaw").get<double>();
  } catch (const json::exception& e) {
    throw SessionError(std::string("malformed pilot script: ") + e.what());
  }
  return s;
}

PilotScript load_script(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw SessionError("cannot open pilot script " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_script(ss.str());
}

std::string dump_script(const PilotScript& s) {
  json wps = json::array();
  for (const auto& w : s.waypoints) {
    json o{{"position", to_json(w.position)}, {"record", w.record}};
    if (w.yaw) o["yaw"] = *w.yaw;
    if (w.gimbal_pitch) o["gimbal_pitch"] = *w.gimbal_pitch;
    wps.push_back(o);
  }
  json j{{"format", "insp-script"}, {"version", 1},        {"scene", s.scene},
         {"start", to_json(s.start)}, {"start_yaw", s.start_yaw}, {"waypoints", wps}};
  if (s.autonomous_start) j["autonomous_start"] = to_json(*s.autonomous_start);
  if (s.autonomous_start_yaw) j["autonomous_start_yaw"] = *s.autonomous_start_yaw;
  return j.dump(2);
}

// ---------------------------------------------------------------- pilot

ScriptedPilot::ScriptedPilot(PilotScript script, Config config) : script_(std::move(script)), config_(config) {}

planning::JoystickCommand ScriptedPilot::next(const sim::QuadState& truth, const sim::QuadLimits& limits,
                                              std::vector<int>* skipped) {
  planning::JoystickCommand cmd;
  if (done()) return cmd;
  if (!started_) {
    started_ = true;
    waypoint_start_ = truth.time;
  }
  const auto& wp = script_.waypoints[index_];
  auto advance = [&] {
    ++index_;
    waypoint_start_ = truth.time;
    settled_since_.reset();
  };
  if (truth.time - waypoint_start_ > config_.waypoint_timeout) {
    if (skipped) skipped->push_back(static_cast<int>(index_));
    advance();
    return cmd;
  }
  const Vec3 err = wp.position - truth.position;
  const double tol = wp.record ? config_.record_tolerance : config_.pass_tolerance;
  if (err.norm() > tol && !settled_since_) {
    const Vec3 body = yaw_rotation(truth.yaw).transpose() * (err / config_.horizon);
    for (int a = 0; a < 3; ++a) cmd.axes[std::size_t(a)] = std::clamp(body[a], -1.0, 1.0);
    return cmd;
  }
  if (!wp.record) {
    advance();
    return cmd;
  }
  // Arrived: sticks centred, align the camera, wait for the vehicle to settle.
  if (!settled_since_) settled_since_ = truth.time;
  const double ey = wp.yaw ? wrap_angle(*wp.yaw - truth.yaw) : 0.0;
  const double eg = wp.gimbal_pitch ? *wp.gimbal_pitch - truth.gimbal_pitch : 0.0;
  cmd.axes[3] = std::clamp(config_.gain * ey, -1.0, 1.0);
  cmd.gimbal_axis = std::clamp(config_.gain * eg * limits.yaw_rate_max / limits.gimbal_rate_max, -1.0, 1.0);
  const bool aligned = std::abs(ey) <= config_.align_tolerance && std::abs(eg) <= config_.align_tolerance;
  if (truth.velocity.norm() >= config_.settle_speed || !aligned) settled_since_ = truth.time;
  if (truth.time - *settled_since_ >= config_.settle_time) {
    cmd = {};
    cmd.record_pressed = true;
    advance();
  }
  return cmd;
}

// ---------------------------------------------------------------- shared loop pieces

namespace {

/// Vehicle state expressed through a scene -> frame transform.
mission::WorldState express(const sim::QuadState& truth, const RigidTransform& frame_from_scene, const Vec3& noise) {
  mission::WorldState w;
  w.t = truth.time;
  w.position = frame_from_scene.apply(truth.position) + noise;
  w.velocity = frame_from_scene.rotate(truth.velocity);
  const Vec3 heading = frame_from_scene.rotate(Vec3(std::cos(truth.yaw), std::sin(truth.yaw), 0.0));
  w.yaw = wrap_angle(std::atan2(heading.y(), heading.x()));
  w.gimbal_pitch = truth.gimbal_pitch;
  return w;
}

sim::QuadState as_quad(const mission::WorldState& w) {
  sim::QuadState q;
  q.position = w.position;
  q.velocity = w.velocity;
  q.yaw = w.yaw;
  q.gimbal_pitch = w.gimbal_pitch;
  q.time = w.t;
  return q;
}

struct Loop {
  const sim::Scene& scene;
  const SessionConfig& cfg;
  const SessionHooks& hooks;
  MissionLog& log;
  SafetyStats& stats;
  double dt;
  int scan_every, control_every, planner_every, log_every;
  sim::QuadState truth;
  std::int64_t tick = 0;
  std::int64_t frame = 0;
  std::size_t events_seen = 0;
  std::size_t snapshots_seen = 0;
  bool last_feasible = true;
  Vec3 accel = Vec3::Zero();

  Loop(const sim::Scene& s, const SessionConfig& c, const SessionHooks& h, MissionLog& l, SafetyStats& st)
      : scene(s), cfg(c), hooks(h), log(l), stats(st), dt(1.0 / c.tick_rate) {
    scan_every = c.ticks_per(c.sensor.frame_rate);
    control_every = c.ticks_per(c.control_rate);
    planner_every = c.ticks_per(c.planner_rate);
    log_every = c.ticks_per(c.log_rate);
  }

  double now() const { return double(tick) * dt; }
  bool due(int every) const { return tick % every == 0; }

  double quiet_until = 0.0;  // stationary start: the estimator is at rest and exact

  Vec3 noise() const {
    if (cfg.odometry_noise <= 0.0 || now() < quiet_until) return Vec3::Zero();
    const auto o = lidar::sample_odometry(truth, cfg.odometry_noise, lidar::mix_seed(cfg.seed, std::uint64_t(tick)));
    return o.position - truth.position;
  }

  lidar::ScanFrame scan() {
    auto f = lidar::simulate_scan(scene, truth, cfg.sensor, frame);
    ++frame;
    return f;
  }

  void event(const mission::WorldState& s, const char* type, int index, const std::string& detail = "") {
    log.events.push_back({s.t, type, index, s.position, detail});
  }

  void flush() {
    for (; events_seen < log.events.size(); ++events_seen)
      if (hooks.on_event) hooks.on_event(log.events[events_seen]);
    for (; snapshots_seen < log.snapshots.size(); ++snapshots_seen)
      if (hooks.on_snapshot) hooks.on_snapshot(log.snapshots[snapshots_seen]);
  }

  void sample(const mission::WorldState& w) {
    if (!due(log_every)) return;
    mission::TrajectorySample s{w.t, w.position, w.velocity, w.yaw, w.gimbal_pitch, w.velocity.norm(),
                                truth.position};
    if (scene.inside_obstacle(truth.position)) ++stats.collision_samples;
    log.samples.push_back(s);
    if (hooks.on_sample) hooks.on_sample(s);
  }

  void control(nav::Navigator& nav, const mission::WorldState& w, const Mat3& scene_from_frame) {
    if (!due(control_every)) return;
    const auto out = nav.control(w.position, w.velocity);
    if (nav.has_plan()) {
      ++stats.mpc_solves;
      stats.stages_checked += out.stages_checked;
      stats.box_violations += std::size_t(out.box_violations);
      if (!out.feasible) {
        ++stats.mpc_infeasible;
        if (last_feasible) event(w, ev::kMpcInfeasible, -1);
      }
      last_feasible = out.feasible;
    }
    accel = scene_from_frame * out.accel;
  }

  void step(double yaw_rate, double gimbal_rate) {
    truth = sim::step_quad(truth, accel, yaw_rate, gimbal_rate, dt, cfg.limits);
    ++tick;
    truth.time = now();
    ++stats.ticks;
    if (scene.inside_obstacle(truth.position)) ++stats.collision_ticks;
  }

  bool keep_going() const {
    if (now() > cfg.max_duration) return false;
    return !hooks.keep_running || hooks.keep_running(now());
  }
};

}  // namespace

// ---------------------------------------------------------------- human phase

HumanResult run_human(const sim::Scene& scene, const PilotScript& script, const SessionConfig& config,
                      const SessionHooks& hooks) {
  config.validate();
  HumanResult result;
  auto& log = result.log;
  log.phase = "human";
  log.scene_id = scene.id;
  log.seed = config.seed;

  Loop loop(scene, config, hooks, log, result.stats);
  loop.truth.position = script.start;
  loop.truth.yaw = wrap_angle(script.start_yaw);

  const RigidTransform scene_from_world = RigidTransform::from_yaw(script.start_yaw, script.start);
  const RigidTransform world_from_scene = scene_from_world.inverse();

  auto world = [&] { return express(loop.truth, world_from_scene, loop.noise()); };
  nav::Navigator nav(config.nav, Vec3::Zero());
  ScriptedPilot pilot(script);
  mission::PointRecorder recorder;

  std::vector<lidar::ScanFrame> anchor_frames;
  const double accumulation = config.anchor.accumulation_time;
  loop.quiet_until = accumulation;
  std::optional<Vec3> hold;
  double last_plan = -1e9;
  double yaw_rate = 0.0, gimbal_rate = 0.0;
  bool record_was_down = false;
  std::optional<double> finished_at;

  loop.event(world(), ev::kPhase, -1, "human");
  while (loop.keep_going()) {
    const double t = loop.now();
    auto w = world();
    if (loop.due(loop.scan_every)) {
      auto f = loop.scan().transformed(world_from_scene);
      for (auto& p : f.returns) p += w.position - world_from_scene.apply(loop.truth.position);
      f.sensor_position = w.position;
      if (t < accumulation) anchor_frames.push_back(f);
      const auto update = nav.integrate(f, w.position);
      if (hooks.on_map) hooks.on_map(update, nav);
    }
    if (t >= accumulation && loop.due(loop.planner_every)) {
      std::optional<planning::JoystickCommand> live = hooks.joystick ? hooks.joystick(t) : std::nullopt;
      planning::JoystickCommand cmd;
      if (hooks.joystick) {
        cmd = live.value_or(planning::JoystickCommand{});
      } else {
        const std::size_t before = result.skipped_waypoints.size();
        cmd = pilot.next(loop.truth, config.limits, &result.skipped_waypoints);
        for (std::size_t i = before; i < result.skipped_waypoints.size(); ++i)
          loop.event(w, ev::kWaypointSkipped, result.skipped_waypoints[i]);
      }
      cmd = cmd.clamped();
      yaw_rate = cmd.axes[3] * config.limits.yaw_rate_max;
      gimbal_rate = cmd.gimbal_axis * config.limits.gimbal_rate_max;

      const bool moving = cmd.axes[0] != 0.0 || cmd.axes[1] != 0.0 || cmd.axes[2] != 0.0;
      Vec3 goal;
      if (moving) {
        hold.reset();
        goal = planning::compute_local_goal(cmd, as_quad(w), config.local_goal_horizon, config.limits.yaw_rate_max,
                                            1.0 / config.planner_rate)
                   .position;
      } else {
        if (!hold) hold = w.position;
        goal = *hold;
      }
      goal = nav.clamp_to_window(w.position, goal);
      if (!nav.traversable(goal)) {
        if (auto f = nav.nearest_free(goal)) goal = *f;
      }
      if (moving || !nav.has_plan() || nav.stale() || t - last_plan >= config.executor.replan_period) {
        nav.plan(w.position, goal);
        last_plan = t;
      }

      if (cmd.record_pressed && !record_was_down) {
        bool duplicate = false;
        const auto q = recorder.record(as_quad(w), &duplicate);
        if (duplicate) loop.event(w, ev::kDuplicatePoint, q.recorded_index);
        if (hooks.on_point) hooks.on_point(q);
        loop.event(w, ev::kPointRecorded, q.recorded_index);
        auto snap = mission::cast_snapshot(scene, loop.truth, q.recorded_index, config.camera);
        snap.position = w.position;
        snap.yaw = w.yaw;
        log.snapshots.push_back(std::move(snap));
        loop.event(w, ev::kSnapshot, q.recorded_index);
      }
      record_was_down = cmd.record_pressed;
      if (!hooks.joystick && pilot.done() && !finished_at) finished_at = t;
    }
    if (t >= accumulation) loop.control(nav, w, scene_from_world.rotation);
    loop.sample(w);
    loop.flush();
    if (finished_at && t - *finished_at >= 1.0) break;
    loop.step(t >= accumulation ? yaw_rate : 0.0, t >= accumulation ? gimbal_rate : 0.0);
  }
  nav.flush_global();
  loop.event(world(), ev::kLanded, -1);
  loop.flush();

  auto& m = result.mission;
  m.scene_id = scene.id;
  m.p_init = script.start;
  m.init_yaw = wrap_angle(script.start_yaw);
  auto anchor = reloc::accumulate_anchor(anchor_frames, accumulation, config.anchor);
  m.anchor = std::move(anchor.map);
  reloc::quantize(m.anchor);
  m.global = nav.global();
  m.points = recorder.points();
  m.config = config.mission;
  return result;
}

// ---------------------------------------------------------------- autonomous phase

AutonomousResult run_autonomous(const sim::Scene& scene, const mission::Mission& mission, const Vec3& start,
                                double start_yaw, const SessionConfig& config, const SessionHooks& hooks) {
  config.validate();
  if (!mission.optimized()) throw mission::MissionError("mission has not been optimized");
  if (mission.anchor.points.empty()) throw mission::MissionError("mission has no anchor map");
  AutonomousResult result;
  auto& log = result.log;
  log.phase = "autonomous";
  log.scene_id = scene.id;
  log.seed = config.seed;

  Loop loop(scene, config, hooks, log, result.stats);
  loop.truth.position = start;
  loop.truth.yaw = wrap_angle(start_yaw);

  const RigidTransform scene_from_odom = RigidTransform::from_yaw(start_yaw, start);
  const RigidTransform odom_from_scene = scene_from_odom.inverse();
  result.true_world_odom = RigidTransform::from_yaw(mission.init_yaw, mission.p_init).inverse() * scene_from_odom;

  // Until relocalization the vehicle only knows its odometry frame.
  RigidTransform world_from_scene = odom_from_scene;
  auto world = [&] { return express(loop.truth, world_from_scene, loop.noise()); };

  mission::ExecutorConfig ecfg = config.executor;
  ecfg.mission = mission.config;
  mission::Executor exec(mission, ecfg);
  std::optional<nav::Navigator> nav;
  std::vector<lidar::ScanFrame> odom_frames;
  const double accumulation = config.anchor.accumulation_time;
  loop.quiet_until = accumulation;
  std::optional<double> landed_at;

  loop.event(world(), ev::kPhase, -1, "autonomous");
  while (loop.keep_going()) {
    const double t = loop.now();
    auto w = world();

    if (!nav && t >= accumulation) {
      auto source = reloc::accumulate_anchor(odom_frames, accumulation, config.anchor);
      reloc::AnchorIndex index(mission.anchor);
      bool ok = false;
      std::string detail;
      try {
        result.reloc = reloc::relocalize(source.map.points, index, config.reloc);
        ok = result.reloc.accepted;
        detail = "residual " + std::to_string(result.reloc.error);
      } catch (const reloc::RelocError& e) {
        detail = e.what();
      }
      if (!ok) {
        exec.abort(w, log, ev::kRelocalizationFailed, detail);
        loop.sample(w);
        loop.flush();
        break;
      }
      result.relocalized = true;
      world_from_scene = result.reloc.transform * odom_from_scene;
      w = world();
      loop.event(w, ev::kRelocalized, -1, detail);
      nav.emplace(config.nav, w.position, mission.global);
      const RigidTransform world_from_odom = result.reloc.transform;
      for (const auto& f : odom_frames) nav->integrate(f.transformed(world_from_odom), w.position);
      exec.start(w, log);
    }

    if (loop.due(loop.scan_every)) {
      auto f = loop.scan();
      if (!nav) {
        odom_frames.push_back(f.transformed(odom_from_scene));
      } else {
        auto wf = f.transformed(world_from_scene);
        const Vec3 shift = w.position - world_from_scene.apply(loop.truth.position);
        for (auto& p : wf.returns) p += shift;
        wf.sensor_position = w.position;
        const auto update = nav->integrate(wf, w.position);
        if (hooks.on_map) hooks.on_map(update, *nav);
      }
    }

    control::RateCommand rates;
    if (nav) {
      if (loop.due(loop.planner_every) && !exec.landed()) {
        exec.update(w, *nav, log);
        if (exec.capture_requested()) {
          const auto& q = exec.current_point();
          mission::require_aligned(w.yaw, w.gimbal_pitch, q, mission.config.align_tolerance);
          auto snap = mission::cast_snapshot(scene, loop.truth, q.recorded_index, config.camera);
          snap.position = w.position;
          snap.yaw = w.yaw;
          log.snapshots.push_back(std::move(snap));
          exec.capture_done(w, log);
        }
      }
      if (exec.landed()) {
        if (!landed_at) landed_at = t;
        nav->clear_plan();
      }
      loop.control(*nav, w, world_from_scene.rotation.transpose());
      if (!exec.landed())
        rates = control::track_yaw_gimbal(w.yaw, w.gimbal_pitch, exec.yaw_target(), exec.gimbal_target(),
                                          config.limits, loop.dt);
    }
    loop.sample(w);
    loop.flush();
    if (landed_at && t - *landed_at >= 1.0) break;
    loop.step(rates.yaw_rate, rates.gimbal_rate);
  }
  loop.flush();
  result.reached = exec.reached();
  result.abandoned = exec.abandoned();
  return result;
}

sequencer::OptimizationResult optimize_mission(mission::Mission& mission) {
  if (!mission.global) throw mission::MissionError("mission has no global map to plan the tour on");
  auto r = sequencer::optimize_points(mission.points, *mission.global);
  mission.order = r.tour.order;
  mission.validate();
  return r;
}

}  // namespace insp::session
