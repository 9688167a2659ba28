#include "insp/cli.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <csignal>
#include <fstream>
#include <iostream>
#include <thread>

#include "insp/gateway.hpp"
#include "insp/session.hpp"

namespace insp::cli {

namespace fs = std::filesystem;

namespace {

struct Common {
  std::string scene;
  std::uint64_t seed = 0;
  double tick_rate = 100.0;
  std::string out;
};

void add_common(CLI::App& cmd, Common& c) {
  cmd.add_option("--seed", c.seed, "Random seed");
  cmd.add_option("--tick-rate", c.tick_rate, "Simulation tick rate in Hz")->check(CLI::PositiveNumber);
  cmd.add_option("--out", c.out, "Output directory");
}

session::SessionConfig make_config(const Common& c) {
  auto cfg = session::desk_config(c.seed);
  cfg.tick_rate = c.tick_rate;
  cfg.validate();
  return cfg;
}

fs::path resolve_scene(const std::string& flag, const session::PilotScript* script, const fs::path& script_path) {
  if (!flag.empty()) return flag;
  if (script && !script->scene.empty()) {
    fs::path p = script->scene;
    return p.is_absolute() ? p : script_path.parent_path() / p;
  }
  throw std::runtime_error("no scene given (use --scene)");
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << text;
}

fs::path out_dir(const Common& c) {
  fs::path dir = c.out.empty() ? fs::path(".") : fs::path(c.out);
  fs::create_directories(dir);
  return dir;
}

void print_report(std::ostream& out, const sequencer::OptimizationResult& r, const mission::Mission& m) {
  out << fmt::format("recorded cost  {:.3f} m\n", r.recorded_cost);
  out << fmt::format("optimized cost {:.3f} m\n", r.optimized_cost);
  out << fmt::format("reduction      {:.1f} %\n", 100.0 * r.reduction);
  out << "order         ";
  for (int i : m.order) out << ' ' << i;
  out << '\n';
  if (!r.unreachable_points.empty()) {
    out << "unreachable   ";
    for (int i : r.unreachable_points) out << ' ' << i;
    out << '\n';
  }
}

std::atomic<bool> g_interrupted{false};
extern "C" void on_signal(int) { g_interrupted.store(true); }

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Inspection mission simulator"};
  app.require_subcommand(1);

  Common serve_c, scripted_c, replay_c;
  std::string serve_mission, serve_script, serve_endpoint;
  bool serve_fast = false;
  auto* serve = app.add_subcommand("serve", "Run a live session with a WebSocket endpoint");
  serve->add_option("--scene", serve_c.scene, "Scene file");
  serve->add_option("--mission", serve_mission, "Optimized mission to preload");
  serve->add_option("--script", serve_script, "Pilot script; runs the whole workflow unattended");
  serve->add_option("--endpoint", serve_endpoint, "host:port (default from INSP_ENDPOINT, else 127.0.0.1:8765)");
  serve->add_flag("--fast", serve_fast, "Do not pace ticks against the wall clock");
  add_common(*serve, serve_c);

  std::string scripted_script;
  auto* scripted = app.add_subcommand("run-scripted", "Headless human phase driven by a pilot script");
  scripted->add_option("--script", scripted_script, "Pilot script")->required();
  scripted->add_option("--scene", scripted_c.scene, "Scene file (default: the script's scene)");
  add_common(*scripted, scripted_c);

  std::string opt_mission, opt_out;
  auto* optimize = app.add_subcommand("optimize", "Order a mission's inspection points");
  optimize->add_option("--mission", opt_mission, "Mission file")->required();
  optimize->add_option("--out", opt_out, "Optimized mission file (default: overwrite input)");

  std::string replay_mission;
  std::optional<std::vector<double>> replay_start;
  double replay_yaw = 0.0;
  bool replay_yaw_set = false;
  auto* replay = app.add_subcommand("replay", "Headless autonomous phase for an optimized mission");
  replay->add_option("--mission", replay_mission, "Mission file")->required();
  replay->add_option("--scene", replay_c.scene, "Scene file")->required();
  replay->add_option("--start", replay_start, "Start position x y z in the scene frame")->expected(3);
  auto* yaw_opt = replay->add_option("--start-yaw", replay_yaw, "Start heading in rad");
  add_common(*replay, replay_c);

  std::vector<std::string> metrics_logs;
  bool metrics_line_only = false;
  auto* metrics = app.add_subcommand("metrics", "Flight metrics of one or more mission logs");
  metrics->add_option("logs", metrics_logs, "Log files (.jsonl)")->required()->check(CLI::ExistingFile);
  metrics->add_flag("--line", metrics_line_only, "Print one plain line per log instead of a table");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }
  replay_yaw_set = yaw_opt->count() > 0;

  try {
    if (*serve) {
      gateway::GatewayConfig g;
      g.session = make_config(serve_c);
      std::optional<session::PilotScript> script;
      if (!serve_script.empty()) {
        script = session::load_script(serve_script);
        g.script = script;
      }
      g.scene = sim::load_scene(resolve_scene(serve_c.scene, script ? &*script : nullptr, serve_script));
      if (!serve_mission.empty()) g.mission = mission::load_mission(serve_mission);
      g.endpoint = serve_endpoint.empty() ? gateway::endpoint_from_env() : gateway::parse_endpoint(serve_endpoint);
      g.realtime = !serve_fast;
      if (!serve_c.out.empty()) g.out = serve_c.out;
      gateway::Gateway gw(std::move(g));
      const auto port = gw.start();
      out << "listening on port " << port << std::endl;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      while (!gw.finished() && !g_interrupted.load()) std::this_thread::sleep_for(std::chrono::milliseconds(50));
      gw.stop();
      for (const auto& log : gw.logs()) {
        if (log.samples.size() >= 2)
          out << log.phase << ": " << mission::metrics_line(mission::compute_metrics(log)) << '\n';
      }
      return 0;
    }

    if (*scripted) {
      const auto script = session::load_script(scripted_script);
      const auto scene = sim::load_scene(resolve_scene(scripted_c.scene, &script, scripted_script));
      const auto cfg = make_config(scripted_c);
      auto r = session::run_human(scene, script, cfg);
      const auto dir = out_dir(scripted_c);
      mission::save_log(r.log, dir / "human.jsonl");
      mission::save_mission(r.mission, dir / "mission.json");
      out << fmt::format("recorded {} points, {} samples, {} collisions\n", r.mission.points.size(),
                         r.log.samples.size(), r.stats.collision_samples);
      if (!r.skipped_waypoints.empty()) out << "skipped waypoints: " << r.skipped_waypoints.size() << '\n';
      if (r.log.samples.size() >= 2)
        write_text(dir / "metrics.md", mission::metrics_table({{"Human-in-the-loop", mission::compute_metrics(r.log)}}));
      return r.mission.points.empty() ? 3 : 0;
    }

    if (*optimize) {
      auto m = mission::load_mission(opt_mission);
      const auto r = session::optimize_mission(m);
      const fs::path dest = opt_out.empty() ? fs::path(opt_mission) : fs::path(opt_out);
      if (dest.has_parent_path()) fs::create_directories(dest.parent_path());
      mission::save_mission(m, dest);
      print_report(out, r, m);
      return 0;
    }

    if (*replay) {
      auto m = mission::load_mission(replay_mission);
      if (!m.optimized()) session::optimize_mission(m);
      const auto scene = sim::load_scene(replay_c.scene);
      const auto cfg = make_config(replay_c);
      const Vec3 start = replay_start ? Vec3((*replay_start)[0], (*replay_start)[1], (*replay_start)[2]) : m.p_init;
      const double yaw = replay_yaw_set ? replay_yaw : m.init_yaw;
      auto r = session::run_autonomous(scene, m, start, yaw, cfg);
      const auto dir = out_dir(replay_c);
      mission::save_log(r.log, dir / "autonomous.jsonl");
      out << fmt::format("relocalized {}, reached {}, abandoned {}\n", r.relocalized ? "yes" : "no", r.reached.size(),
                         r.abandoned.size());
      if (r.log.samples.size() >= 2) {
        const auto table = mission::metrics_table({{"Autonomous", mission::compute_metrics(r.log)}});
        write_text(dir / "metrics.md", table);
        out << table;
      }
      return r.relocalized ? 0 : 4;
    }

    if (*metrics) {
      std::vector<std::pair<std::string, mission::Metrics>> rows;
      for (const auto& p : metrics_logs) {
        const auto log = mission::load_log(p);
        const auto mt = mission::compute_metrics(log);
        if (metrics_line_only) out << mission::metrics_line(mt) << '\n';
        rows.emplace_back(log.phase == "autonomous" ? "Autonomous" : "Human-in-the-loop", mt);
      }
      if (!metrics_line_only) out << mission::metrics_table(rows);
      return 0;
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}

}  // namespace insp::cli
