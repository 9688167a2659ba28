// Regenerates the bundled mission and log fixtures under a data directory.
#include <CLI11.hpp>

#include <iostream>

#include "insp/session.hpp"

namespace fs = std::filesystem;
using namespace insp;

namespace {

mission::MissionLog constant_speed_log() {
  mission::MissionLog log;
  log.phase = "human";
  log.scene_id = "fixture";
  const double rate = 20.0, speed = 2.0, duration = 60.0;
  const int n = int(duration * rate);
  for (int i = 0; i <= n; ++i) {
    mission::TrajectorySample s;
    s.t = i / rate;
    s.position = Vec3(speed * s.t, 0.0, 1.0);
    s.velocity = Vec3(speed, 0.0, 0.0);
    s.speed = speed;
    s.truth = s.position;
    log.samples.push_back(s);
  }
  return log;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fixture generator"};
  std::string data = INSP_DATA_DIR;
  app.add_option("--data", data, "Data directory");
  CLI11_PARSE(app, argc, argv);

  try {
    const fs::path root(data);
    const auto script = session::load_script(root / "scripts" / "single_point.json");
    const auto scene = sim::load_scene(root / "scripts" / script.scene);
    auto human = session::run_human(scene, script, session::desk_config(0));

    fs::create_directories(root / "missions");
    auto single = human.mission;
    session::optimize_mission(single);
    mission::save_mission(single, root / "missions" / "single_point.json");

    // Unit-square corners recorded in crossing order, world frame.
    auto square = human.mission;
    const std::vector<Vec3> corners{Vec3(0.25, 0.25, 0.25), Vec3(1.25, 1.25, 0.25), Vec3(1.25, 0.25, 0.25),
                                    Vec3(0.25, 1.25, 0.25)};
    square.points.clear();
    for (std::size_t i = 0; i < corners.size(); ++i) square.points.push_back({corners[i], 0.0, 0.0, int(i)});
    square.order.clear();
    square.validate();
    mission::save_mission(square, root / "missions" / "crossing_square.json");

    fs::create_directories(root / "logs");
    mission::save_log(constant_speed_log(), root / "logs" / "constant_speed.jsonl");
    std::cout << "fixtures written to " << root << '\n';
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
