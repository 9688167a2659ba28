#include <doctest.h>

#include <sstream>

#include "insp/cli.hpp"
#include "insp/mission.hpp"

using namespace insp;
namespace fs = std::filesystem;

namespace {

const fs::path kData = INSP_DATA_DIR;

struct Run {
  int code;
  std::string out, err;
};

Run invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "inspect");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(int(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("insp_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("optimize on the crossing-square mission reports the 17.2% reduction") {
  const auto dir = scratch("optimize");
  const auto dest = dir / "optimized.json";
  const auto r = invoke({"optimize", "--mission", (kData / "missions" / "crossing_square.json").string(), "--out",
                      dest.string()});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("recorded cost  4.828 m") != std::string::npos);
  CHECK(r.out.find("optimized cost 4.000 m") != std::string::npos);
  CHECK(r.out.find("reduction      17.2 %") != std::string::npos);
  const auto m = mission::load_mission(dest);
  CHECK(m.order == std::vector<int>{0, 2, 1, 3});
  fs::remove_all(dir);
}

TEST_CASE("metrics on the constant-speed fixture") {
  const auto log = (kData / "logs" / "constant_speed.jsonl").string();
  auto r = invoke({"metrics", "--line", log});
  REQUIRE(r.code == 0);
  CHECK(r.out == "2.00 2.00 120.00 1 : 00\n");
  r = invoke({"metrics", log});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("| Inspection Mode | Maximum Speed (m/s) | Average Speed (m/s) | Trajectory Length (m) | "
                   "Flight Time (min : sec) |") != std::string::npos);
  CHECK(r.out.find("| Human-in-the-loop | 2.00 | 2.00 | 120.00 | 1 : 00 |") != std::string::npos);
}

TEST_CASE("replay on the one-point mission gives a near-zero trajectory length") {
  const auto dir = scratch("replay");
  const auto r = invoke({"replay", "--mission", (kData / "missions" / "single_point.json").string(), "--scene",
                      (kData / "scenes" / "reloc_room.json").string(), "--out", dir.string()});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("reached 1, abandoned 0") != std::string::npos);
  const auto log = mission::load_log(dir / "autonomous.jsonl");
  CHECK(mission::compute_metrics(log).length < 0.5);
  CHECK(fs::exists(dir / "metrics.md"));
  fs::remove_all(dir);
}

TEST_CASE("run-scripted writes a log and a mission") {
  const auto dir = scratch("scripted");
  const auto r = invoke({"run-scripted", "--script", (kData / "scripts" / "single_point.json").string(), "--seed", "3",
                      "--out", dir.string()});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("recorded 1 points") != std::string::npos);
  const auto m = mission::load_mission(dir / "mission.json");
  CHECK(m.points.size() == 1);
  CHECK(mission::load_log(dir / "human.jsonl").seed == 3);
  fs::remove_all(dir);
}

TEST_CASE("errors give a nonzero exit code and a diagnostic") {
  CHECK(invoke({}).code != 0);
  CHECK(invoke({"fly"}).code != 0);
  auto r = invoke({"optimize", "--mission", "/nonexistent/mission.json"});
  CHECK(r.code != 0);
  CHECK(r.err.find("error:") != std::string::npos);
  r = invoke({"run-scripted", "--script", (kData / "scripts" / "square.json").string(), "--tick-rate", "33"});
  CHECK(r.code != 0);
  CHECK(invoke({"metrics", "/nonexistent.jsonl"}).code != 0);
  CHECK(invoke({"replay", "--mission", (kData / "missions" / "single_point.json").string()}).code != 0);
}
