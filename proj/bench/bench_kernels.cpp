// Parallel kernels against their serial references on the bundled fixtures.

#include <benchmark/benchmark.h>

#include <random>

#include "insp/mission.hpp"
#include "insp/session.hpp"

using namespace insp;

namespace {

const std::filesystem::path kData = INSP_DATA_DIR;

struct Fixtures {
  sim::Scene scene = sim::load_scene(kData / "scenes" / "cluttered.json");
  mission::Mission mission = mission::load_mission(kData / "missions" / "single_point.json");
  session::SessionConfig cfg = session::desk_config(0);
  sim::QuadState state;
  mapping::ProbabilityMap prob{0.2, 48, Vec3(0, 0, 1.5)};
  std::vector<sequencer::InspectionPoint> points;
  std::vector<Vec3> source;
  std::unique_ptr<reloc::AnchorIndex> index;

  Fixtures() {
    state.position = Vec3(0, 0, 1.5);
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<float> lo(-2.0f, 3.0f);
    mapping::for_each_cell(prob.window(), [&](const Cell& c) {
      if (rng() % 3 != 0) prob.set_log_odds(c, lo(rng));
    });
    std::uniform_real_distribution<double> xy(-4.0, 4.0), z(-0.5, 1.5);
    for (int i = 0; i < 10; ++i) points.push_back({Vec3(xy(rng), xy(rng), z(rng)), 0.0, 0.0, i});
    index = std::make_unique<reloc::AnchorIndex>(mission.anchor);
    const auto r = RigidTransform::from_yaw(0.1, Vec3(0.05, -0.03, 0.0));
    for (const auto& p : mission.anchor.points) source.push_back(r.apply(p));
  }
};

const Fixtures& fx() {
  static const Fixtures f;
  return f;
}

void BM_Scan(benchmark::State& s) {
  const auto& f = fx();
  for (auto _ : s) benchmark::DoNotOptimize(lidar::simulate_scan(f.scene, f.state, f.cfg.sensor, 0));
}
void BM_ScanSerial(benchmark::State& s) {
  const auto& f = fx();
  for (auto _ : s) benchmark::DoNotOptimize(lidar::serial::simulate_scan(f.scene, f.state, f.cfg.sensor, 0));
}

void BM_Inflation(benchmark::State& s) {
  const auto& f = fx();
  for (auto _ : s) benchmark::DoNotOptimize(mapping::recompute_inflation(f.prob, 0.4, true));
}
void BM_InflationSerial(benchmark::State& s) {
  const auto& f = fx();
  for (auto _ : s) benchmark::DoNotOptimize(mapping::serial::recompute_inflation(f.prob, 0.4, true));
}

void BM_Frontiers(benchmark::State& s) {
  const auto& f = fx();
  for (auto _ : s) benchmark::DoNotOptimize(mapping::recompute_frontiers(f.prob));
}
void BM_FrontiersSerial(benchmark::State& s) {
  const auto& f = fx();
  for (auto _ : s) benchmark::DoNotOptimize(mapping::serial::recompute_frontiers(f.prob));
}

void BM_DistanceMatrix(benchmark::State& s) {
  const auto& f = fx();
  for (auto _ : s) benchmark::DoNotOptimize(sequencer::build_distance_matrix(f.points, *f.mission.global));
}
void BM_DistanceMatrixSerial(benchmark::State& s) {
  const auto& f = fx();
  for (auto _ : s) benchmark::DoNotOptimize(sequencer::serial::build_distance_matrix(f.points, *f.mission.global));
}

void BM_Correspondences(benchmark::State& s) {
  const auto& f = fx();
  for (auto _ : s)
    benchmark::DoNotOptimize(
        reloc::find_correspondences(f.source, f.mission.anchor, f.index->tree(), RigidTransform{}, 0.5));
}
void BM_CorrespondencesSerial(benchmark::State& s) {
  const auto& f = fx();
  for (auto _ : s)
    benchmark::DoNotOptimize(
        reloc::serial::find_correspondences(f.source, f.mission.anchor, f.index->tree(), RigidTransform{}, 0.5));
}

}  // namespace

BENCHMARK(BM_Scan)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_ScanSerial)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_Inflation)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_InflationSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Frontiers)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_FrontiersSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_DistanceMatrix)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_DistanceMatrixSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Correspondences)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_CorrespondencesSerial)->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
