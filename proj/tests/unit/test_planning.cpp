#include <doctest.h>

#include <queue>
#include <random>

#include "insp/planning.hpp"
#include "oracles.hpp"

using namespace insp;
using namespace insp::planning;
using mapping::CellClass;
using mapping::InflationState;
using testing::Grid;
using testing::dijkstra;

namespace {

mapping::ProbabilityMap filled_map(int W, float value) {
  mapping::ProbabilityMap m(0.2, W, Vec3::Zero());
  mapping::for_each_cell(m.window(), [&](const Cell& c) { m.set_log_odds(c, value); });
  return m;
}

}  // namespace

TEST_CASE("compute_local_goal") {
  sim::QuadState s;
  s.position = Vec3(1, 2, 3);
  JoystickCommand hover;
  auto g = compute_local_goal(hover, s, 5.0);
  CHECK(g.position == s.position);
  CHECK(g.yaw == s.yaw);

  JoystickCommand fwd;
  fwd.axes = {1, 0, 0, 0};
  g = compute_local_goal(fwd, s, 5.0);
  CHECK((g.position - Vec3(6, 2, 3)).norm() < 1e-12);
  s.yaw = kPi / 2;
  g = compute_local_goal(fwd, s, 5.0);
  CHECK((g.position - Vec3(1, 7, 3)).norm() < 1e-12);

  JoystickCommand turn;
  turn.axes = {0, 0, 0, 1};
  g = compute_local_goal(turn, s, 5.0, 1.5, 0.1);
  CHECK(g.yaw == doctest::Approx(kPi / 2 + 0.15));
  CHECK_THROWS(compute_local_goal(fwd, s, 0.0));
}

TEST_CASE("astar: straight diagonal in a free grid") {
  Grid g(10);
  const auto r = astar(Cell(0, 0, 0), Cell(9, 9, 9), g.search(0.2));
  REQUIRE(r.ok());
  CHECK(r.path.length == doctest::Approx(9 * std::sqrt(3.0) * 0.2).epsilon(1e-12));
  CHECK(r.path.cells.size() == 10);
}

TEST_CASE("astar: wall with one gap matches Dijkstra") {
  Grid g(12);
  for (int y = 0; y < 12; ++y)
    for (int z = 0; z < 12; ++z) g.blocked[g.idx(Cell(6, y, z))] = 1;
  g.blocked[g.idx(Cell(6, 10, 2))] = 0;
  const Cell s(1, 1, 1), t(11, 2, 9);
  const auto r = astar(s, t, g.search(0.2));
  const auto d = dijkstra(g, s, t);
  REQUIRE(r.ok());
  REQUIRE(d);
  CHECK(r.path.length == canonical_length(*d, 0.2));
  bool through_gap = false;
  for (const Cell& c : r.path.cells) through_gap |= c == Cell(6, 10, 2);
  CHECK(through_gap);
}

TEST_CASE("astar: error outcomes") {
  Grid g(10);
  for (int x = 3; x <= 7; ++x)
    for (int y = 3; y <= 7; ++y)
      for (int z = 3; z <= 7; ++z)
        if (x == 3 || x == 7 || y == 3 || y == 7 || z == 3 || z == 7) g.blocked[g.idx(Cell(x, y, z))] = 1;
  CHECK(astar(Cell(0, 0, 0), Cell(5, 5, 5), g.search(0.2)).status == SearchStatus::Unreachable);
  CHECK(astar(Cell(3, 3, 3), Cell(0, 0, 0), g.search(0.2)).status == SearchStatus::StartBlocked);
  CHECK(astar(Cell(0, 0, 0), Cell(3, 3, 3), g.search(0.2)).status == SearchStatus::GoalBlocked);
  CHECK(astar(Cell(0, 0, 0), Cell(9, 9, 9), g.search(0.2), {5}).status == SearchStatus::LimitReached);
  const auto same = astar(Cell(1, 1, 1), Cell(1, 1, 1), g.search(0.2));
  REQUIRE(same.ok());
  CHECK(same.path.length == 0.0);
}

TEST_CASE("property: astar equals Dijkstra on random 20^3 grids and avoids blocked cells") {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(0, 1);
  std::uniform_int_distribution<int> pick(0, 19);
  int found = 0;
  for (int trial = 0; trial < 200; ++trial) {
    Grid g(20);
    const double density = 0.15 + 0.25 * u(rng);
    for (auto& b : g.blocked) b = u(rng) < density;
    Cell s(pick(rng), pick(rng), pick(rng)), t(pick(rng), pick(rng), pick(rng));
    g.blocked[g.idx(s)] = 0;
    g.blocked[g.idx(t)] = 0;
    const auto r = astar(s, t, g.search(0.2));
    const auto d = dijkstra(g, s, t);
    REQUIRE(r.ok() == d.has_value());
    if (!d) continue;
    ++found;
    REQUIRE(r.path.length == canonical_length(*d, 0.2));
    REQUIRE(r.path.cells.front() == s);
    REQUIRE(r.path.cells.back() == t);
    double sum = 0;
    for (std::size_t i = 0; i < r.path.cells.size(); ++i) {
      REQUIRE(g.free(r.path.cells[i]));
      if (i) {
        REQUIRE((r.path.cells[i] - r.path.cells[i - 1]).cwiseAbs().maxCoeff() == 1);
        sum += (r.path.waypoints[i] - r.path.waypoints[i - 1]).norm();
      }
    }
    REQUIRE(sum == doctest::Approx(r.path.length).epsilon(1e-12));
  }
  CHECK(found > 100);
}

TEST_CASE("astar on inflated and global maps") {
  auto m = filled_map(20, -2.0f);
  m.set_log_odds(m.window().origin + Cell(10, 10, 10), 3.0f);
  mapping::InflatedMap inf(m, 0.4, true);
  const Vec3 a = m.center_of(m.window().origin + Cell(4, 10, 10));
  const Vec3 b = m.center_of(m.window().origin + Cell(16, 10, 10));
  const auto r = astar(a, b, inf);
  REQUIRE(r.ok());
  for (const Cell& c : r.path.cells) CHECK(inf.state(c) == InflationState::NoInflation);
  CHECK(r.path.length > 12 * 0.2);

  mapping::GlobalMap gm(0.5, 10.0, Vec3::Zero());
  for (int x = 0; x < 5; ++x) gm.set_free(Cell(x, 0, 0));
  const auto rg = astar(Vec3(0.25, 0.25, 0.25), Vec3(2.25, 0.25, 0.25), gm);
  REQUIRE(rg.ok());
  CHECK(rg.path.length == doctest::Approx(2.0));
  CHECK(astar(Vec3(0.25, 0.25, 0.25), Vec3(2.25, 0.75, 0.25), gm).status == SearchStatus::GoalBlocked);
}

TEST_CASE("generate_sfc: straight 3-cell path with 2-cell edge limit") {
  auto m = filled_map(20, -2.0f);
  GridPath p;
  p.cells = {Cell(0, 0, 0), Cell(1, 0, 0), Cell(2, 0, 0)};
  const auto c = generate_sfc(p, m, 2);
  REQUIRE(c.boxes.size() == 2);
  CHECK(c.cell_boxes[0].first == Cell(0, 0, 0));
  CHECK(c.cell_boxes[0].second == Cell(1, 1, 1));
  CHECK(c.cell_boxes[1].first == Cell(1, 0, 0));
  CHECK(c.cell_boxes[1].second == Cell(2, 1, 1));
  CHECK(c.boxes[0].max.x() == doctest::Approx(0.4));
  CHECK(c.boxes[0].overlaps_interior(c.boxes[1]));
}

TEST_CASE("generate_sfc: one-cell tunnel") {
  auto m = filled_map(20, 3.0f);
  GridPath p;
  for (int x = -5; x <= 5; ++x) {
    m.set_log_odds(Cell(x, 0, 0), -2.0f);
    p.cells.emplace_back(x, 0, 0);
  }
  const auto c = generate_sfc(p, m, 4);
  CHECK(c.boxes.size() >= 2);
  for (const auto& [lo, hi] : c.cell_boxes) {
    CHECK(lo.y() == hi.y());
    CHECK(lo.z() == hi.z());
    CHECK(hi.x() - lo.x() + 1 <= 4);
  }
}

TEST_CASE("generate_sfc: rejects a path with a non-free waypoint") {
  auto m = filled_map(10, -2.0f);
  m.set_log_odds(Cell(1, 0, 0), 0.0f);
  GridPath p;
  p.cells = {Cell(0, 0, 0), Cell(1, 0, 0)};
  try {
    generate_sfc(p, m);
    FAIL("expected CorridorError");
  } catch (const CorridorError& e) {
    CHECK(e.waypoint() == 1);
  }
}

TEST_CASE("property: corridors on random maps contain only Known Free cells") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0, 1);
  const int W = 24;
  int checked = 0;
  for (int trial = 0; trial < 100; ++trial) {
    auto m = filled_map(W, -2.0f);
    const Cell o = m.window().origin;
    std::uniform_int_distribution<int> pick(0, W - 1);
    for (int k = 0; k < 12; ++k) {
      const Cell c = o + Cell(pick(rng), pick(rng), pick(rng));
      const Cell e = Cell(int(u(rng) * 5), int(u(rng) * 5), int(u(rng) * 5));
      const float v = u(rng) < 0.7 ? 3.0f : 0.0f;
      for (int x = 0; x <= e.x(); ++x)
        for (int y = 0; y <= e.y(); ++y)
          for (int z = 0; z <= e.z(); ++z)
            if (m.in_window(c + Cell(x, y, z))) m.set_log_odds(c + Cell(x, y, z), v);
    }
    mapping::InflatedMap inf(m, 0.4, true);
    Cell s, t;
    do { s = o + Cell(pick(rng), pick(rng), pick(rng)); } while (!inf.traversable(s));
    do { t = o + Cell(pick(rng), pick(rng), pick(rng)); } while (!inf.traversable(t));
    const auto r = astar(m.center_of(s), m.center_of(t), inf);
    if (!r.ok()) continue;
    ++checked;
    const auto c = generate_sfc(r.path, m);
    if (r.path.cells.size() >= 2) REQUIRE(c.boxes.size() >= 2);
    for (std::size_t b = 0; b < c.cell_boxes.size(); ++b) {
      const auto& [lo, hi] = c.cell_boxes[b];
      REQUIRE((hi - lo).maxCoeff() + 1 <= 20);
      for (int x = lo.x(); x <= hi.x(); ++x)
        for (int y = lo.y(); y <= hi.y(); ++y)
          for (int z = lo.z(); z <= hi.z(); ++z) REQUIRE(m.classify(Cell(x, y, z)) == CellClass::KnownFree);
      if (b) REQUIRE(c.boxes[b - 1].overlaps_interior(c.boxes[b]));
    }
    for (const Vec3& w : r.path.waypoints) {
      bool covered = false;
      for (const Box& b : c.boxes) covered |= b.contains(w);
      REQUIRE(covered);
    }
  }
  CHECK(checked > 50);
}

TEST_CASE("nearest_no_inflation") {
  auto m = filled_map(12, -2.0f);
  const Cell mid = m.window().origin + Cell(6, 6, 6);
  m.set_log_odds(mid, 3.0f);
  // Zero-radius inflation: only the occupied cell itself is inflated.
  mapping::InflatedMap inf(m, 0.0, true);
  const Vec3 q = m.center_of(mid);
  const auto r = nearest_no_inflation(q, inf);
  REQUIRE(r);
  CHECK((*r - m.center_of(mid + Cell(1, 0, 0))).norm() < 1e-12);
  const Vec3 free_pt = m.center_of(mid + Cell(3, 0, 0));
  CHECK((*nearest_no_inflation(free_pt, inf) - free_pt).norm() < 1e-12);

  mapping::ProbabilityMap unknown(0.2, 8, Vec3::Zero());
  mapping::InflatedMap all(unknown, 0.4, true);
  CHECK_FALSE(nearest_no_inflation(Vec3::Zero(), all).has_value());
  CHECK_THROWS_AS(nearest_no_inflation(Vec3(100, 0, 0), all), mapping::OutOfWindow);
}

TEST_CASE("property: nearest_no_inflation has minimal BFS depth") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0, 1);
  const int W = 16;
  for (int trial = 0; trial < 40; ++trial) {
    auto m = filled_map(W, -2.0f);
    const Cell o = m.window().origin;
    mapping::for_each_cell(m.window(), [&](const Cell& c) {
      if (u(rng) < 0.12) m.set_log_odds(c, 3.0f);
    });
    mapping::InflatedMap inf(m, 0.4, true);
    std::uniform_int_distribution<int> pick(0, W - 1);
    const Cell q = o + Cell(pick(rng), pick(rng), pick(rng));
    const auto r = nearest_no_inflation(m.center_of(q), inf);
    // In a box-shaped window with every cell passable, BFS depth = Manhattan distance.
    int best = std::numeric_limits<int>::max();
    mapping::for_each_cell(m.window(), [&](const Cell& c) {
      if (inf.state(c) == InflationState::NoInflation) best = std::min(best, (c - q).cwiseAbs().sum());
    });
    if (best == std::numeric_limits<int>::max()) {
      CHECK_FALSE(r);
      continue;
    }
    REQUIRE(r);
    const Cell rc = m.cell_of(*r);
    REQUIRE(inf.state(rc) == InflationState::NoInflation);
    REQUIRE((rc - q).cwiseAbs().sum() == best);
  }
}
