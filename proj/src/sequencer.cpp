#include "insp/sequencer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "insp/planning.hpp"

namespace insp::sequencer {

namespace {
// Moves must gain more than this to count; keeps local search from cycling on round-off.
constexpr double kImprove = 1e-7;
}  // namespace

bool InspectionPoint::valid() const {
  return yaw >= -kPi && yaw < kPi && gimbal_pitch >= -kPi / 2 && gimbal_pitch <= kPi / 2 && position.allFinite();
}

void DistanceMatrix::set(int i, int j, double c, bool unreach) {
  cost[index(i, j)] = c;
  cost[index(j, i)] = c;
  unreachable[index(i, j)] = unreach;
  unreachable[index(j, i)] = unreach;
}

DistanceMatrix DistanceMatrix::euclidean(const std::vector<Vec3>& points) {
  DistanceMatrix m(static_cast<int>(points.size()));
  for (int i = 0; i < m.n; ++i)
    for (int j = i + 1; j < m.n; ++j) m.set(i, j, (points[std::size_t(i)] - points[std::size_t(j)]).norm());
  return m;
}

double tour_cost(const DistanceMatrix& m, const std::vector<int>& order) {
  double c = 0.0;
  const std::size_t n = order.size();
  for (std::size_t i = 0; i < n; ++i) c += m.at(order[i], order[(i + 1) % n]);
  return n > 1 ? c : 0.0;
}

namespace {

template <bool Parallel>
DistanceMatrix distance_matrix(const std::vector<InspectionPoint>& points, const mapping::GlobalMap& global) {
  const int n = static_cast<int>(points.size());
  for (int i = 0; i < n; ++i) {
    if (!global.in_bounds(global.cell_of(points[std::size_t(i)].position))) {
      throw SequencerError("inspection point " + std::to_string(i) + " lies outside the global map");
    }
  }
  DistanceMatrix m(n);
  std::vector<std::pair<int, int>> pairs;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) pairs.emplace_back(i, j);
  std::vector<double> cost(pairs.size());
  std::vector<std::uint8_t> unreach(pairs.size());
  const auto np = static_cast<std::int64_t>(pairs.size());
#pragma omp parallel for schedule(dynamic, 1) if (Parallel)
  for (std::int64_t k = 0; k < np; ++k) {
    const auto uk = static_cast<std::size_t>(k);
    const Vec3& a = points[std::size_t(pairs[uk].first)].position;
    const Vec3& b = points[std::size_t(pairs[uk].second)].position;
    const auto r = planning::astar_snapped(a, b, global);
    if (r.ok()) {
      cost[uk] = r.path.length;
      unreach[uk] = 0;
    } else {
      cost[uk] = kUnreachable;
      unreach[uk] = 1;
    }
  }
  for (std::size_t k = 0; k < pairs.size(); ++k) m.set(pairs[k].first, pairs[k].second, cost[k], unreach[k] != 0);
  return m;
}

}  // namespace

DistanceMatrix build_distance_matrix(const std::vector<InspectionPoint>& points, const mapping::GlobalMap& global) {
  return distance_matrix<true>(points, global);
}

namespace serial {
DistanceMatrix build_distance_matrix(const std::vector<InspectionPoint>& points, const mapping::GlobalMap& global) {
  return distance_matrix<false>(points, global);
}
}  // namespace serial

Tour held_karp(const DistanceMatrix& m) {
  const int n = m.n;
  if (n > kHeldKarpMax) throw SequencerError("held_karp: instance too large (n = " + std::to_string(n) + ")");
  Tour t;
  if (n == 0) return t;
  if (n == 1) {
    t.order = {0};
    return t;
  }
  // g[S][j]: cheapest way to start at city j, visit every city of S, and
  // return to 0. Cities 1..n-1 map to bits 0..n-2.
  const int k = n - 1;
  const std::size_t subsets = std::size_t{1} << k;
  std::vector<double> g(subsets * static_cast<std::size_t>(k), std::numeric_limits<double>::infinity());
  auto G = [&](std::size_t s, int j) -> double& { return g[s * static_cast<std::size_t>(k) + std::size_t(j - 1)]; };
  for (int j = 1; j < n; ++j) G(0, j) = m.at(j, 0);
  for (std::size_t s = 1; s < subsets; ++s) {
    for (int j = 1; j < n; ++j) {
      if (s & (std::size_t{1} << (j - 1))) continue;
      double best = std::numeric_limits<double>::infinity();
      for (int c = 1; c < n; ++c) {
        const std::size_t bit = std::size_t{1} << (c - 1);
        if (!(s & bit)) continue;
        best = std::min(best, m.at(j, c) + G(s ^ bit, c));
      }
      G(s, j) = best;
    }
  }
  // Forward reconstruction: at each step take the smallest city that still
  // completes an optimal tour.
  auto remaining_cost = [&](int from, std::size_t rem) {
    double best = std::numeric_limits<double>::infinity();
    for (int c = 1; c < n; ++c) {
      const std::size_t bit = std::size_t{1} << (c - 1);
      if (rem & bit) best = std::min(best, m.at(from, c) + G(rem ^ bit, c));
    }
    return best;
  };
  std::size_t rem = subsets - 1;
  int cur = 0;
  t.order = {0};
  while (rem) {
    const double target = remaining_cost(cur, rem);
    const double eps = 1e-9 * std::max(1.0, std::abs(target));
    for (int c = 1; c < n; ++c) {
      const std::size_t bit = std::size_t{1} << (c - 1);
      if ((rem & bit) && m.at(cur, c) + G(rem ^ bit, c) <= target + eps) {
        t.order.push_back(c);
        rem ^= bit;
        cur = c;
        break;
      }
    }
  }
  t.cost = tour_cost(m, t.order);
  return t;
}

namespace {

std::vector<int> nearest_neighbour_tour(const DistanceMatrix& m) {
  std::vector<int> order{0};
  std::vector<bool> used(std::size_t(m.n), false);
  used[0] = true;
  for (int step = 1; step < m.n; ++step) {
    int best = -1;
    for (int c = 0; c < m.n; ++c) {
      if (used[std::size_t(c)]) continue;
      if (best < 0 || m.at(order.back(), c) < m.at(order.back(), best)) best = c;
    }
    used[std::size_t(best)] = true;
    order.push_back(best);
  }
  return order;
}

// Candidate predicate: with candidate lists enabled, a move must create an
// edge to one of the k nearest neighbours of its anchor city.
struct Candidates {
  bool enabled = false;
  std::vector<std::vector<std::uint8_t>> near;
  Candidates(const DistanceMatrix& m, int k) : enabled(m.n > 12) {
    if (!enabled) return;
    near.assign(std::size_t(m.n), std::vector<std::uint8_t>(std::size_t(m.n), 0));
    for (int i = 0; i < m.n; ++i) {
      std::vector<int> others;
      for (int j = 0; j < m.n; ++j)
        if (j != i) others.push_back(j);
      std::stable_sort(others.begin(), others.end(), [&](int a, int b) { return m.at(i, a) < m.at(i, b); });
      for (int r = 0; r < std::min<int>(k, int(others.size())); ++r) near[std::size_t(i)][std::size_t(others[std::size_t(r)])] = 1;
    }
  }
  bool ok(int a, int b) const { return !enabled || near[std::size_t(a)][std::size_t(b)] || near[std::size_t(b)][std::size_t(a)]; }
};

bool two_opt_pass(const DistanceMatrix& m, const Candidates& cand, std::vector<int>& t) {
  const int n = static_cast<int>(t.size());
  bool improved = false;
  for (int i = 1; i < n - 1; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const int a = t[std::size_t(i - 1)], b = t[std::size_t(i)], c = t[std::size_t(j)], e = t[std::size_t((j + 1) % n)];
      if (a == e) continue;
      if (!cand.ok(a, c) && !cand.ok(b, e)) continue;
      const double delta = (m.at(a, c) + m.at(b, e)) - (m.at(a, b) + m.at(c, e));
      if (delta < -kImprove) {
        std::reverse(t.begin() + i, t.begin() + j + 1);
        improved = true;
      }
    }
  }
  return improved;
}

bool or_opt_pass(const DistanceMatrix& m, const Candidates& cand, std::vector<int>& t) {
  const int n = static_cast<int>(t.size());
  for (int len = 1; len <= 3; ++len) {
    for (int i = 1; i + len - 1 < n; ++i) {
      const int prev = t[std::size_t(i - 1)];
      const int s0 = t[std::size_t(i)], s1 = t[std::size_t(i + len - 1)];
      const int next = t[std::size_t((i + len) % n)];
      if (next == prev && n - len == 1) continue;
      const double removal = m.at(prev, s0) + m.at(s1, next) - m.at(prev, next);
      // Remaining tour without the segment.
      std::vector<int> rest;
      rest.reserve(std::size_t(n - len));
      for (int k = 0; k < n; ++k)
        if (k < i || k >= i + len) rest.push_back(t[std::size_t(k)]);
      const int r = static_cast<int>(rest.size());
      for (int p = 0; p < r; ++p) {
        const int x = rest[std::size_t(p)], y = rest[std::size_t((p + 1) % r)];
        if (x == prev && y == next) continue;
        for (int rev = 0; rev < 2; ++rev) {
          const int first = rev ? s1 : s0, last = rev ? s0 : s1;
          if (!cand.ok(x, first) && !cand.ok(last, y)) continue;
          const double insertion = m.at(x, first) + m.at(last, y) - m.at(x, y);
          if (insertion - removal < -kImprove) {
            std::vector<int> seg(t.begin() + i, t.begin() + i + len);
            if (rev) std::reverse(seg.begin(), seg.end());
            std::vector<int> out(rest.begin(), rest.begin() + p + 1);
            out.insert(out.end(), seg.begin(), seg.end());
            out.insert(out.end(), rest.begin() + p + 1, rest.end());
            t = std::move(out);
            return true;
          }
        }
      }
    }
  }
  return false;
}

}  // namespace

Tour solve_heuristic(const DistanceMatrix& m) {
  Tour t;
  if (m.n == 0) return t;
  std::vector<int> identity(std::size_t(m.n));
  for (int i = 0; i < m.n; ++i) identity[std::size_t(i)] = i;
  std::vector<int> order = nearest_neighbour_tour(m);
  if (!(tour_cost(m, order) < tour_cost(m, identity))) order = identity;

  const Candidates cand(m, 8);
  for (;;) {
    bool any = false;
    while (two_opt_pass(m, cand, order)) any = true;
    while (or_opt_pass(m, cand, order)) any = true;
    if (!any) break;
  }
  // A tour and its reversal cost the same; report the lexicographically smaller.
  std::vector<int> reversed{order.front()};
  reversed.insert(reversed.end(), order.rbegin(), order.rend() - 1);
  if (reversed < order && std::abs(tour_cost(m, reversed) - tour_cost(m, order)) <= kImprove) order = reversed;
  t.order = std::move(order);
  t.cost = tour_cost(m, t.order);
  return t;
}

OptimizationResult optimize_points(const std::vector<InspectionPoint>& recorded, const mapping::GlobalMap& global) {
  OptimizationResult r;
  r.matrix = build_distance_matrix(recorded, global);
  std::vector<int> identity(recorded.size());
  for (std::size_t i = 0; i < identity.size(); ++i) identity[i] = static_cast<int>(i);
  r.recorded_cost = tour_cost(r.matrix, identity);
  r.tour = solve_heuristic(r.matrix);
  r.optimized_cost = r.tour.cost;
  r.reduction = r.recorded_cost > 0.0 ? (r.recorded_cost - r.optimized_cost) / r.recorded_cost : 0.0;
  // Points outside the reachability component of the start are reported.
  std::vector<bool> reached(recorded.size(), false);
  std::vector<int> stack;
  if (!recorded.empty()) {
    reached[0] = true;
    stack.push_back(0);
  }
  while (!stack.empty()) {
    const int i = stack.back();
    stack.pop_back();
    for (int j = 0; j < r.matrix.n; ++j) {
      if (!reached[std::size_t(j)] && !r.matrix.is_unreachable(i, j)) {
        reached[std::size_t(j)] = true;
        stack.push_back(j);
      }
    }
  }
  for (int i = 0; i < r.matrix.n; ++i)
    if (!reached[std::size_t(i)]) r.unreachable_points.push_back(i);
  for (int idx : r.tour.order) r.ordered.push_back(recorded[std::size_t(idx)]);
  return r;
}

}  // namespace insp::sequencer
