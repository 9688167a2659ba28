#include "insp/mapping.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>

namespace insp::mapping {

namespace {

constexpr std::array<std::array<int, 3>, 6> kFaceOffsets{{{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}}};

Cell face_neighbor(const Cell& c, int k) {
  return c + Cell(kFaceOffsets[k][0], kFaceOffsets[k][1], kFaceOffsets[k][2]);
}

// Parallel-friendly sweep over the window: the outer x loop is split across threads.
template <class F>
void sweep_window(const Window& w, bool parallel, F&& fn) {
  const int n = w.size;
#pragma omp parallel for schedule(static) if (parallel)
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      for (int k = 0; k < n; ++k) fn(Cell(w.origin.x() + i, w.origin.y() + j, w.origin.z() + k));
    }
  }
}

}  // namespace

const char* to_string(CellClass c) {
  switch (c) {
    case CellClass::Unknown: return "unknown";
    case CellClass::KnownFree: return "free";
    case CellClass::Occupied: return "occupied";
  }
  return "?";
}

const char* to_string(InflationState s) {
  switch (s) {
    case InflationState::NoInflation: return "none";
    case InflationState::UnknownInflation: return "unknown";
    case InflationState::OccupiedInflation: return "occupied";
  }
  return "?";
}

Window Window::centered(const Vec3& center, double resolution, int size) {
  return {insp::cell_of(center, resolution) - Cell::Constant(size / 2), size};
}

void for_each_cell(const Window& w, const std::function<void(const Cell&)>& fn) {
  sweep_window(w, false, fn);
}

void for_each_cell_not_in(const Window& a, const Window& b, const std::function<void(const Cell&)>& fn) {
  const Cell a0 = a.origin, a1 = a.max_cell();
  const Cell b0 = b.origin, b1 = b.max_cell();
  for (int x = a0.x(); x <= a1.x(); ++x) {
    const bool xin = x >= b0.x() && x <= b1.x();
    for (int y = a0.y(); y <= a1.y(); ++y) {
      if (xin && y >= b0.y() && y <= b1.y()) {
        for (int z = a0.z(); z <= std::min(a1.z(), b0.z() - 1); ++z) fn(Cell(x, y, z));
        for (int z = std::max(a0.z(), b1.z() + 1); z <= a1.z(); ++z) fn(Cell(x, y, z));
      } else {
        for (int z = a0.z(); z <= a1.z(); ++z) fn(Cell(x, y, z));
      }
    }
  }
}

void traverse_segment(const Vec3& p0, const Vec3& p1, double resolution, const std::function<bool(const Cell&)>& visit) {
  Cell c = insp::cell_of(p0, resolution);
  if (!visit(c)) return;
  const Vec3 d = p1 - p0;
  const double len = d.norm();
  if (!(len > 0.0)) return;
  const Vec3 dir = d / len;

  constexpr double inf = std::numeric_limits<double>::infinity();
  std::array<int, 3> step{};
  std::array<double, 3> t_max{}, t_delta{};
  for (int a = 0; a < 3; ++a) {
    if (dir[a] > 0.0) {
      step[a] = 1;
      t_max[a] = ((c[a] + 1) * resolution - p0[a]) / dir[a];
      t_delta[a] = resolution / dir[a];
    } else if (dir[a] < 0.0) {
      step[a] = -1;
      t_max[a] = (c[a] * resolution - p0[a]) / dir[a];
      t_delta[a] = -resolution / dir[a];
    } else {
      t_max[a] = inf;
      t_delta[a] = inf;
    }
  }
  // A segment ending exactly on a face belongs to the cell beyond it, so a
  // return on an obstacle face lands in the obstacle's cell.
  const double limit = len + 1e-9;
  for (;;) {
    int a = 0;
    if (t_max[1] < t_max[a]) a = 1;
    if (t_max[2] < t_max[a]) a = 2;
    if (t_max[a] > limit) break;
    c[a] += step[a];
    t_max[a] += t_delta[a];
    if (!visit(c)) return;
  }
}

// ---------------------------------------------------------------- ProbabilityMap

ProbabilityMap::ProbabilityMap(double resolution, int window_size, const Vec3& center, LogOddsParams params)
    : resolution_(resolution), params_(params) {
  if (!(resolution > 0.0)) throw std::invalid_argument("ProbabilityMap: resolution must be positive");
  if (window_size <= 0) throw std::invalid_argument("ProbabilityMap: window_size must be positive");
  window_ = Window::centered(center, resolution, window_size);
  log_odds_.assign(window_.cell_count(), 0.0f);
  touch_stamp_.assign(window_.cell_count(), 0);
}

CellClass ProbabilityMap::classify(const Cell& c) const {
  if (!window_.contains(c)) throw OutOfWindow("classify: cell outside the map window");
  return params_.classify(log_odds_[window_.slot(c)]);
}

float ProbabilityMap::log_odds(const Cell& c) const {
  if (!window_.contains(c)) throw OutOfWindow("log_odds: cell outside the map window");
  return log_odds_[window_.slot(c)];
}

std::vector<CellDelta> ProbabilityMap::set_log_odds(const Cell& c, float value) {
  if (!window_.contains(c)) throw OutOfWindow("set_log_odds: cell outside the map window");
  const std::size_t s = window_.slot(c);
  const CellClass before = params_.classify(log_odds_[s]);
  log_odds_[s] = std::clamp(value, params_.l_min, params_.l_max);
  const CellClass after = params_.classify(log_odds_[s]);
  if (before == after) return {};
  return {{c, before, after}};
}

void ProbabilityMap::touch(std::size_t slot, const Cell& c) {
  if (touch_stamp_[slot] == frame_stamp_) return;
  touch_stamp_[slot] = frame_stamp_;
  touched_.emplace_back(c, params_.classify(log_odds_[slot]));
}

void ProbabilityMap::apply(std::size_t slot, float delta) {
  log_odds_[slot] = std::clamp(log_odds_[slot] + delta, params_.l_min, params_.l_max);
}

std::vector<CellDelta> ProbabilityMap::integrate_scan(const lidar::ScanFrame& frame, double carve_cap) {
  if (++frame_stamp_ == 0) {
    std::fill(touch_stamp_.begin(), touch_stamp_.end(), 0);
    frame_stamp_ = 1;
  }
  touched_.clear();
  const Vec3& origin = frame.sensor_position;
  if (!window_.contains(cell_of(origin))) return {};

  std::vector<Cell> path;
  bool truncated = false;
  auto collect = [&](const Cell& c) {
    if (!window_.contains(c)) {
      truncated = true;
      return false;
    }
    path.push_back(c);
    return true;
  };
  auto miss = [&](const Cell& c) {
    const std::size_t s = window_.slot(c);
    touch(s, c);
    apply(s, params_.l_miss);
  };

  for (const Vec3& hit : frame.returns) {
    path.clear();
    truncated = false;
    traverse_segment(origin, hit, resolution_, collect);
    if (path.empty()) continue;
    const std::size_t free_cells = truncated ? path.size() : path.size() - 1;
    for (std::size_t i = 0; i < free_cells; ++i) miss(path[i]);
    if (!truncated) {
      const std::size_t s = window_.slot(path.back());
      touch(s, path.back());
      apply(s, params_.l_hit);
    }
  }
  if (carve_cap > 0.0) {
    for (const Vec3& dir : frame.misses) {
      path.clear();
      traverse_segment(origin, origin + dir.normalized() * carve_cap, resolution_, collect);
      for (const Cell& c : path) miss(c);
    }
  }

  std::vector<CellDelta> deltas;
  for (const auto& [c, before] : touched_) {
    const CellClass after = params_.classify(log_odds_[window_.slot(c)]);
    if (after != before) deltas.push_back({c, before, after});
  }
  return deltas;
}

std::vector<CellDelta> ProbabilityMap::slide_window(const Vec3& new_center) {
  const Window next = Window::centered(new_center, resolution_, window_.size);
  if (next == window_) return {};
  std::vector<CellDelta> deltas;
  for_each_cell_not_in(window_, next, [&](const Cell& c) {
    const std::size_t s = window_.slot(c);
    deltas.push_back({c, params_.classify(log_odds_[s]), CellClass::Unknown});
    log_odds_[s] = 0.0f;
  });
  window_ = next;
  return deltas;
}

// ---------------------------------------------------------------- Inflation

std::vector<Cell> ball_offsets(double radius, double resolution) {
  const double r = radius / resolution;
  const int reach = static_cast<int>(std::floor(r + 1e-9));
  const double r2 = r * r + 1e-9;
  std::vector<Cell> out;
  for (int x = -reach; x <= reach; ++x)
    for (int y = -reach; y <= reach; ++y)
      for (int z = -reach; z <= reach; ++z)
        if (x * x + y * y + z * z <= r2) out.emplace_back(x, y, z);
  return out;
}

namespace {

InflationState classify_neighbourhood(const ProbabilityMap& prob, const Cell& c, const std::vector<Cell>& offsets,
                                      bool unknown_inflation) {
  bool unknown = false;
  for (const Cell& o : offsets) {
    const CellClass k = prob.class_or_unknown(c + o);
    if (k == CellClass::Occupied) return InflationState::OccupiedInflation;
    unknown = unknown || k == CellClass::Unknown;
  }
  return unknown && unknown_inflation ? InflationState::UnknownInflation : InflationState::NoInflation;
}

std::vector<InflationState> inflation_sweep(const ProbabilityMap& prob, double radius, bool unknown_inflation,
                                            bool parallel) {
  const Window& w = prob.window();
  const auto offsets = ball_offsets(radius, prob.resolution());
  std::vector<InflationState> out(w.cell_count());
  sweep_window(w, parallel, [&](const Cell& c) {
    out[w.slot(c)] = classify_neighbourhood(prob, c, offsets, unknown_inflation);
  });
  return out;
}

}  // namespace

std::vector<InflationState> recompute_inflation(const ProbabilityMap& prob, double inflation_radius,
                                                bool unknown_inflation) {
  return inflation_sweep(prob, inflation_radius, unknown_inflation, true);
}

namespace serial {
std::vector<InflationState> recompute_inflation(const ProbabilityMap& prob, double inflation_radius,
                                                bool unknown_inflation) {
  return inflation_sweep(prob, inflation_radius, unknown_inflation, false);
}
}  // namespace serial

InflatedMap::InflatedMap(const ProbabilityMap& prob, double inflation_radius, bool unknown_inflation)
    : resolution_(prob.resolution()),
      radius_(inflation_radius),
      unknown_inflation_(unknown_inflation),
      window_(prob.window()),
      offsets_(ball_offsets(inflation_radius, prob.resolution())) {
  if (inflation_radius < 0.0) throw std::invalid_argument("InflatedMap: inflation_radius must be >= 0");
  if (offsets_.size() > std::numeric_limits<std::uint16_t>::max()) {
    throw std::invalid_argument("InflatedMap: inflation radius too large for the cell counters");
  }
  occ_count_.assign(window_.cell_count(), 0);
  unk_count_.assign(window_.cell_count(), 0);
  touch_stamp_.assign(window_.cell_count(), 0);
  sweep_window(window_, true, [&](const Cell& c) { recount(prob, c); });
}

InflationState InflatedMap::state(const Cell& c) const {
  if (!window_.contains(c)) throw OutOfWindow("InflatedMap::state: cell outside the map window");
  return state_at(window_.slot(c));
}

void InflatedMap::recount(const ProbabilityMap& prob, const Cell& c) {
  std::uint16_t occ = 0, unk = 0;
  for (const Cell& o : offsets_) {
    const CellClass k = prob.class_or_unknown(c + o);
    occ += k == CellClass::Occupied;
    unk += k == CellClass::Unknown;
  }
  const std::size_t s = window_.slot(c);
  occ_count_[s] = occ;
  unk_count_[s] = unk;
}

std::vector<Cell> InflatedMap::update(const ProbabilityMap& prob, const std::vector<CellDelta>& deltas) {
  if (++stamp_ == 0) {
    std::fill(touch_stamp_.begin(), touch_stamp_.end(), 0);
    stamp_ = 1;
  }
  std::vector<std::pair<Cell, InflationState>> touched;
  auto adjust = [&](const Cell& n, CellClass before, CellClass after) {
    const std::size_t s = window_.slot(n);
    if (touch_stamp_[s] != stamp_) {
      touch_stamp_[s] = stamp_;
      touched.emplace_back(n, state_at(s));
    }
    if (before == CellClass::Occupied) --occ_count_[s];
    if (before == CellClass::Unknown) --unk_count_[s];
    if (after == CellClass::Occupied) ++occ_count_[s];
    if (after == CellClass::Unknown) ++unk_count_[s];
  };

  std::vector<Cell> changed;
  const Window next = prob.window();
  if (next != window_) {
    // Slide: vacated cells now count as Unknown for the cells that stayed.
    const Window old = window_;
    for (const CellDelta& d : deltas) {
      if (d.before == CellClass::Unknown) continue;
      for (const Cell& o : offsets_) {
        const Cell n = d.cell + o;
        if (next.contains(n) && old.contains(n)) adjust(n, d.before, CellClass::Unknown);
      }
    }
    window_ = next;
    for_each_cell_not_in(next, old, [&](const Cell& c) {
      recount(prob, c);
      changed.push_back(c);
    });
  } else {
    for (const CellDelta& d : deltas) {
      if (d.before == d.after) continue;
      for (const Cell& o : offsets_) {
        const Cell n = d.cell + o;
        if (window_.contains(n)) adjust(n, d.before, d.after);
      }
    }
  }
  for (const auto& [c, before] : touched) {
    if (state_at(window_.slot(c)) != before) changed.push_back(c);
  }
  return changed;
}

// ---------------------------------------------------------------- Frontiers

bool is_frontier(const ProbabilityMap& prob, const Cell& c) {
  if (!prob.in_window(c) || prob.classify(c) != CellClass::KnownFree) return false;
  for (int k = 0; k < 6; ++k) {
    const Cell n = face_neighbor(c, k);
    if (prob.in_window(n) && prob.classify(n) == CellClass::Unknown) return true;
  }
  return false;
}

namespace {
std::vector<std::uint8_t> frontier_sweep(const ProbabilityMap& prob, bool parallel) {
  const Window& w = prob.window();
  std::vector<std::uint8_t> out(w.cell_count(), 0);
  sweep_window(w, parallel, [&](const Cell& c) { out[w.slot(c)] = is_frontier(prob, c) ? 1 : 0; });
  return out;
}
}  // namespace

std::vector<std::uint8_t> recompute_frontiers(const ProbabilityMap& prob) { return frontier_sweep(prob, true); }

namespace serial {
std::vector<std::uint8_t> recompute_frontiers(const ProbabilityMap& prob) { return frontier_sweep(prob, false); }
}  // namespace serial

FrontierSet::FrontierSet(const ProbabilityMap& prob) : window_(prob.window()), flag_(recompute_frontiers(prob)) {
  count_ = static_cast<std::size_t>(std::count(flag_.begin(), flag_.end(), std::uint8_t{1}));
}

void FrontierSet::set_flag(std::size_t slot, bool on) {
  const std::uint8_t v = on ? 1 : 0;
  if (flag_[slot] == v) return;
  flag_[slot] = v;
  if (on) {
    ++count_;
  } else {
    --count_;
  }
}

void FrontierSet::evaluate(const ProbabilityMap& prob, const Cell& c) {
  if (window_.contains(c)) set_flag(window_.slot(c), is_frontier(prob, c));
}

void FrontierSet::update(const ProbabilityMap& prob, const std::vector<CellDelta>& deltas) {
  const Window next = prob.window();
  if (next != window_) {
    const Window old = window_;
    window_ = next;
    // Entering cells reuse the vacated slots; they are Unknown, so never frontiers.
    for_each_cell_not_in(next, old, [&](const Cell& c) { set_flag(window_.slot(c), false); });
    auto touch_border = [&](const Cell& c) {
      for (int k = 0; k < 6; ++k) {
        const Cell n = face_neighbor(c, k);
        if (next.contains(n) && old.contains(n)) evaluate(prob, n);
      }
    };
    for_each_cell_not_in(old, next, touch_border);
    for_each_cell_not_in(next, old, touch_border);
    return;
  }
  for (const CellDelta& d : deltas) {
    evaluate(prob, d.cell);
    for (int k = 0; k < 6; ++k) evaluate(prob, face_neighbor(d.cell, k));
  }
}

std::vector<Cell> FrontierSet::cells() const {
  std::vector<Cell> out;
  out.reserve(count_);
  for_each_cell(window_, [&](const Cell& c) {
    if (flag_[window_.slot(c)]) out.push_back(c);
  });
  std::sort(out.begin(), out.end(), cell_less);
  return out;
}

// ---------------------------------------------------------------- GlobalMap

GlobalMap::GlobalMap(double resolution, double extent, const Vec3& center) : resolution_(resolution), center_(center) {
  if (!(resolution > 0.0) || !(extent > 0.0)) throw std::invalid_argument("GlobalMap: resolution and extent must be positive");
  n_ = static_cast<int>(std::ceil(extent / resolution - 1e-9));
  origin_ = insp::cell_of(center, resolution) - Cell::Constant(n_ / 2);
  const std::size_t total = static_cast<std::size_t>(n_) * static_cast<std::size_t>(n_) * static_cast<std::size_t>(n_);
  bits_.assign((total + 63) / 64, 0);
}

std::size_t GlobalMap::index(const Cell& c) const {
  const Cell l = c - origin_;
  return (static_cast<std::size_t>(l.x()) * static_cast<std::size_t>(n_) + static_cast<std::size_t>(l.y())) *
             static_cast<std::size_t>(n_) +
         static_cast<std::size_t>(l.z());
}

bool GlobalMap::is_free(const Cell& c) const {
  if (!in_bounds(c)) return false;
  const std::size_t i = index(c);
  return (bits_[i / 64] >> (i % 64)) & 1U;
}

void GlobalMap::set_free(const Cell& c) {
  if (!in_bounds(c)) throw std::out_of_range("GlobalMap::set_free: cell outside the global extent");
  const std::size_t i = index(c);
  const std::uint64_t mask = std::uint64_t{1} << (i % 64);
  if (!(bits_[i / 64] & mask)) {
    bits_[i / 64] |= mask;
    ++free_count_;
  }
}

std::size_t update_global(GlobalMap& global, const ProbabilityMap& prob) {
  const double rf = prob.resolution();
  const double rc = global.resolution();
  const Window& w = prob.window();
  const Vec3 lo = w.origin.cast<double>() * rf;
  const Vec3 hi = (w.origin.cast<double>() + Vec3::Constant(w.size)) * rf;
  // Only coarse cells lying entirely inside the fine window can qualify.
  Cell c0, c1;
  for (int a = 0; a < 3; ++a) {
    c0[a] = std::max(static_cast<int>(std::ceil(lo[a] / rc - 1e-9)), global.origin()[a]);
    c1[a] = std::min(static_cast<int>(std::floor(hi[a] / rc + 1e-9)) - 1, global.origin()[a] + global.cells_per_axis() - 1);
  }
  if ((c1.array() < c0.array()).any()) return 0;

  auto fine_range = [&](int cc, int& f0, int& f1) {
    f0 = static_cast<int>(std::floor(cc * rc / rf + 1e-9));
    f1 = static_cast<int>(std::ceil((cc + 1) * rc / rf - 1e-9)) - 1;
  };
  const int nx = c1.x() - c0.x() + 1, ny = c1.y() - c0.y() + 1, nz = c1.z() - c0.z() + 1;
  std::vector<std::uint8_t> freed(static_cast<std::size_t>(nx) * ny * nz, 0);
#pragma omp parallel for schedule(dynamic, 1)
  for (int i = 0; i < nx; ++i) {
    for (int j = 0; j < ny; ++j) {
      for (int k = 0; k < nz; ++k) {
        const Cell cc(c0.x() + i, c0.y() + j, c0.z() + k);
        if (global.is_free(cc)) continue;
        Cell f0, f1;
        for (int a = 0; a < 3; ++a) fine_range(cc[a], f0[a], f1[a]);
        bool all_free = true;
        for (int x = f0.x(); x <= f1.x() && all_free; ++x)
          for (int y = f0.y(); y <= f1.y() && all_free; ++y)
            for (int z = f0.z(); z <= f1.z() && all_free; ++z) {
              const Cell f(x, y, z);
              all_free = prob.in_window(f) && prob.classify(f) == CellClass::KnownFree;
            }
        if (all_free) freed[(static_cast<std::size_t>(i) * ny + j) * nz + k] = 1;
      }
    }
  }
  std::size_t count = 0;
  for (int i = 0; i < nx; ++i)
    for (int j = 0; j < ny; ++j)
      for (int k = 0; k < nz; ++k)
        if (freed[(static_cast<std::size_t>(i) * ny + j) * nz + k]) {
          global.set_free(Cell(c0.x() + i, c0.y() + j, c0.z() + k));
          ++count;
        }
  return count;
}

// ---------------------------------------------------------------- LocalMap

LocalMap::LocalMap(const MapConfig& config, const Vec3& center)
    : config_(config),
      prob_(config.resolution, config.window_size, center, config.log_odds),
      inflated_(prob_, config.inflation_radius, config.unknown_inflation),
      frontiers_(prob_) {}

MapUpdate LocalMap::integrate(const lidar::ScanFrame& world_frame) {
  MapUpdate u;
  u.deltas = prob_.integrate_scan(world_frame, config_.carve_cap);
  u.inflation_changes = inflated_.update(prob_, u.deltas);
  frontiers_.update(prob_, u.deltas);
  return u;
}

MapUpdate LocalMap::slide_to(const Vec3& center) {
  MapUpdate u;
  u.deltas = prob_.slide_window(center);
  u.inflation_changes = inflated_.update(prob_, u.deltas);
  frontiers_.update(prob_, u.deltas);
  return u;
}

// ---------------------------------------------------------------- Snapshots

namespace {

static_assert(std::endian::native == std::endian::little, "snapshot I/O assumes a little-endian host");

constexpr char kMagic[8] = {'I', 'N', 'S', 'P', 'M', 'A', 'P', '1'};

template <class T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw std::runtime_error("map snapshot: truncated stream");
  return v;
}

template <class StateAt>
MapSnapshot window_snapshot(SnapshotKind kind, const Window& w, double res, StateAt&& state_at) {
  MapSnapshot s;
  s.kind = kind;
  s.resolution = res;
  s.origin = w.origin;
  s.dims = Cell::Constant(w.size);
  s.center = (w.origin.cast<double>() + Vec3::Constant(0.5 * w.size)) * res;
  s.states.resize(w.cell_count());
  std::size_t i = 0;
  for (int z = 0; z < w.size; ++z)
    for (int y = 0; y < w.size; ++y)
      for (int x = 0; x < w.size; ++x) s.states[i++] = state_at(w.origin + Cell(x, y, z));
  return s;
}

}  // namespace

std::uint8_t MapSnapshot::at(const Cell& c) const {
  const Cell l = c - origin;
  if ((l.array() < 0).any() || (l.array() >= dims.array()).any()) throw OutOfWindow("MapSnapshot::at: cell outside snapshot");
  return states[(static_cast<std::size_t>(l.z()) * dims.y() + l.y()) * dims.x() + l.x()];
}

MapSnapshot snapshot(const ProbabilityMap& prob) {
  return window_snapshot(SnapshotKind::Probability, prob.window(), prob.resolution(),
                         [&](const Cell& c) { return static_cast<std::uint8_t>(prob.classify(c)); });
}

MapSnapshot snapshot(const InflatedMap& inflated) {
  return window_snapshot(SnapshotKind::Inflated, inflated.window(), inflated.resolution(),
                         [&](const Cell& c) { return static_cast<std::uint8_t>(inflated.state(c)); });
}

MapSnapshot snapshot(const GlobalMap& global) {
  MapSnapshot s;
  s.kind = SnapshotKind::Global;
  s.resolution = global.resolution();
  s.origin = global.origin();
  s.dims = Cell::Constant(global.cells_per_axis());
  s.center = global.center();
  const int n = global.cells_per_axis();
  s.states.resize(static_cast<std::size_t>(n) * n * n);
  std::size_t i = 0;
  for (int z = 0; z < n; ++z)
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) s.states[i++] = global.is_free(global.origin() + Cell(x, y, z)) ? 1 : 0;
  return s;
}

GlobalMap global_from_snapshot(const MapSnapshot& snap) {
  if (snap.kind != SnapshotKind::Global) throw std::invalid_argument("snapshot is not a global map");
  const int n = snap.dims.x();
  GlobalMap g(snap.resolution, n * snap.resolution, snap.center);
  if (g.origin() != snap.origin || g.cells_per_axis() != n || snap.dims != Cell::Constant(n)) {
    throw std::invalid_argument("global map snapshot header is inconsistent");
  }
  std::size_t i = 0;
  for (int z = 0; z < n; ++z)
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x)
        if (snap.states[i++]) g.set_free(snap.origin + Cell(x, y, z));
  return g;
}

void write_snapshot(std::ostream& out, const MapSnapshot& snap) {
  out.write(kMagic, sizeof(kMagic));
  put<std::uint8_t>(out, static_cast<std::uint8_t>(snap.kind));
  put<double>(out, snap.resolution);
  for (int a = 0; a < 3; ++a) put<double>(out, snap.center[a]);
  for (int a = 0; a < 3; ++a) put<std::int32_t>(out, snap.origin[a]);
  for (int a = 0; a < 3; ++a) put<std::int32_t>(out, snap.dims[a]);

  std::vector<std::pair<std::uint8_t, std::uint32_t>> runs;
  for (std::uint8_t v : snap.states) {
    if (!runs.empty() && runs.back().first == v && runs.back().second < std::numeric_limits<std::uint32_t>::max()) {
      ++runs.back().second;
    } else {
      runs.emplace_back(v, 1);
    }
  }
  put<std::uint32_t>(out, static_cast<std::uint32_t>(runs.size()));
  for (const auto& [v, n] : runs) {
    put<std::uint8_t>(out, v);
    put<std::uint32_t>(out, n);
  }
}

MapSnapshot read_snapshot(std::istream& in) {
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw std::runtime_error("map snapshot: bad magic");
  MapSnapshot s;
  const auto kind = get<std::uint8_t>(in);
  if (kind > 2) throw std::runtime_error("map snapshot: unknown kind");
  s.kind = static_cast<SnapshotKind>(kind);
  s.resolution = get<double>(in);
  for (int a = 0; a < 3; ++a) s.center[a] = get<double>(in);
  for (int a = 0; a < 3; ++a) s.origin[a] = get<std::int32_t>(in);
  for (int a = 0; a < 3; ++a) s.dims[a] = get<std::int32_t>(in);
  if ((s.dims.array() < 0).any()) throw std::runtime_error("map snapshot: negative dimensions");
  const std::size_t total = static_cast<std::size_t>(s.dims.x()) * s.dims.y() * s.dims.z();
  const auto run_count = get<std::uint32_t>(in);
  s.states.reserve(total);
  for (std::uint32_t r = 0; r < run_count; ++r) {
    const auto v = get<std::uint8_t>(in);
    const auto n = get<std::uint32_t>(in);
    if (s.states.size() + n > total) throw std::runtime_error("map snapshot: runs exceed cell count");
    s.states.insert(s.states.end(), n, v);
  }
  if (s.states.size() != total) throw std::runtime_error("map snapshot: runs do not cover every cell");
  return s;
}

void save_snapshot(const MapSnapshot& snap, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write map snapshot " + path.string());
  write_snapshot(out, snap);
}

MapSnapshot load_snapshot(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open map snapshot " + path.string());
  return read_snapshot(in);
}

}  // namespace insp::mapping
