#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <stdexcept>
#include <vector>

#include "insp/geometry.hpp"
#include "insp/lidar.hpp"

namespace insp::mapping {

enum class CellClass : std::uint8_t { Unknown = 0, KnownFree = 1, Occupied = 2 };
enum class InflationState : std::uint8_t { NoInflation = 0, UnknownInflation = 1, OccupiedInflation = 2 };

const char* to_string(CellClass c);
const char* to_string(InflationState s);

struct LogOddsParams {
  float l_hit = 0.85f;
  float l_miss = -0.41f;
  float l_min = -2.0f;
  float l_max = 4.0f;
  float l_occ = 1.2f;
  float l_free = -0.8f;

  CellClass classify(float l) const {
    if (l >= l_occ) return CellClass::Occupied;
    if (l <= l_free) return CellClass::KnownFree;
    return CellClass::Unknown;
  }
};

struct CellDelta {
  Cell cell;
  CellClass before;
  CellClass after;
};

/// Cubic window of `size` cells per axis whose min corner is the global cell
/// `origin`. Storage is a ring buffer: a global cell always lives in slot
/// (c mod size), so moving the window never moves surviving data.
struct Window {
  Cell origin = Cell::Zero();
  int size = 0;

  static Window centered(const Vec3& center, double resolution, int size);

  bool contains(const Cell& c) const {
    return (c.array() >= origin.array()).all() && (c.array() < origin.array() + size).all();
  }
  std::size_t slot(const Cell& c) const {
    const auto m = [this](int v) { return static_cast<std::size_t>(((v % size) + size) % size); };
    return (m(c.x()) * static_cast<std::size_t>(size) + m(c.y())) * static_cast<std::size_t>(size) + m(c.z());
  }
  std::size_t cell_count() const {
    return static_cast<std::size_t>(size) * static_cast<std::size_t>(size) * static_cast<std::size_t>(size);
  }
  Cell max_cell() const { return origin + Cell::Constant(size - 1); }

  friend bool operator==(const Window&, const Window&) = default;
};

/// Visits every cell of `a` that is not in `b`, without scanning the overlap.
void for_each_cell_not_in(const Window& a, const Window& b, const std::function<void(const Cell&)>& fn);

/// Visits every cell of the window in x-major, z-fastest order.
void for_each_cell(const Window& w, const std::function<void(const Cell&)>& fn);

/// Cells crossed by the segment p0 -> p1, in traversal order (3D DDA).
/// `visit` returns false to stop early.
void traverse_segment(const Vec3& p0, const Vec3& p1, double resolution, const std::function<bool(const Cell&)>& visit);

class OutOfWindow : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// Sliding log-odds occupancy window.
class ProbabilityMap {
 public:
  ProbabilityMap(double resolution, int window_size, const Vec3& center, LogOddsParams params = {});

  double resolution() const { return resolution_; }
  const Window& window() const { return window_; }
  const LogOddsParams& params() const { return params_; }
  bool in_window(const Cell& c) const { return window_.contains(c); }

  /// Throws OutOfWindow for cells outside the window.
  CellClass classify(const Cell& c) const;
  float log_odds(const Cell& c) const;
  /// Class of a cell, with anything outside the window reported as Unknown.
  CellClass class_or_unknown(const Cell& c) const {
    return window_.contains(c) ? params_.classify(log_odds_[window_.slot(c)]) : CellClass::Unknown;
  }

  /// Overwrites one cell (clamped). Returns the classification change, if any.
  std::vector<CellDelta> set_log_odds(const Cell& c, float value);

  /// Ray-casting update; returns cells whose classification changed.
  std::vector<CellDelta> integrate_scan(const lidar::ScanFrame& frame, double carve_cap);

  /// Recentres the window. Vacated cells are reset to log-odds 0 and reported
  /// as deltas (one per vacated cell, after = Unknown).
  std::vector<CellDelta> slide_window(const Vec3& new_center);

  Cell cell_of(const Vec3& p) const { return insp::cell_of(p, resolution_); }
  Vec3 center_of(const Cell& c) const { return cell_center(c, resolution_); }

 private:
  void touch(std::size_t slot, const Cell& c);
  void apply(std::size_t slot, float delta);

  double resolution_;
  Window window_;
  LogOddsParams params_;
  std::vector<float> log_odds_;
  // Per-frame bookkeeping for integrate_scan.
  std::vector<std::uint32_t> touch_stamp_;
  std::uint32_t frame_stamp_ = 0;
  std::vector<std::pair<Cell, CellClass>> touched_;
};

/// Configuration-space map paired with a ProbabilityMap. Each cell keeps
/// counts of Occupied and Unknown cells within the inflation radius; cells
/// outside the window count as Unknown.
class InflatedMap {
 public:
  InflatedMap(const ProbabilityMap& prob, double inflation_radius, bool unknown_inflation = true);

  const Window& window() const { return window_; }
  double resolution() const { return resolution_; }
  double inflation_radius() const { return radius_; }
  bool unknown_inflation() const { return unknown_inflation_; }
  const std::vector<Cell>& offsets() const { return offsets_; }

  InflationState state(const Cell& c) const;
  bool in_bounds(const Cell& c) const { return window_.contains(c); }
  bool traversable(const Cell& c) const {
    return window_.contains(c) && state_at(window_.slot(c)) == InflationState::NoInflation;
  }

  /// Incremental update from one batch of probability-map deltas. Returns
  /// cells whose inflation state changed (plus cells that entered the window).
  std::vector<Cell> update(const ProbabilityMap& prob, const std::vector<CellDelta>& deltas);

  Cell cell_of(const Vec3& p) const { return insp::cell_of(p, resolution_); }
  Vec3 center_of(const Cell& c) const { return cell_center(c, resolution_); }

 private:
  InflationState state_at(std::size_t slot) const {
    if (occ_count_[slot] > 0) return InflationState::OccupiedInflation;
    if (unknown_inflation_ && unk_count_[slot] > 0) return InflationState::UnknownInflation;
    return InflationState::NoInflation;
  }
  void recount(const ProbabilityMap& prob, const Cell& c);
  void shift_counts(const Cell& c, CellClass before, CellClass after, std::vector<Cell>& changed);

  double resolution_;
  double radius_;
  bool unknown_inflation_;
  Window window_;
  std::vector<Cell> offsets_;
  std::vector<std::uint16_t> occ_count_;
  std::vector<std::uint16_t> unk_count_;
  std::vector<std::uint32_t> touch_stamp_;
  std::uint32_t stamp_ = 0;
};

/// Integer offsets whose length is within `radius` (meters).
std::vector<Cell> ball_offsets(double radius, double resolution);

/// From-scratch inflation for every window cell, indexed by slot.
std::vector<InflationState> recompute_inflation(const ProbabilityMap& prob, double inflation_radius,
                                                bool unknown_inflation);

/// Frontier rule: Known Free with a face-adjacent Unknown neighbour inside the window.
bool is_frontier(const ProbabilityMap& prob, const Cell& c);

class FrontierSet {
 public:
  explicit FrontierSet(const ProbabilityMap& prob);

  bool contains(const Cell& c) const { return window_.contains(c) && flag_[window_.slot(c)] != 0; }
  std::size_t size() const { return count_; }
  /// Members in lexicographic order.
  std::vector<Cell> cells() const;

  void update(const ProbabilityMap& prob, const std::vector<CellDelta>& deltas);

 private:
  void evaluate(const ProbabilityMap& prob, const Cell& c);
  void set_flag(std::size_t slot, bool on);

  Window window_;
  std::vector<std::uint8_t> flag_;
  std::size_t count_ = 0;
};

/// From-scratch frontier membership flags, indexed by slot.
std::vector<std::uint8_t> recompute_frontiers(const ProbabilityMap& prob);

namespace serial {
std::vector<InflationState> recompute_inflation(const ProbabilityMap& prob, double inflation_radius,
                                                bool unknown_inflation);
std::vector<std::uint8_t> recompute_frontiers(const ProbabilityMap& prob);
}  // namespace serial

/// Static coarse Free/Occupied grid centred on p_init. Free is latched.
class GlobalMap {
 public:
  GlobalMap(double resolution = 0.5, double extent = 200.0, const Vec3& center = Vec3::Zero());

  double resolution() const { return resolution_; }
  const Cell& origin() const { return origin_; }
  int cells_per_axis() const { return n_; }
  Vec3 center() const { return center_; }

  bool in_bounds(const Cell& c) const {
    return (c.array() >= origin_.array()).all() && (c.array() < origin_.array() + n_).all();
  }
  bool is_free(const Cell& c) const;
  bool traversable(const Cell& c) const { return in_bounds(c) && is_free(c); }
  void set_free(const Cell& c);
  std::size_t free_count() const { return free_count_; }

  Cell cell_of(const Vec3& p) const { return insp::cell_of(p, resolution_); }
  Vec3 center_of(const Cell& c) const { return cell_center(c, resolution_); }

  friend bool operator==(const GlobalMap& a, const GlobalMap& b) {
    return a.resolution_ == b.resolution_ && a.origin_ == b.origin_ && a.n_ == b.n_ && a.bits_ == b.bits_;
  }

 private:
  std::size_t index(const Cell& c) const;

  double resolution_;
  int n_;
  Vec3 center_;
  Cell origin_;
  std::vector<std::uint64_t> bits_;
  std::size_t free_count_ = 0;
};

/// Marks coarse cells Free when every overlapping fine cell is inside the
/// window and Known Free. Returns the number of newly freed cells.
std::size_t update_global(GlobalMap& global, const ProbabilityMap& prob);

struct MapConfig {
  double resolution = 0.2;
  int window_size = 150;
  LogOddsParams log_odds;
  double inflation_radius = 0.4;
  bool unknown_inflation = true;
  double carve_cap = 15.0;
  double global_resolution = 0.5;
  double global_extent = 200.0;
};

struct MapUpdate {
  std::vector<CellDelta> deltas;
  std::vector<Cell> inflation_changes;
};

/// Probability map with its inflated map and frontier set kept in lockstep.
class LocalMap {
 public:
  LocalMap(const MapConfig& config, const Vec3& center);

  MapUpdate integrate(const lidar::ScanFrame& world_frame);
  MapUpdate slide_to(const Vec3& center);

  const MapConfig& config() const { return config_; }
  const ProbabilityMap& prob() const { return prob_; }
  const InflatedMap& inflated() const { return inflated_; }
  const FrontierSet& frontiers() const { return frontiers_; }

 private:
  MapConfig config_;
  ProbabilityMap prob_;
  InflatedMap inflated_;
  FrontierSet frontiers_;
};

// Snapshot export: header + run-length-encoded cell states.
enum class SnapshotKind : std::uint8_t { Probability = 0, Inflated = 1, Global = 2 };

struct MapSnapshot {
  SnapshotKind kind = SnapshotKind::Probability;
  double resolution = 0.0;
  Vec3 center = Vec3::Zero();
  Cell origin = Cell::Zero();
  Cell dims = Cell::Zero();
  std::vector<std::uint8_t> states;  // x-fastest, then y, then z

  std::uint8_t at(const Cell& c) const;
  friend bool operator==(const MapSnapshot&, const MapSnapshot&) = default;
};

MapSnapshot snapshot(const ProbabilityMap& prob);
MapSnapshot snapshot(const InflatedMap& inflated);
MapSnapshot snapshot(const GlobalMap& global);
GlobalMap global_from_snapshot(const MapSnapshot& snap);

void write_snapshot(std::ostream& out, const MapSnapshot& snap);
MapSnapshot read_snapshot(std::istream& in);
void save_snapshot(const MapSnapshot& snap, const std::filesystem::path& path);
MapSnapshot load_snapshot(const std::filesystem::path& path);

}  // namespace insp::mapping
