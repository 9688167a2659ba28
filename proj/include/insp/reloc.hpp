#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "insp/geometry.hpp"
#include "insp/kdtree.hpp"
#include "insp/lidar.hpp"

namespace insp::reloc {

enum class ErrorKind { InvalidInput, MovingPose, TooFewPoints, Starved, NotObservable };

class RelocError : public std::runtime_error {
 public:
  RelocError(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

/// Point cloud with unit normals, expressed in the world frame (origin at p_init).
struct AnchorMap {
  std::vector<Vec3> points;
  std::vector<Vec3> normals;
  double voxel = 0.1;

  std::size_t size() const { return points.size(); }
  friend bool operator==(const AnchorMap&, const AnchorMap&) = default;
};

struct AnchorConfig {
  double accumulation_time = 5.0;
  double voxel = 0.1;
  int normal_k = 10;
  double pose_tolerance = 1e-6;
};

struct AnchorResult {
  AnchorMap map;
  std::size_t raw_points = 0;
  std::size_t degenerate_dropped = 0;
  std::vector<std::string> warnings;
};

/// Keeps, per voxel, the point closest to the voxel centre (ties: smaller
/// coordinates first). Output is ordered by voxel index.
std::vector<Vec3> voxel_downsample(const std::vector<Vec3>& points, double voxel);

struct NormalEstimate {
  std::vector<Vec3> normals;
  std::vector<std::uint8_t> degenerate;  // rank < 2 neighbourhood
};

/// Smallest-eigenvalue eigenvector of each point's k-NN covariance, flipped to
/// face `viewpoint`. Degenerate normals are zero.
NormalEstimate estimate_normals(const std::vector<Vec3>& points, int k, const Vec3& viewpoint = Vec3::Zero());

/// Builds the anchor from frames taken at one pose. Points with degenerate
/// normals are left out of the map.
AnchorResult accumulate_anchor(const std::vector<lidar::ScanFrame>& frames, double duration,
                               const AnchorConfig& config = {});

/// Rounds every coordinate to float precision, i.e. to what the binary file can hold.
void quantize(AnchorMap& map);

/// Binary layout: u32 count, then count x (px py pz nx ny nz) as float32, little-endian.
void save_anchor(const AnchorMap& map, const std::filesystem::path& path);
AnchorMap load_anchor(const std::filesystem::path& path, double voxel = 0.1);

struct AlignConfig {
  double max_correspondence = 1.0;
  /// Correspondence radii tried before settling on max_correspondence.
  std::vector<double> capture_schedule{3.0, 2.0, 1.5};
  int max_iterations = 12;
  /// Fraction of source points kept (best first) when scoring an alignment.
  double overlap = 0.9;
  double observability = 1e-3;
  int min_correspondences = 10;
};

struct Correspondences {
  std::vector<int> index;       // anchor index per source point, -1 when none
  std::vector<double> distance; // |n . (p - q)| for matched points
  int matched = 0;
};

/// Nearest anchor point within max_dist for each transformed source point.
Correspondences find_correspondences(const std::vector<Vec3>& source, const AnchorMap& anchor, const KdTree& tree,
                                     const RigidTransform& t, double max_dist);

namespace serial {
Correspondences find_correspondences(const std::vector<Vec3>& source, const AnchorMap& anchor, const KdTree& tree,
                                     const RigidTransform& t, double max_dist);
}

/// Trimmed mean point-to-plane distance; unmatched points count as max_dist.
double alignment_error(const Correspondences& corr, double max_dist, double overlap);

/// Index over an anchor map, built once and shared by the alignment calls.
class AnchorIndex {
 public:
  explicit AnchorIndex(const AnchorMap& map) : map_(&map), tree_(map.points) {}
  const AnchorMap& map() const { return *map_; }
  const KdTree& tree() const { return tree_; }

 private:
  const AnchorMap* map_;
  KdTree tree_;
};

struct TranslationResult {
  Vec3 translation = Vec3::Zero();
  double error = 0.0;
  int correspondences = 0;
  int iterations = 0;
};

/// Point-to-plane translation for a fixed rotation. Each step is the closed-form
/// 3x3 solve; steps repeat with shrinking correspondence radii so offsets larger
/// than max_correspondence are captured. The best iterate (t = 0 included) wins.
TranslationResult align_translation_only(const std::vector<Vec3>& source, const AnchorIndex& anchor,
                                         const Mat3& rotation, const AlignConfig& config = {});

struct CoarseResult {
  RigidTransform transform;
  double error = 0.0;
  int best_sample = -1;
  std::vector<double> sample_errors;  // +inf for failed samples
};

/// Yaw grid 2*pi*i/n over [0, 2*pi); the lowest-error sample wins (ties: first).
CoarseResult coarse_align(const std::vector<Vec3>& source, const AnchorIndex& anchor, int yaw_samples,
                          const AlignConfig& config = {});

enum class IcpStatus { Converged, MaxIterations, Diverged };
const char* to_string(IcpStatus s);

struct IcpConfig {
  double max_correspondence = 1.0;
  int max_iterations = 50;
  double update_tol = 1e-4;
  double improvement_tol = 1e-6;
  int divergence_count = 3;
  double overlap = 0.9;
  int min_correspondences = 10;
};

struct IcpResult {
  RigidTransform transform;
  double error = 0.0;
  int iterations = 0;
  IcpStatus status = IcpStatus::Converged;
  std::vector<double> error_history;          // error after each accepted iteration, [0] = initial
  std::vector<double> orthonormality_history;  // per iteration
};

/// Point-to-plane ICP with small-angle linearisation. Steps that raise the
/// error are rejected and retried at half length.
IcpResult icp_6dof(const std::vector<Vec3>& source, const AnchorIndex& anchor, const RigidTransform& init,
                   const IcpConfig& config = {});

struct RelocConfig {
  int yaw_samples = 36;
  double accept_error = 0.1;
  std::size_t coarse_max_points = 500;
  std::size_t icp_max_points = 4000;
  AlignConfig align;
  IcpConfig icp;
};

struct RelocResult {
  RigidTransform transform;  // session frame -> anchor frame
  double error = 0.0;
  bool accepted = false;
  CoarseResult coarse;
  IcpResult icp;
};

/// Every ceil(n / max_points)-th point.
std::vector<Vec3> stride_subsample(const std::vector<Vec3>& points, std::size_t max_points);

/// coarse_align followed by icp_6dof; accepted when the final error is under the threshold.
RelocResult relocalize(const std::vector<Vec3>& source, const AnchorIndex& anchor, const RelocConfig& config = {});

}  // namespace insp::reloc
