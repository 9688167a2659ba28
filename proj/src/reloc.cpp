#include "insp/reloc.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <unordered_map>

#include <fmt/core.h>

namespace insp::reloc {

static_assert(std::endian::native == std::endian::little, "binary I/O assumes a little-endian host");

std::vector<Vec3> voxel_downsample(const std::vector<Vec3>& points, double voxel) {
  if (!(voxel > 0.0)) throw RelocError(ErrorKind::InvalidInput, "voxel_downsample: voxel must be positive");
  std::unordered_map<Cell, std::size_t, CellHash, CellEqual> best;
  best.reserve(points.size());
  auto lex_less = [](const Vec3& a, const Vec3& b) {
    return std::lexicographical_compare(a.data(), a.data() + 3, b.data(), b.data() + 3);
  };
  for (std::size_t i = 0; i < points.size(); ++i) {
    const Cell c = cell_of(points[i], voxel);
    auto [it, inserted] = best.try_emplace(c, i);
    if (inserted) continue;
    const Vec3 centre = cell_center(c, voxel);
    const double di = (points[i] - centre).squaredNorm();
    const double dk = (points[it->second] - centre).squaredNorm();
    if (di < dk || (di == dk && lex_less(points[i], points[it->second]))) it->second = i;
  }
  std::vector<std::pair<Cell, std::size_t>> keyed(best.begin(), best.end());
  std::sort(keyed.begin(), keyed.end(), [](const auto& a, const auto& b) { return cell_less(a.first, b.first); });
  std::vector<Vec3> out;
  out.reserve(keyed.size());
  for (const auto& [c, i] : keyed) out.push_back(points[i]);
  return out;
}

NormalEstimate estimate_normals(const std::vector<Vec3>& points, int k, const Vec3& viewpoint) {
  if (k < 3) throw RelocError(ErrorKind::InvalidInput, "estimate_normals: k must be >= 3");
  if (points.size() < static_cast<std::size_t>(k)) {
    throw RelocError(ErrorKind::TooFewPoints,
                     fmt::format("estimate_normals: {} points, need at least {}", points.size(), k));
  }
  const KdTree tree(points);
  NormalEstimate out;
  out.normals.assign(points.size(), Vec3::Zero());
  out.degenerate.assign(points.size(), 0);
  const auto n = static_cast<std::int64_t>(points.size());
#pragma omp parallel for schedule(dynamic, 256)
  for (std::int64_t i = 0; i < n; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    const auto nn = tree.knn(points[idx], k);
    Vec3 mean = Vec3::Zero();
    for (int j : nn) mean += points[std::size_t(j)];
    mean /= static_cast<double>(nn.size());
    Mat3 cov = Mat3::Zero();
    for (int j : nn) {
      const Vec3 d = points[std::size_t(j)] - mean;
      cov += d * d.transpose();
    }
    const Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
    const Vec3 ev = eig.eigenvalues();  // ascending
    if (!(ev[2] > 0.0) || ev[1] <= 1e-8 * ev[2]) {
      out.degenerate[idx] = 1;
      continue;
    }
    Vec3 normal = eig.eigenvectors().col(0).normalized();
    const double facing = normal.dot(viewpoint - points[idx]);
    if (facing < 0.0) {
      normal = -normal;
    } else if (facing == 0.0) {
      // Viewpoint in the tangent plane: fix the sign by the first non-zero component.
      for (int a = 0; a < 3; ++a) {
        if (normal[a] != 0.0) {
          if (normal[a] < 0.0) normal = -normal;
          break;
        }
      }
    }
    out.normals[idx] = normal;
  }
  return out;
}

AnchorResult accumulate_anchor(const std::vector<lidar::ScanFrame>& frames, double duration,
                               const AnchorConfig& config) {
  if (frames.empty()) throw RelocError(ErrorKind::InvalidInput, "accumulate_anchor: no frames");
  const auto& ref = frames.front();
  for (const auto& f : frames) {
    if ((f.sensor_position - ref.sensor_position).norm() > config.pose_tolerance ||
        std::abs(wrap_angle(f.sensor_yaw - ref.sensor_yaw)) > config.pose_tolerance) {
      throw RelocError(ErrorKind::MovingPose,
                       fmt::format("accumulate_anchor: frame at t={} was taken from a different pose", f.stamp));
    }
  }
  AnchorResult result;
  if (duration + 1e-9 < config.accumulation_time) {
    result.warnings.push_back(fmt::format("anchor accumulated over {:.2f} s, below the configured {:.2f} s; map is sparse",
                                          duration, config.accumulation_time));
  }
  std::vector<Vec3> raw;
  for (const auto& f : frames) raw.insert(raw.end(), f.returns.begin(), f.returns.end());
  result.raw_points = raw.size();

  const auto pts = voxel_downsample(raw, config.voxel);
  const auto normals = estimate_normals(pts, config.normal_k, ref.sensor_position);
  result.map.voxel = config.voxel;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (normals.degenerate[i]) {
      ++result.degenerate_dropped;
      continue;
    }
    result.map.points.push_back(pts[i]);
    result.map.normals.push_back(normals.normals[i]);
  }
  return result;
}

void quantize(AnchorMap& map) {
  for (auto* v : {&map.points, &map.normals})
    // Flat scalar loop: GCC 11 mis-vectorizes the per-Vec3 form and skips x, y in the tail.
    if (!v->empty()) {
      double* d = v->front().data();
      for (std::size_t i = 0; i < 3 * v->size(); ++i) d[i] = static_cast<double>(static_cast<float>(d[i]));
    }
}

void save_anchor(const AnchorMap& map, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write anchor " + path.string());
  const auto count = static_cast<std::uint32_t>(map.points.size());
  out.write(reinterpret_cast<const char*>(&count), sizeof count);
  for (std::size_t i = 0; i < map.points.size(); ++i) {
    float rec[6];
    for (int a = 0; a < 3; ++a) {
      rec[a] = static_cast<float>(map.points[i][a]);
      rec[3 + a] = static_cast<float>(map.normals[i][a]);
    }
    out.write(reinterpret_cast<const char*>(rec), sizeof rec);
  }
  if (!out) throw std::runtime_error("failed writing anchor " + path.string());
}

AnchorMap load_anchor(const std::filesystem::path& path, double voxel) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open anchor " + path.string());
  std::uint32_t count = 0;
  in.read(reinterpret_cast<char*>(&count), sizeof count);
  if (!in) throw std::runtime_error("truncated anchor header in " + path.string());
  AnchorMap map;
  map.voxel = voxel;
  map.points.reserve(count);
  map.normals.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    float rec[6];
    in.read(reinterpret_cast<char*>(rec), sizeof rec);
    if (!in) throw std::runtime_error("truncated anchor record in " + path.string());
    map.points.emplace_back(rec[0], rec[1], rec[2]);
    map.normals.emplace_back(rec[3], rec[4], rec[5]);
  }
  return map;
}

namespace {

void match_one(const std::vector<Vec3>& source, const AnchorMap& anchor, const KdTree& tree, const RigidTransform& t,
               double max_dist, std::size_t i, Correspondences& out) {
  const Vec3 p = t.apply(source[i]);
  const int j = tree.nearest(p, max_dist);
  out.index[i] = j;
  out.distance[i] =
      j < 0 ? max_dist : std::abs(anchor.normals[std::size_t(j)].dot(p - anchor.points[std::size_t(j)]));
}

}  // namespace

Correspondences find_correspondences(const std::vector<Vec3>& source, const AnchorMap& anchor, const KdTree& tree,
                                     const RigidTransform& t, double max_dist) {
  Correspondences out;
  out.index.assign(source.size(), -1);
  out.distance.assign(source.size(), max_dist);
  const auto n = static_cast<std::int64_t>(source.size());
  int matched = 0;
#pragma omp parallel for schedule(static) reduction(+ : matched)
  for (std::int64_t i = 0; i < n; ++i) {
    match_one(source, anchor, tree, t, max_dist, static_cast<std::size_t>(i), out);
    if (out.index[static_cast<std::size_t>(i)] >= 0) ++matched;
  }
  out.matched = matched;
  return out;
}

namespace serial {

Correspondences find_correspondences(const std::vector<Vec3>& source, const AnchorMap& anchor, const KdTree& tree,
                                     const RigidTransform& t, double max_dist) {
  Correspondences out;
  out.index.assign(source.size(), -1);
  out.distance.assign(source.size(), max_dist);
  for (std::size_t i = 0; i < source.size(); ++i) {
    match_one(source, anchor, tree, t, max_dist, i, out);
    if (out.index[i] >= 0) ++out.matched;
  }
  return out;
}

}  // namespace serial

double alignment_error(const Correspondences& corr, double max_dist, double overlap) {
  if (corr.distance.empty()) return max_dist;
  std::vector<double> d = corr.distance;
  const auto keep = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::ceil(std::clamp(overlap, 0.0, 1.0) * static_cast<double>(d.size()))), 1, d.size());
  std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(keep - 1), d.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < keep; ++i) sum += d[i];
  return sum / static_cast<double>(keep);
}

namespace {

struct TranslationStep {
  Vec3 delta = Vec3::Zero();
  bool observable = false;
};

// One closed-form solve of sum ((R s + t - q) . n)^2 over the increment.
TranslationStep translation_step(const std::vector<Vec3>& source, const AnchorMap& anchor, const Correspondences& corr,
                                 const RigidTransform& t, double observability) {
  Mat3 a = Mat3::Zero();
  Vec3 b = Vec3::Zero();
  for (std::size_t i = 0; i < source.size(); ++i) {
    const int j = corr.index[i];
    if (j < 0) continue;
    const Vec3& n = anchor.normals[std::size_t(j)];
    const double r = n.dot(t.apply(source[i]) - anchor.points[std::size_t(j)]);
    a += n * n.transpose();
    b -= n * r;
  }
  const Eigen::SelfAdjointEigenSolver<Mat3> eig(a);
  const Vec3 ev = eig.eigenvalues();
  TranslationStep step;
  step.observable = ev[2] > 0.0 && ev[0] >= observability * ev[2];
  if (step.observable) step.delta = a.ldlt().solve(b);
  return step;
}

}  // namespace

TranslationResult align_translation_only(const std::vector<Vec3>& source, const AnchorIndex& index,
                                         const Mat3& rotation, const AlignConfig& config) {
  const AnchorMap& anchor = index.map();
  const double dmax = config.max_correspondence;
  RigidTransform t{rotation, Vec3::Zero()};

  TranslationResult best;
  auto corr = find_correspondences(source, anchor, index.tree(), t, dmax);
  best.error = alignment_error(corr, dmax, config.overlap);
  best.correspondences = corr.matched;
  auto score = [&] {
    corr = find_correspondences(source, anchor, index.tree(), t, dmax);
    const double err = alignment_error(corr, dmax, config.overlap);
    if (err <= best.error) {
      best.error = err;
      best.translation = t.translation;
      best.correspondences = corr.matched;
    }
  };

  // Capture stages: each wider radius gets a few steps and is scored once at its end.
  constexpr int kStepsPerStage = 3;
  constexpr double kStepTol = 1e-10;
  int steps = 0;
  bool first = true;
  auto take_step = [&](const Correspondences& use) -> bool {
    if (use.matched < config.min_correspondences) {
      if (first) {
        throw RelocError(ErrorKind::Starved, fmt::format("align_translation_only: {} correspondences, need {}",
                                                         use.matched, config.min_correspondences));
      }
      return false;
    }
    const auto step = translation_step(source, anchor, use, t, config.observability);
    if (!step.observable) {
      if (first) throw RelocError(ErrorKind::NotObservable, "align_translation_only: normal system is rank deficient");
      return false;
    }
    first = false;
    t.translation += step.delta;
    best.iterations = ++steps;
    return step.delta.norm() >= kStepTol;
  };

  for (double r : config.capture_schedule) {
    if (r <= dmax) continue;
    bool moved = false;
    for (int k = 0; k < kStepsPerStage && steps < config.max_iterations; ++k) {
      const auto use = find_correspondences(source, anchor, index.tree(), t, r);
      const bool more = take_step(use);
      moved = moved || more;
      if (!more) break;
    }
    if (moved) score();
  }
  // Final stage at the scoring radius: the scoring pass supplies the next step's pairs.
  while (steps < config.max_iterations) {
    if (!take_step(corr)) break;
    score();
  }
  return best;
}

CoarseResult coarse_align(const std::vector<Vec3>& source, const AnchorIndex& anchor, int yaw_samples,
                          const AlignConfig& config) {
  if (yaw_samples < 1) throw RelocError(ErrorKind::InvalidInput, "coarse_align: yaw_samples must be >= 1");
  CoarseResult out;
  out.sample_errors.assign(static_cast<std::size_t>(yaw_samples), std::numeric_limits<double>::infinity());
  bool any_observable = false;
  ErrorKind last_error = ErrorKind::NotObservable;
  for (int i = 0; i < yaw_samples; ++i) {
    const double yaw = 2.0 * kPi * i / yaw_samples;
    const Mat3 r = yaw_rotation(yaw);
    try {
      const auto t = align_translation_only(source, anchor, r, config);
      any_observable = true;
      out.sample_errors[std::size_t(i)] = t.error;
      if (out.best_sample < 0 || t.error < out.error) {
        out.best_sample = i;
        out.error = t.error;
        out.transform = {r, t.translation};
      }
    } catch (const RelocError& e) {
      if (e.kind() != ErrorKind::NotObservable && e.kind() != ErrorKind::Starved) throw;
      last_error = e.kind();
    }
  }
  if (!any_observable) {
    throw RelocError(last_error == ErrorKind::Starved ? ErrorKind::Starved : ErrorKind::NotObservable,
                     "coarse_align: no yaw sample produced an observable alignment");
  }
  return out;
}

const char* to_string(IcpStatus s) {
  switch (s) {
    case IcpStatus::Converged: return "converged";
    case IcpStatus::MaxIterations: return "max_iterations";
    case IcpStatus::Diverged: return "diverged";
  }
  return "?";
}

namespace {

using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;

// Gauss-Newton step [omega; delta] for p -> p + omega x p + delta.
Vec6 icp_step(const std::vector<Vec3>& source, const AnchorMap& anchor, const Correspondences& corr,
              const RigidTransform& t) {
  Mat6 h = Mat6::Zero();
  Vec6 g = Vec6::Zero();
  for (std::size_t i = 0; i < source.size(); ++i) {
    const int j = corr.index[i];
    if (j < 0) continue;
    const Vec3 p = t.apply(source[i]);
    const Vec3& n = anchor.normals[std::size_t(j)];
    Vec6 jac;
    jac << p.cross(n), n;
    const double r = n.dot(p - anchor.points[std::size_t(j)]);
    h.noalias() += jac * jac.transpose();
    g.noalias() += jac * r;
  }
  return -h.completeOrthogonalDecomposition().solve(g);
}

RigidTransform apply_step(const RigidTransform& t, const Vec6& x) {
  const Vec3 omega = x.head<3>();
  const double angle = omega.norm();
  const Mat3 r = angle > 0.0 ? Eigen::AngleAxisd(angle, omega / angle).toRotationMatrix() : Mat3::Identity();
  RigidTransform out{r * t.rotation, r * t.translation + x.tail<3>()};
  out.orthonormalize();
  return out;
}

}  // namespace

IcpResult icp_6dof(const std::vector<Vec3>& source, const AnchorIndex& index, const RigidTransform& init,
                   const IcpConfig& config) {
  const AnchorMap& anchor = index.map();
  const double dmax = config.max_correspondence;
  IcpResult out;
  out.transform = init;
  out.transform.orthonormalize();
  auto corr = find_correspondences(source, anchor, index.tree(), out.transform, dmax);
  if (corr.matched < config.min_correspondences) {
    throw RelocError(ErrorKind::Starved,
                     fmt::format("icp_6dof: {} correspondences, need {}", corr.matched, config.min_correspondences));
  }
  out.error = alignment_error(corr, dmax, config.overlap);
  out.error_history.push_back(out.error);
  out.status = IcpStatus::MaxIterations;

  double scale = 1.0;
  int rejected = 0;
  for (int it = 1; it <= config.max_iterations; ++it) {
    out.iterations = it;
    const Vec6 x = scale * icp_step(source, anchor, corr, out.transform);
    const RigidTransform next = apply_step(out.transform, x);
    out.orthonormality_history.push_back(next.orthonormality_error());
    auto next_corr = find_correspondences(source, anchor, index.tree(), next, dmax);
    const double next_err = alignment_error(next_corr, dmax, config.overlap);
    const bool small_update = x.norm() < config.update_tol;

    if (next_corr.matched >= config.min_correspondences && next_err <= out.error) {
      const double improvement = out.error - next_err;
      out.transform = next;
      out.error = next_err;
      corr = std::move(next_corr);
      out.error_history.push_back(next_err);
      scale = 1.0;
      rejected = 0;
      if (small_update || improvement < config.improvement_tol) {
        out.status = IcpStatus::Converged;
        break;
      }
    } else {
      if (small_update) {
        // Already at a stationary point; the rejected step was noise.
        out.status = IcpStatus::Converged;
        break;
      }
      scale *= 0.5;
      if (++rejected >= config.divergence_count) {
        out.status = IcpStatus::Diverged;
        break;
      }
    }
  }
  return out;
}

std::vector<Vec3> stride_subsample(const std::vector<Vec3>& points, std::size_t max_points) {
  if (max_points == 0 || points.size() <= max_points) return points;
  const std::size_t stride = (points.size() + max_points - 1) / max_points;
  std::vector<Vec3> out;
  out.reserve(points.size() / stride + 1);
  for (std::size_t i = 0; i < points.size(); i += stride) out.push_back(points[i]);
  return out;
}

RelocResult relocalize(const std::vector<Vec3>& source, const AnchorIndex& anchor, const RelocConfig& config) {
  RelocResult out;
  out.coarse = coarse_align(stride_subsample(source, config.coarse_max_points), anchor, config.yaw_samples,
                            config.align);
  out.icp = icp_6dof(stride_subsample(source, config.icp_max_points), anchor, out.coarse.transform, config.icp);
  out.transform = out.icp.transform;
  out.error = out.icp.error;
  out.accepted = out.error <= config.accept_error;
  return out;
}

}  // namespace insp::reloc
