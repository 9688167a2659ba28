#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace insp {

using Vec3 = Eigen::Vector3d;
using Vec3f = Eigen::Vector3f;
using Mat3 = Eigen::Matrix3d;

/// Integer voxel coordinate. Cells are global: cell (i,j,k) spans
/// [i*res, (i+1)*res) on each axis, independent of any map window.
using Cell = Eigen::Vector3i;

inline constexpr double kPi = std::numbers::pi;

/// Wraps an angle to [-pi, pi).
inline double wrap_angle(double a) {
  double w = std::fmod(a + kPi, 2.0 * kPi);
  if (w < 0.0) w += 2.0 * kPi;
  w -= kPi;
  // fmod can land exactly on +pi after the shift for inputs like -pi - 2pi*k
  if (w >= kPi) w -= 2.0 * kPi;
  return w;
}

inline Mat3 yaw_rotation(double yaw) {
  return Eigen::AngleAxisd(yaw, Vec3::UnitZ()).toRotationMatrix();
}

inline Cell cell_of(const Vec3& p, double resolution) {
  return Cell(static_cast<int>(std::floor(p.x() / resolution)),
              static_cast<int>(std::floor(p.y() / resolution)),
              static_cast<int>(std::floor(p.z() / resolution)));
}

inline Vec3 cell_center(const Cell& c, double resolution) {
  return (c.cast<double>() + Vec3::Constant(0.5)) * resolution;
}

/// Lexicographic order on cells, used for deterministic tie-breaking.
inline bool cell_less(const Cell& a, const Cell& b) {
  if (a.x() != b.x()) return a.x() < b.x();
  if (a.y() != b.y()) return a.y() < b.y();
  return a.z() < b.z();
}

struct CellHash {
  std::size_t operator()(const Cell& c) const noexcept {
    std::size_t h = static_cast<std::uint32_t>(c.x());
    h = h * 0x9E3779B97F4A7C15ULL ^ static_cast<std::uint32_t>(c.y());
    h = h * 0x9E3779B97F4A7C15ULL ^ static_cast<std::uint32_t>(c.z());
    return h ^ (h >> 29);
  }
};

struct CellEqual {
  bool operator()(const Cell& a, const Cell& b) const noexcept { return a == b; }
};

/// Closed axis-aligned box in meters.
struct Box {
  Vec3 min = Vec3::Zero();
  Vec3 max = Vec3::Zero();

  bool valid() const { return (min.array() < max.array()).all(); }
  bool contains(const Vec3& p, double tol = 0.0) const {
    return (p.array() >= min.array() - tol).all() && (p.array() <= max.array() + tol).all();
  }
  bool contains(const Box& o) const {
    return (o.min.array() >= min.array()).all() && (o.max.array() <= max.array()).all();
  }
  /// True when the two boxes share a region of positive volume.
  bool overlaps_interior(const Box& o) const {
    return (min.array().max(o.min.array()) < max.array().min(o.max.array())).all();
  }
  Vec3 center() const { return 0.5 * (min + max); }
  Vec3 extent() const { return max - min; }

  friend bool operator==(const Box&, const Box&) = default;
};

/// Proper rigid transform x -> R x + t.
struct RigidTransform {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static RigidTransform identity() { return {}; }
  static RigidTransform from_yaw(double yaw, const Vec3& t) { return {yaw_rotation(yaw), t}; }

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
  Vec3 rotate(const Vec3& v) const { return rotation * v; }

  RigidTransform inverse() const {
    Mat3 rt = rotation.transpose();
    return {rt, -(rt * translation)};
  }
  RigidTransform operator*(const RigidTransform& o) const {
    return {rotation * o.rotation, rotation * o.translation + translation};
  }

  /// Heading of the rotated body x axis; exact for yaw-only rotations.
  double yaw() const { return std::atan2(rotation(1, 0), rotation(0, 0)); }

  /// Projects the rotation back onto SO(3).
  void orthonormalize();
  double orthonormality_error() const {
    return (rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff();
  }
};

inline void RigidTransform::orthonormalize() {
  Eigen::Quaterniond q(rotation);
  q.normalize();
  rotation = q.toRotationMatrix();
}

/// Rotation angle of R in radians.
inline double rotation_angle(const Mat3& r) {
  double c = std::clamp((r.trace() - 1.0) * 0.5, -1.0, 1.0);
  return std::acos(c);
}

}  // namespace insp
