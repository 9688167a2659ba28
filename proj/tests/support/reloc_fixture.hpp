#pragma once

#include <random>
#include <vector>

#include "insp/reloc.hpp"

namespace insp::testing {

struct Surface {
  Vec3 origin, u, v;  // parallelogram origin + s*u + t*v, s,t in [0,1]
};

/// Floor, two walls and two boxes. The boxes break the corner's symmetry.
inline std::vector<Surface> three_plane_two_box() {
  std::vector<Surface> s{
      {Vec3(-6, -6, 0), Vec3(12, 0, 0), Vec3(0, 12, 0)},  // floor z = 0
      {Vec3(-6, -6, 0), Vec3(0, 12, 0), Vec3(0, 0, 4)},   // wall x = -6
      {Vec3(-6, -6, 0), Vec3(12, 0, 0), Vec3(0, 0, 4)},   // wall y = -6
  };
  auto add_box = [&](const Vec3& lo, const Vec3& hi) {
    const Vec3 d = hi - lo;
    s.push_back({lo, Vec3(d.x(), 0, 0), Vec3(0, 0, d.z())});
    s.push_back({Vec3(lo.x(), hi.y(), lo.z()), Vec3(d.x(), 0, 0), Vec3(0, 0, d.z())});
    s.push_back({lo, Vec3(0, d.y(), 0), Vec3(0, 0, d.z())});
    s.push_back({Vec3(hi.x(), lo.y(), lo.z()), Vec3(0, d.y(), 0), Vec3(0, 0, d.z())});
    s.push_back({Vec3(lo.x(), lo.y(), hi.z()), Vec3(d.x(), 0, 0), Vec3(0, d.y(), 0)});
  };
  add_box(Vec3(1, -3, 0), Vec3(2, -1, 1.5));
  add_box(Vec3(-3, 2, 0), Vec3(-1.5, 3, 2.5));
  return s;
}

/// Jittered grid samples with the given spacing.
inline std::vector<Vec3> sample_surfaces(const std::vector<Surface>& surfaces, double spacing, std::uint64_t seed,
                                         double jitter = 0.3) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  std::vector<Vec3> out;
  for (const auto& s : surfaces) {
    const int nu = std::max(1, int(s.u.norm() / spacing));
    const int nv = std::max(1, int(s.v.norm() / spacing));
    for (int i = 0; i <= nu; ++i) {
      for (int j = 0; j <= nv; ++j) {
        const double a = std::clamp((i + jitter * u(rng)) / nu, 0.0, 1.0);
        const double b = std::clamp((j + jitter * u(rng)) / nv, 0.0, 1.0);
        out.push_back(s.origin + a * s.u + b * s.v);
      }
    }
  }
  return out;
}

/// Downsampled anchor with estimated normals; degenerate points dropped.
inline reloc::AnchorMap make_anchor(const std::vector<Vec3>& pts, const Vec3& viewpoint, double voxel = 0.1) {
  reloc::AnchorMap map;
  map.voxel = voxel;
  const auto down = reloc::voxel_downsample(pts, voxel);
  const auto normals = reloc::estimate_normals(down, 10, viewpoint);
  for (std::size_t i = 0; i < down.size(); ++i) {
    if (normals.degenerate[i]) continue;
    map.points.push_back(down[i]);
    map.normals.push_back(normals.normals[i]);
  }
  return map;
}

inline std::vector<Vec3> transform_points(const std::vector<Vec3>& pts, const RigidTransform& t) {
  std::vector<Vec3> out;
  out.reserve(pts.size());
  for (const auto& p : pts) out.push_back(t.apply(p));
  return out;
}

}  // namespace insp::testing
