#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "insp/geometry.hpp"

namespace insp::sim {

/// Synthetic world: a ground plane plus axis-aligned box obstacles.
struct Scene {
  std::string id;
  double ground_height = 0.0;
  Box bounds;
  std::vector<Box> obstacles;

  /// Exact containment against obstacle boxes (closed boxes, no inflation).
  bool inside_obstacle(const Vec3& p) const;
};

class SceneError : public std::runtime_error {
 public:
  SceneError(const std::string& what, int obstacle_index = -1)
      : std::runtime_error(what), obstacle_index_(obstacle_index) {}
  int obstacle_index() const { return obstacle_index_; }

 private:
  int obstacle_index_;
};

inline constexpr int kSceneFormatVersion = 1;

/// Checks every Scene invariant; throws SceneError naming the first bad obstacle.
void validate_scene(const Scene& scene);

Scene parse_scene(const std::string& text);
Scene load_scene(const std::filesystem::path& path);
std::string dump_scene(const Scene& scene);
void save_scene(const Scene& scene, const std::filesystem::path& path);

/// Distance along a unit ray to the nearest obstacle face or the ground plane.
/// Returns nullopt for a no-return ray. Throws std::invalid_argument when
/// |dir| deviates from 1 by more than 1e-9 or max_range <= 0.
std::optional<double> ray_hit(const Scene& scene, const Vec3& origin, const Vec3& dir, double max_range);

/// Slab test against a single box; returns the smallest positive crossing distance.
std::optional<double> ray_box(const Box& box, const Vec3& origin, const Vec3& dir);

}  // namespace insp::sim
