#include "insp/scene.hpp"

#include <fstream>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

#include "insp/json_util.hpp"

namespace insp::sim {

using nlohmann::json;

bool Scene::inside_obstacle(const Vec3& p) const {
  for (const auto& b : obstacles) {
    if (b.contains(p)) return true;
  }
  return false;
}

void validate_scene(const Scene& scene) {
  if (!scene.bounds.valid()) throw SceneError("scene bounds must satisfy min < max on every axis");
  for (std::size_t i = 0; i < scene.obstacles.size(); ++i) {
    const Box& b = scene.obstacles[i];
    const int idx = static_cast<int>(i);
    if (!b.valid()) {
      throw SceneError("obstacle " + std::to_string(i) + ": min must be < max on every axis", idx);
    }
    if (!scene.bounds.contains(b)) {
      throw SceneError("obstacle " + std::to_string(i) + " lies outside the scene bounds", idx);
    }
  }
}

Scene parse_scene(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw SceneError(std::string("scene parse failure: ") + e.what());
  }
  Scene s;
  try {
    const int version = doc.at("version").get<int>();
    if (version != kSceneFormatVersion) {
      throw SceneError("unsupported scene version " + std::to_string(version));
    }
    s.id = doc.at("id").get<std::string>();
    s.ground_height = doc.at("ground_height").get<double>();
    s.bounds = json_util::box_from(doc.at("bounds"));
    for (const auto& o : doc.at("obstacles")) s.obstacles.push_back(json_util::box_from(o));
  } catch (const json::exception& e) {
    throw SceneError(std::string("scene parse failure: ") + e.what());
  }
  validate_scene(s);
  return s;
}

Scene load_scene(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw SceneError("cannot open scene file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scene(ss.str());
}

std::string dump_scene(const Scene& scene) {
  json doc;
  doc["version"] = kSceneFormatVersion;
  doc["id"] = scene.id;
  doc["ground_height"] = scene.ground_height;
  doc["bounds"] = json_util::to_json(scene.bounds);
  doc["obstacles"] = json::array();
  for (const auto& b : scene.obstacles) doc["obstacles"].push_back(json_util::to_json(b));
  return doc.dump(2);
}

void save_scene(const Scene& scene, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw SceneError("cannot write scene file " + path.string());
  out << dump_scene(scene) << '\n';
}

std::optional<double> ray_box(const Box& box, const Vec3& origin, const Vec3& dir) {
  double t_enter = -std::numeric_limits<double>::infinity();
  double t_exit = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    if (dir[a] == 0.0) {
      if (origin[a] < box.min[a] || origin[a] > box.max[a]) return std::nullopt;
      continue;
    }
    const double inv = 1.0 / dir[a];
    double t0 = (box.min[a] - origin[a]) * inv;
    double t1 = (box.max[a] - origin[a]) * inv;
    if (t0 > t1) std::swap(t0, t1);
    t_enter = std::max(t_enter, t0);
    t_exit = std::min(t_exit, t1);
    if (t_enter > t_exit) return std::nullopt;
  }
  if (t_enter > 0.0) return t_enter;
  if (t_exit > 0.0) return t_exit;
  return std::nullopt;
}

std::optional<double> ray_hit(const Scene& scene, const Vec3& origin, const Vec3& dir, double max_range) {
  if (std::abs(dir.norm() - 1.0) > 1e-9) throw std::invalid_argument("ray_hit: direction must be unit length");
  if (!(max_range > 0.0)) throw std::invalid_argument("ray_hit: max_range must be positive");

  double best = std::numeric_limits<double>::infinity();
  if (dir.z() != 0.0) {
    const double t = (scene.ground_height - origin.z()) / dir.z();
    if (t > 0.0) best = t;
  }
  for (const auto& b : scene.obstacles) {
    if (auto t = ray_box(b, origin, dir); t && *t < best) best = *t;
  }
  if (best <= max_range) return best;
  return std::nullopt;
}

}  // namespace insp::sim
