#pragma once

#include <nlohmann/json.hpp>

#include "insp/geometry.hpp"

namespace insp::json_util {

inline nlohmann::json to_json(const Vec3& v) { return nlohmann::json::array({v.x(), v.y(), v.z()}); }

inline Vec3 vec3_from(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 3) throw nlohmann::json::type_error::create(302, "expected a 3-element array", &j);
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

inline nlohmann::json to_json(const Box& b) { return {{"min", to_json(b.min)}, {"max", to_json(b.max)}}; }

inline Box box_from(const nlohmann::json& j) { return {vec3_from(j.at("min")), vec3_from(j.at("max"))}; }

inline nlohmann::json to_json(const Cell& c) { return nlohmann::json::array({c.x(), c.y(), c.z()}); }

}  // namespace insp::json_util
