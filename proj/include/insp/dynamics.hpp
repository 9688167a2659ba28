#pragma once

#include <stdexcept>

#include "insp/geometry.hpp"

namespace insp::sim {

struct QuadLimits {
  double v_max = 2.5;            // m/s
  double a_max = 6.0;            // m/s^2, per axis
  double yaw_rate_max = 1.5;     // rad/s
  double gimbal_rate_max = 2.0;  // rad/s

  bool valid() const { return v_max > 0 && a_max > 0 && yaw_rate_max > 0 && gimbal_rate_max > 0; }
};

inline constexpr double kGimbalMin = -kPi / 2.0;
inline constexpr double kGimbalMax = kPi / 2.0;

struct QuadState {
  Vec3 position = Vec3::Zero();
  Vec3 velocity = Vec3::Zero();
  double yaw = 0.0;           // [-pi, pi)
  double gimbal_pitch = 0.0;  // positive tilts the camera up
  double time = 0.0;

  friend bool operator==(const QuadState&, const QuadState&) = default;
};

/// Semi-implicit Euler step of a yaw-decoupled double integrator.
/// Commands beyond the limits are clamped, never rejected.
QuadState step_quad(const QuadState& state, const Vec3& accel_cmd, double yaw_rate_cmd, double gimbal_rate_cmd,
                    double dt, const QuadLimits& limits);

/// The acceleration actually applied for a command (per-axis clamp).
Vec3 clamp_accel(const Vec3& accel_cmd, double a_max);

}  // namespace insp::sim
