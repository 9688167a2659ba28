#include "insp/dynamics.hpp"

namespace insp::sim {

Vec3 clamp_accel(const Vec3& accel_cmd, double a_max) {
  return accel_cmd.cwiseMax(Vec3::Constant(-a_max)).cwiseMin(Vec3::Constant(a_max));
}

QuadState step_quad(const QuadState& state, const Vec3& accel_cmd, double yaw_rate_cmd, double gimbal_rate_cmd,
                    double dt, const QuadLimits& limits) {
  if (!(dt > 0.0)) throw std::invalid_argument("step_quad: dt must be positive");

  QuadState next = state;
  const Vec3 a = clamp_accel(accel_cmd, limits.a_max);
  Vec3 v = state.velocity + a * dt;
  const double speed = v.norm();
  if (speed > limits.v_max) v *= limits.v_max / speed;
  next.velocity = v;
  next.position = state.position + v * dt;

  const double yaw_rate = std::clamp(yaw_rate_cmd, -limits.yaw_rate_max, limits.yaw_rate_max);
  next.yaw = wrap_angle(state.yaw + yaw_rate * dt);
  const double gimbal_rate = std::clamp(gimbal_rate_cmd, -limits.gimbal_rate_max, limits.gimbal_rate_max);
  next.gimbal_pitch = std::clamp(state.gimbal_pitch + gimbal_rate * dt, kGimbalMin, kGimbalMax);
  next.time = state.time + dt;
  return next;
}

}  // namespace insp::sim
