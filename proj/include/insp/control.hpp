#pragma once

#include <stdexcept>
#include <vector>

#include "insp/dynamics.hpp"

namespace insp::control {

struct MpcWeights {
  double position = 10.0;
  double velocity = 1.0;
  double effort = 0.1;
};

/// Stage k runs from 0 (the current state) to horizon. `reference` and
/// `boxes` hold one entry per stage (horizon + 1); reference[0] is unused
/// and boxes[0] must contain the initial position.
struct MpcProblem {
  int horizon = 20;
  double dt = 0.1;
  Vec3 position = Vec3::Zero();
  Vec3 velocity = Vec3::Zero();
  std::vector<Vec3> reference;
  std::vector<Box> boxes;
  MpcWeights weights;
  double v_max = sim::QuadLimits{}.v_max;
  double a_max = sim::QuadLimits{}.a_max;

  /// Throws std::invalid_argument on a malformed problem or a start outside boxes[0].
  void validate() const;
};

struct MpcSolution {
  bool feasible = false;
  std::vector<Vec3> accel;      // horizon commands
  std::vector<Vec3> positions;  // horizon + 1 predicted positions
  std::vector<Vec3> velocities;
  double objective = 0.0;
  int iterations = 0;
  double kkt_residual = 0.0;

  /// The command to apply now: the first stage, or braking when infeasible.
  Vec3 command() const { return accel.empty() ? Vec3::Zero() : accel.front(); }
};

/// Corridor-constrained MPC. The model is the same semi-implicit Euler
/// double integrator as the simulator; axes decouple, so each axis is solved
/// as its own QP.
MpcSolution mpc_step(const MpcProblem& problem);

/// Per-axis deceleration toward zero velocity, at most a_max and without overshoot.
Vec3 braking_command(const Vec3& velocity, double a_max, double dt);

/// Predicted state sequence for a command sequence (semi-implicit Euler, no clamping).
void rollout(const Vec3& p0, const Vec3& v0, const std::vector<Vec3>& accel, double dt, std::vector<Vec3>& positions,
             std::vector<Vec3>& velocities);

/// Samples horizon + 1 references along a polyline, starting from the point
/// of the polyline closest to `position` and advancing `speed * dt` per stage.
std::vector<Vec3> sample_reference(const std::vector<Vec3>& path, const Vec3& position, double speed, int horizon,
                                   double dt);

/// Box index per stage. Stage 0 takes the first box containing the start.
/// Each later stage takes the earliest box (not before the previous stage's)
/// that contains its reference, or the nearest box when none does, and may
/// advance at most one box per stage. Returns an empty vector when no box
/// contains the start.
std::vector<int> assign_stage_boxes(const std::vector<Box>& corridor, const Vec3& start,
                                    const std::vector<Vec3>& reference);

/// Builds the constraint box of every stage. A stage that precedes a box
/// switch is confined to the intersection of both boxes, so the straight
/// segment between consecutive stages stays inside the corridor.
std::vector<Box> stage_constraint_boxes(const std::vector<Box>& corridor, const std::vector<int>& assignment);

struct RateCommand {
  double yaw_rate = 0.0;
  double gimbal_rate = 0.0;
};

/// Proportional yaw and gimbal tracking with rate clamping. Yaw takes the
/// shortest way around; rates never overshoot the target within one dt.
RateCommand track_yaw_gimbal(double yaw, double gimbal_pitch, double target_yaw, double target_pitch,
                             const sim::QuadLimits& limits, double dt, double gain = 4.0);

}  // namespace insp::control
