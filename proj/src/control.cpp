#include "insp/control.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "insp/qp.hpp"

namespace insp::control {

void MpcProblem::validate() const {
  if (horizon < 2) throw std::invalid_argument("MpcProblem: horizon must be >= 2");
  if (!(dt > 0.0)) throw std::invalid_argument("MpcProblem: dt must be positive");
  if (!(v_max > 0.0) || !(a_max > 0.0)) throw std::invalid_argument("MpcProblem: limits must be positive");
  const auto stages = static_cast<std::size_t>(horizon) + 1;
  if (reference.size() != stages) throw std::invalid_argument("MpcProblem: need horizon + 1 reference positions");
  if (boxes.size() != stages) throw std::invalid_argument("MpcProblem: need horizon + 1 stage boxes");
  for (std::size_t k = 0; k < boxes.size(); ++k) {
    if (!boxes[k].valid()) throw std::invalid_argument("MpcProblem: stage box " + std::to_string(k) + " is empty");
  }
  if (!boxes[0].contains(position, 1e-9)) throw std::invalid_argument("MpcProblem: initial position outside the stage-0 box");
}

Vec3 braking_command(const Vec3& velocity, double a_max, double dt) {
  Vec3 a;
  for (int i = 0; i < 3; ++i) a[i] = -std::clamp(velocity[i] / dt, -a_max, a_max);
  return a;
}

void rollout(const Vec3& p0, const Vec3& v0, const std::vector<Vec3>& accel, double dt, std::vector<Vec3>& positions,
             std::vector<Vec3>& velocities) {
  positions.assign(1, p0);
  velocities.assign(1, v0);
  Vec3 p = p0, v = v0;
  for (const Vec3& a : accel) {
    v = v + a * dt;
    p = p + v * dt;
    positions.push_back(p);
    velocities.push_back(v);
  }
}

MpcSolution mpc_step(const MpcProblem& pr) {
  pr.validate();
  const int H = pr.horizon;
  const double dt = pr.dt;
  // Condensed model: v = v0 + Sv u, p = p0 + k dt v0 + Su u (stages 1..H).
  Eigen::MatrixXd Sv = Eigen::MatrixXd::Zero(H, H), Su = Eigen::MatrixXd::Zero(H, H);
  for (int k = 1; k <= H; ++k)
    for (int j = 0; j < k; ++j) {
      Sv(k - 1, j) = dt;
      Su(k - 1, j) = dt * dt * (k - j);
    }
  const auto& w = pr.weights;
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(H, H);
  qp::Problem q;
  q.Q = 2.0 * (w.position * Su.transpose() * Su + w.velocity * Sv.transpose() * Sv + w.effort * I);
  q.A.resize(6 * H, H);
  q.A << Su, -Su, Sv, -Sv, I, -I;
  q.b.resize(6 * H);

  MpcSolution sol;
  sol.accel.assign(static_cast<std::size_t>(H), Vec3::Zero());
  bool ok = true;
  for (int axis = 0; axis < 3 && ok; ++axis) {
    Eigen::VectorXd cp(H), cv(H), r(H), lo(H), hi(H);
    for (int k = 1; k <= H; ++k) {
      cp[k - 1] = pr.position[axis] + k * dt * pr.velocity[axis];
      cv[k - 1] = pr.velocity[axis];
      r[k - 1] = pr.reference[static_cast<std::size_t>(k)][axis];
      lo[k - 1] = pr.boxes[static_cast<std::size_t>(k)].min[axis];
      hi[k - 1] = pr.boxes[static_cast<std::size_t>(k)].max[axis];
    }
    q.c = 2.0 * (w.position * Su.transpose() * (cp - r) + w.velocity * Sv.transpose() * cv);
    const Eigen::VectorXd vmax = Eigen::VectorXd::Constant(H, pr.v_max);
    const Eigen::VectorXd amax = Eigen::VectorXd::Constant(H, pr.a_max);
    q.b << hi - cp, cp - lo, vmax - cv, vmax + cv, amax, amax;
    const qp::Result res = qp::solve(q);
    sol.iterations += res.iterations;
    sol.kkt_residual = std::max(sol.kkt_residual, res.kkt_residual);
    ok = res.converged;
    for (int k = 0; k < H; ++k) sol.accel[static_cast<std::size_t>(k)][axis] = res.x[k];
  }

  if (ok) {
    rollout(pr.position, pr.velocity, sol.accel, dt, sol.positions, sol.velocities);
    constexpr double tol = 1e-6;
    for (int k = 1; k <= H && ok; ++k) {
      const auto uk = static_cast<std::size_t>(k);
      ok = pr.boxes[uk].contains(sol.positions[uk], tol) &&
           sol.velocities[uk].cwiseAbs().maxCoeff() <= pr.v_max + tol &&
           sol.accel[uk - 1].cwiseAbs().maxCoeff() <= pr.a_max + tol;
    }
  }
  if (!ok) {
    MpcSolution brake;
    brake.feasible = false;
    brake.iterations = sol.iterations;
    brake.kkt_residual = sol.kkt_residual;
    brake.accel = {braking_command(pr.velocity, pr.a_max, dt)};
    return brake;
  }
  sol.feasible = true;
  for (int k = 1; k <= H; ++k) {
    const auto uk = static_cast<std::size_t>(k);
    sol.objective += w.position * (sol.positions[uk] - pr.reference[uk]).squaredNorm() +
                     w.velocity * sol.velocities[uk].squaredNorm() + w.effort * sol.accel[uk - 1].squaredNorm();
  }
  return sol;
}

std::vector<Vec3> sample_reference(const std::vector<Vec3>& path, const Vec3& position, double speed, int horizon,
                                   double dt) {
  const auto stages = static_cast<std::size_t>(horizon) + 1;
  if (path.empty()) return std::vector<Vec3>(stages, position);
  if (path.size() == 1) return std::vector<Vec3>(stages, path.front());

  std::vector<double> cumulative(path.size(), 0.0);
  for (std::size_t i = 1; i < path.size(); ++i) cumulative[i] = cumulative[i - 1] + (path[i] - path[i - 1]).norm();
  double best = std::numeric_limits<double>::infinity();
  double s0 = 0.0;
  for (std::size_t i = 0; i + 1 < path.size(); ++i) {
    const Vec3 ab = path[i + 1] - path[i];
    const double len2 = ab.squaredNorm();
    const double t = len2 > 0.0 ? std::clamp((position - path[i]).dot(ab) / len2, 0.0, 1.0) : 0.0;
    const double d = (path[i] + t * ab - position).norm();
    if (d < best) {
      best = d;
      s0 = cumulative[i] + t * std::sqrt(len2);
    }
  }
  auto point_at = [&](double s) {
    if (s >= cumulative.back()) return path.back();
    const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), s);
    const std::size_t i = static_cast<std::size_t>(it - cumulative.begin()) - 1;
    const double seg = cumulative[i + 1] - cumulative[i];
    const double t = seg > 0.0 ? (s - cumulative[i]) / seg : 0.0;
    return Vec3(path[i] + t * (path[i + 1] - path[i]));
  };
  std::vector<Vec3> refs;
  refs.reserve(stages);
  for (std::size_t k = 0; k < stages; ++k) refs.push_back(point_at(s0 + speed * dt * static_cast<double>(k)));
  return refs;
}

std::vector<int> assign_stage_boxes(const std::vector<Box>& corridor, const Vec3& start,
                                    const std::vector<Vec3>& reference) {
  int b0 = -1;
  for (std::size_t i = 0; i < corridor.size(); ++i) {
    if (corridor[i].contains(start, 1e-9)) {
      b0 = static_cast<int>(i);
      break;
    }
  }
  if (b0 < 0) return {};
  std::vector<int> out(reference.size(), b0);
  for (std::size_t k = 1; k < reference.size(); ++k) {
    const int prev = out[k - 1];
    int pick = prev;
    for (int j = prev; j < static_cast<int>(corridor.size()); ++j) {
      if (corridor[static_cast<std::size_t>(j)].contains(reference[k], 1e-9)) {
        pick = j;
        break;
      }
    }
    pick = std::min(pick, prev + 1);
    // Switching right after the current state needs the start to lie in the next box too.
    if (k == 1 && pick != prev && !corridor[static_cast<std::size_t>(pick)].contains(start, 1e-9)) pick = prev;
    out[k] = pick;
  }
  return out;
}

std::vector<Box> stage_constraint_boxes(const std::vector<Box>& corridor, const std::vector<int>& assignment) {
  std::vector<Box> out;
  out.reserve(assignment.size());
  for (std::size_t k = 0; k < assignment.size(); ++k) {
    Box b = corridor[static_cast<std::size_t>(assignment[k])];
    if (k > 0 && k + 1 < assignment.size() && assignment[k + 1] != assignment[k]) {
      const Box& n = corridor[static_cast<std::size_t>(assignment[k + 1])];
      b = {b.min.cwiseMax(n.min), b.max.cwiseMin(n.max)};
    }
    out.push_back(b);
  }
  return out;
}

RateCommand track_yaw_gimbal(double yaw, double gimbal_pitch, double target_yaw, double target_pitch,
                             const sim::QuadLimits& limits, double dt, double gain) {
  if (!(dt > 0.0)) throw std::invalid_argument("track_yaw_gimbal: dt must be positive");
  auto rate = [&](double err, double max_rate) {
    double r = std::clamp(gain * err, -max_rate, max_rate);
    if (std::abs(r * dt) > std::abs(err)) r = err / dt;
    return r;
  };
  RateCommand c;
  c.yaw_rate = rate(wrap_angle(target_yaw - yaw), limits.yaw_rate_max);
  const double pitch = std::clamp(target_pitch, sim::kGimbalMin, sim::kGimbalMax);
  c.gimbal_rate = rate(pitch - gimbal_pitch, limits.gimbal_rate_max);
  return c;
}

}  // namespace insp::control
