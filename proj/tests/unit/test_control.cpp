#include <doctest.h>

#include <random>

#include "insp/control.hpp"
#include "insp/qp.hpp"

using namespace insp;
using namespace insp::control;

namespace {

MpcProblem basic_problem(const Vec3& p0, const Vec3& target, const Box& box) {
  MpcProblem pr;
  pr.position = p0;
  pr.reference.assign(static_cast<std::size_t>(pr.horizon) + 1, target);
  pr.boxes.assign(static_cast<std::size_t>(pr.horizon) + 1, box);
  return pr;
}

const Box kHuge{Vec3::Constant(-1e3), Vec3::Constant(1e3)};

}  // namespace

TEST_CASE("qp: matches exhaustive active-set enumeration on small problems") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0, 1);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 2, m = 4;
    Eigen::MatrixXd M(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) M(i, j) = g(rng);
    qp::Problem p;
    p.Q = M * M.transpose() + 0.5 * Eigen::MatrixXd::Identity(n, n);
    p.c = Eigen::VectorXd(n);
    for (int i = 0; i < n; ++i) p.c[i] = 3 * g(rng);
    p.A = Eigen::MatrixXd(m, n);
    p.b = Eigen::VectorXd(m);
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < n; ++j) p.A(i, j) = g(rng);
      p.b[i] = 1.0 + std::abs(g(rng));  // x = 0 is strictly feasible
    }
    const auto r = qp::solve(p);
    REQUIRE(r.converged);
    // Oracle: try every active set of size <= n, keep the best feasible KKT point.
    double best = std::numeric_limits<double>::infinity();
    for (int mask = 0; mask < (1 << m); ++mask) {
      std::vector<int> act;
      for (int i = 0; i < m; ++i)
        if (mask & (1 << i)) act.push_back(i);
      if (static_cast<int>(act.size()) > n) continue;
      const int k = static_cast<int>(act.size());
      Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n + k, n + k);
      Eigen::VectorXd rhs(n + k);
      K.topLeftCorner(n, n) = p.Q;
      rhs.head(n) = -p.c;
      for (int i = 0; i < k; ++i) {
        K.block(0, n + i, n, 1) = p.A.row(act[std::size_t(i)]).transpose();
        K.block(n + i, 0, 1, n) = p.A.row(act[std::size_t(i)]);
        rhs[n + i] = p.b[act[std::size_t(i)]];
      }
      const Eigen::VectorXd sol = K.fullPivLu().solve(rhs);
      if ((K * sol - rhs).norm() > 1e-8) continue;
      const Eigen::VectorXd x = sol.head(n);
      if (((p.A * x - p.b).array() > 1e-9).any()) continue;
      if (k && (sol.tail(k).array() < -1e-9).any()) continue;
      best = std::min(best, 0.5 * x.dot(p.Q * x) + p.c.dot(x));
    }
    REQUIRE(r.objective == doctest::Approx(best).epsilon(1e-7));
  }
}

TEST_CASE("mpc: stationary fixed point") {
  const auto sol = mpc_step(basic_problem(Vec3(1, 2, 3), Vec3(1, 2, 3), kHuge));
  REQUIRE(sol.feasible);
  for (const Vec3& a : sol.accel) CHECK(a.norm() < 1e-9);
  CHECK(sol.objective < 1e-12);
  CHECK(sol.kkt_residual <= 1e-6);
}

TEST_CASE("mpc: closed loop reaches a reference 1 m ahead within 3 s") {
  for (double sim_dt : {0.1, 0.01}) {
    sim::QuadState s;
    const Vec3 target(1, 0, 0);
    double reached_at = -1;
    while (s.time < 3.0 + 1e-9) {
      const auto sol = mpc_step([&] {
        auto pr = basic_problem(s.position, target, {Vec3(-2, -2, -2), Vec3(3, 2, 2)});
        pr.velocity = s.velocity;
        return pr;
      }());
      REQUIRE(sol.feasible);
      s = sim::step_quad(s, sol.command(), 0, 0, sim_dt, sim::QuadLimits{});
      if ((s.position - target).norm() <= 0.05 && reached_at < 0) reached_at = s.time;
    }
    CHECK(reached_at > 0);
    CHECK(reached_at <= 3.0);
    CHECK((s.position - target).norm() <= 0.05);
  }
}

TEST_CASE("mpc: precondition and malformed problems") {
  auto pr = basic_problem(Vec3(5, 0, 0), Vec3::Zero(), {Vec3(-1, -1, -1), Vec3(1, 1, 1)});
  CHECK_THROWS_AS(mpc_step(pr), std::invalid_argument);
  pr = basic_problem(Vec3::Zero(), Vec3::Zero(), kHuge);
  pr.reference.pop_back();
  CHECK_THROWS_AS(mpc_step(pr), std::invalid_argument);
}

TEST_CASE("mpc: infeasible start yields a braking command") {
  // Moving at 2.5 m/s toward a wall 0.05 m away: stopping needs ~0.52 m.
  auto pr = basic_problem(Vec3(0.95, 0, 0), Vec3(0.95, 0, 0), {Vec3(-1, -1, -1), Vec3(1, 1, 1)});
  pr.velocity = Vec3(2.5, 0, 0);
  const auto sol = mpc_step(pr);
  CHECK_FALSE(sol.feasible);
  CHECK(sol.command().x() == doctest::Approx(-6.0));
  CHECK((braking_command(Vec3(0.3, -0.2, 0), 6.0, 0.1) - Vec3(-3, 2, 0)).norm() < 1e-12);
}

TEST_CASE("property: feasible solutions respect boxes and limits; relaxing boxes never raises the objective") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(-1, 1);
  int feasible = 0;
  for (int trial = 0; trial < 50; ++trial) {
    MpcProblem pr;
    pr.position = Vec3(u(rng), u(rng), u(rng)) * 0.5;
    pr.velocity = Vec3(u(rng), u(rng), u(rng)) * 1.5;
    const Box tight{pr.position - Vec3(0.6 + 0.5 * u(rng), 0.7, 0.8), pr.position + Vec3(0.9, 0.6 + 0.4 * u(rng), 0.5)};
    const Vec3 target = pr.position + Vec3(u(rng), u(rng), u(rng)) * 3;
    pr.reference.assign(21, target);
    pr.boxes.assign(21, tight);
    const auto sol = mpc_step(pr);
    if (!sol.feasible) continue;
    ++feasible;
    for (int k = 1; k <= pr.horizon; ++k) {
      const auto uk = static_cast<std::size_t>(k);
      REQUIRE(tight.contains(sol.positions[uk], 1e-6));
      REQUIRE(sol.velocities[uk].cwiseAbs().maxCoeff() <= pr.v_max + 1e-6);
      REQUIRE(sol.accel[uk - 1].cwiseAbs().maxCoeff() <= pr.a_max + 1e-6);
    }
    REQUIRE(sol.kkt_residual <= 1e-6);
    MpcProblem relaxed = pr;
    for (auto& b : relaxed.boxes) b = {b.min - Vec3::Constant(1.0), b.max + Vec3::Constant(1.0)};
    const auto rs = mpc_step(relaxed);
    REQUIRE(rs.feasible);
    REQUIRE(rs.objective <= sol.objective + 1e-7);
  }
  CHECK(feasible >= 30);
}

TEST_CASE("sample_reference and stage box assignment") {
  const std::vector<Vec3> path{Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(1, 1, 0)};
  const auto refs = sample_reference(path, Vec3(0.5, 0.2, 0), 2.0, 20, 0.1);
  REQUIRE(refs.size() == 21);
  CHECK((refs[0] - Vec3(0.5, 0, 0)).norm() < 1e-12);
  CHECK((refs[1] - Vec3(0.7, 0, 0)).norm() < 1e-12);
  CHECK((refs[5] - Vec3(1, 0.5, 0)).norm() < 1e-12);
  CHECK(refs[20] == Vec3(1, 1, 0));

  const std::vector<Box> corridor{{Vec3(-0.2, -0.2, -0.2), Vec3(1.2, 0.2, 0.2)}, {Vec3(0.8, -0.2, -0.2), Vec3(1.2, 1.2, 0.2)}};
  const auto a = assign_stage_boxes(corridor, Vec3(0.5, 0.0, 0), refs);
  REQUIRE(a.size() == 21);
  CHECK(a[0] == 0);
  CHECK(a[20] == 1);
  for (std::size_t k = 1; k < a.size(); ++k) CHECK((a[k] == a[k - 1] || a[k] == a[k - 1] + 1));
  const auto boxes = stage_constraint_boxes(corridor, a);
  for (std::size_t k = 1; k + 1 < a.size(); ++k) {
    if (a[k + 1] != a[k]) {
      CHECK(boxes[k].min.x() == doctest::Approx(0.8));
      CHECK(boxes[k].max.y() == doctest::Approx(0.2));
    }
  }
  CHECK(assign_stage_boxes(corridor, Vec3(5, 5, 5), refs).empty());
}

TEST_CASE("track_yaw_gimbal") {
  const sim::QuadLimits lim;
  auto c = track_yaw_gimbal(0.3, 0.1, 0.3, 0.1, lim, 0.01);
  CHECK(c.yaw_rate == 0.0);
  CHECK(c.gimbal_rate == 0.0);
  // Raw error 3.2 rad exceeds pi, so the short way round is negative.
  CHECK(track_yaw_gimbal(-0.1, 0, 3.1, 0, lim, 0.01).yaw_rate < 0.0);
  CHECK(track_yaw_gimbal(0.0, 0, 3.0, 0, lim, 0.01).yaw_rate > 0.0);
  CHECK(track_yaw_gimbal(0.0, 0, 3.0, 0, lim, 0.01).yaw_rate == lim.yaw_rate_max);
  CHECK_THROWS(track_yaw_gimbal(0, 0, 0, 0, lim, 0.0));

  sim::QuadState s;
  s.yaw = 2.5;
  s.gimbal_pitch = 0.4;
  const double ty = -2.8, tp = -0.6;
  double prev_y = std::abs(wrap_angle(ty - s.yaw)), prev_p = std::abs(tp - s.gimbal_pitch);
  for (int i = 0; i < 2000 && (prev_y >= 1e-3 || prev_p >= 1e-3); ++i) {
    const auto r = track_yaw_gimbal(s.yaw, s.gimbal_pitch, ty, tp, lim, 0.01);
    s = sim::step_quad(s, Vec3::Zero(), r.yaw_rate, r.gimbal_rate, 0.01, lim);
    const double ey = std::abs(wrap_angle(ty - s.yaw)), ep = std::abs(tp - s.gimbal_pitch);
    if (prev_y >= 1e-3) REQUIRE(ey < prev_y);
    if (prev_p >= 1e-3) REQUIRE(ep < prev_p);
    prev_y = ey;
    prev_p = ep;
  }
  CHECK(prev_y < 1e-3);
  CHECK(prev_p < 1e-3);
}
