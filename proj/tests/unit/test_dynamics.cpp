#include <doctest.h>

#include <random>

#include "insp/dynamics.hpp"

using namespace insp;
using sim::QuadLimits;
using sim::QuadState;

TEST_CASE("step_quad: zero command from rest") {
  const QuadState s0;
  const QuadState s1 = sim::step_quad(s0, Vec3::Zero(), 0, 0, 0.1, QuadLimits{});
  CHECK(s1.position == s0.position);
  CHECK(s1.velocity == Vec3::Zero());
  CHECK(s1.time == doctest::Approx(0.1));
}

TEST_CASE("step_quad: closed-form semi-implicit Euler step") {
  const QuadState s1 = sim::step_quad(QuadState{}, Vec3(1, 0, 0), 0, 0, 0.1, QuadLimits{});
  CHECK(s1.velocity.x() == doctest::Approx(0.1));
  CHECK(s1.position.x() == doctest::Approx(0.01));
  CHECK(s1.position.y() == 0.0);
}

TEST_CASE("step_quad: acceleration clamp") {
  CHECK(sim::clamp_accel(Vec3(100, 0, 0), 6.0) == Vec3(6, 0, 0));
  const QuadState s1 = sim::step_quad(QuadState{}, Vec3(100, 0, 0), 0, 0, 0.1, QuadLimits{});
  CHECK(s1.velocity.x() == doctest::Approx(0.6));
}

TEST_CASE("step_quad: rejects non-positive dt") {
  CHECK_THROWS_AS(sim::step_quad(QuadState{}, Vec3::Zero(), 0, 0, 0.0, QuadLimits{}), std::invalid_argument);
}

TEST_CASE("step_quad: yaw wraps and gimbal saturates") {
  QuadState s;
  s.yaw = kPi - 0.01;
  s.gimbal_pitch = sim::kGimbalMax - 0.01;
  const QuadState n = sim::step_quad(s, Vec3::Zero(), 10.0, 10.0, 0.1, QuadLimits{});
  CHECK(n.yaw == doctest::Approx(-kPi + 0.14));
  CHECK(n.gimbal_pitch == sim::kGimbalMax);
}

TEST_CASE("property: speed and per-step velocity change stay bounded, steps are deterministic") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-50, 50), dtd(0.001, 0.2);
  const QuadLimits lim;
  for (int run = 0; run < 50; ++run) {
    QuadState s;
    for (int k = 0; k < 400; ++k) {
      const Vec3 a(u(rng), u(rng), u(rng));
      const double dt = dtd(rng);
      const double yr = u(rng), gr = u(rng);
      const QuadState n = sim::step_quad(s, a, yr, gr, dt, lim);
      CHECK(n == sim::step_quad(s, a, yr, gr, dt, lim));
      REQUIRE(n.velocity.norm() <= lim.v_max + 1e-12);
      REQUIRE((n.velocity - s.velocity).norm() <= lim.a_max * dt * std::sqrt(3.0) + 1e-12);
      REQUIRE(n.time >= s.time);
      REQUIRE(n.yaw >= -kPi);
      REQUIRE(n.yaw < kPi);
      REQUIRE(std::abs(n.gimbal_pitch) <= sim::kGimbalMax);
      s = n;
    }
  }
}
