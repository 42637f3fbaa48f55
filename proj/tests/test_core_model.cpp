#include <random>

#include "doctest.h"
#include "flexcable/core_model.hpp"
#include "support/test_helpers.hpp"

using namespace flexcable;

TEST_CASE("rotation at zero attitude is the identity") {
  const Mat3 r = rotation_from_attitude(Attitude{});
  CHECK((r - Mat3::Identity()).cwiseAbs().maxCoeff() == doctest::Approx(0.0));
}

TEST_CASE("pure yaw of pi/2 maps E_x to E_y") {
  Attitude att;
  att.angles = Vec3(0, 0, M_PI / 2.0);
  const Vec3 ex = rotation_from_attitude(att) * Vec3::UnitX();
  CHECK((ex - Vec3::UnitY()).norm() < 1e-12);
}

TEST_CASE("rotation is orthogonal with unit determinant") {
  Attitude att;
  att.angles = Vec3(0.1, 0.2, 0.3);
  const Mat3 r = rotation_from_attitude(att);
  CHECK((r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(r.determinant() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("orthogonality holds over 1000 random attitudes") {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 1000; ++i) {
    const Attitude att = testing::random_attitude(rng);
    const Mat3 r = rotation_from_attitude(att);
    CHECK((r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-10);
    CHECK(std::abs(r.determinant() - 1.0) < 1e-10);
  }
}

TEST_CASE("body rates equal angle rates at zero attitude") {
  Attitude att;
  att.rates = Vec3(0.3, -0.2, 0.9);
  CHECK((body_rates_from_euler_rates(att) - att.rates).norm() < 1e-14);
  att.rates.setZero();
  CHECK(body_rates_from_euler_rates(att).norm() == 0.0);
}

TEST_CASE("body rates round-trip through the kinematic matrix") {
  Attitude att;
  att.angles = Vec3(0, 0.3, 0);
  att.rates = Vec3(0, 1, 0);
  const Vec3 omega = body_rates_from_euler_rates(att);
  CHECK((euler_rate_matrix(att) * omega - att.rates).norm() < 1e-12);

  std::mt19937_64 rng(11);
  for (int i = 0; i < 200; ++i) {
    const Attitude a = testing::random_attitude(rng);
    const Vec3 w = body_rates_from_euler_rates(a);
    CHECK((euler_rate_matrix(a) * w - a.rates).norm() < 1e-9);
  }
}

TEST_CASE("kinematic matrix derivative matches finite differences") {
  std::mt19937_64 rng(13);
  for (int i = 0; i < 50; ++i) {
    Attitude att = testing::random_attitude(rng);
    const double dt = 1e-7;
    Attitude fwd = att, bwd = att;
    fwd.angles += dt * att.rates;
    bwd.angles -= dt * att.rates;
    const Mat3 fd = (euler_rate_matrix(fwd) - euler_rate_matrix(bwd)) / (2.0 * dt);
    CHECK((euler_rate_matrix_dot(att) - fd).cwiseAbs().maxCoeff() < 1e-5);
  }
}

TEST_CASE("gimbal guard raises near the pitch singularity") {
  Attitude att;
  att.angles = Vec3(0, M_PI / 2.0 - 5e-4, 0);
  CHECK_THROWS_AS(body_rates_from_euler_rates(att), GimbalLock);
}

TEST_CASE("strain of common vectors") {
  CHECK(strain(Vec3(1, 0, 0)) == doctest::Approx(0.0));
  CHECK(strain(Vec3(0, 0, 1.01)) == doctest::Approx(0.01));
  CHECK(strain(Vec3(0.6, 0.8, 0)) == doctest::Approx(0.0));  // unit norm by Pythagoras
  CHECK_THROWS_AS(strain(Vec3::Zero()), DegenerateSegment);
}

TEST_CASE("internal force is tangent and matches the linear law") {
  const CableParams p = table_cable_params();
  CHECK(internal_force(Vec3(0, 0, -1), p).norm() == doctest::Approx(0.0));

  const Vec3 n = internal_force(Vec3(0, 0, 1.01), p);
  CHECK(n.x() == doctest::Approx(0.0));
  CHECK(n.z() == doctest::Approx(0.07854).epsilon(1e-9));

  // Tangency: n x r_s = 0.
  const Vec3 r_s(0.3, -0.2, 1.1);
  CHECK(internal_force(r_s, p).cross(r_s).norm() < 1e-12);

  // Doubling the argument follows EA(|2 r_s| - 1) along the same direction.
  const Vec3 n2 = internal_force(2.0 * r_s, p);
  const double expected = p.axial_stiffness() * (2.0 * r_s.norm() - 1.0);
  CHECK(n2.norm() == doctest::Approx(expected));
  CHECK(n2.normalized().dot(r_s.normalized()) == doctest::Approx(1.0));
}

TEST_CASE("drag load values and oddness") {
  const CableParams p = table_cable_params();
  CHECK(drag_load(Vec3::Zero(), p).norm() == 0.0);
  CHECK(drag_load(Vec3(1, 0, 0), p).x() == doctest::Approx(-0.01293));
  CHECK(drag_load(Vec3(0, 2, 0), p).y() == doctest::Approx(-0.05172));

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-3, 3);
  for (int i = 0; i < 100; ++i) {
    const Vec3 v(u(rng), u(rng), u(rng));
    CHECK((drag_load(-v, p) + drag_load(v, p)).norm() < 1e-14);
  }
}

TEST_CASE("gravity load is constant and linear in the cross section") {
  CableParams p = table_cable_params();
  const Vec3 g = gravity_load(p, 9.8);
  CHECK(g.z() == doctest::Approx(-0.97997).epsilon(1e-4));
  CHECK(gravity_load(p, 0.0).norm() == 0.0);
  p.cross_section *= 2.0;
  CHECK(gravity_load(p, 9.8).z() == doctest::Approx(2.0 * g.z()));
}

TEST_CASE("rotor allocation: hover, zero, and round trip") {
  const QuadParams q = table_quad_params();
  const auto hover = allocate_rotors(3.92, Vec3::Zero(), q);
  for (double w : hover) CHECK(w == doctest::Approx(1565.2476).epsilon(1e-4));

  const auto idle = allocate_rotors(0.0, Vec3::Zero(), q);
  for (double w : idle) CHECK(w == 0.0);

  const auto speeds = allocate_rotors(3.92, Vec3(0, 0, 1e-4), q);
  const RotorWrench w = rotor_wrench(speeds, q);
  CHECK(w.thrust_body.z() == doctest::Approx(3.92).epsilon(1e-9));
  CHECK(w.torque_body.z() == doctest::Approx(1e-4).epsilon(1e-9));

  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-2e-4, 2e-4);
  for (int i = 0; i < 100; ++i) {
    const Vec3 tau(u(rng), u(rng), u(rng));
    const auto s = allocate_rotors(3.0, tau, q);
    const RotorWrench ww = rotor_wrench(s, q);
    CHECK(std::abs(ww.thrust_body.z() - 3.0) < 1e-9 * 3.0);
    CHECK((ww.torque_body - tau).norm() < 1e-9);
  }
}

TEST_CASE("rotor allocation rejects negative squared speeds") {
  const QuadParams q = table_quad_params();
  CHECK_THROWS_AS(allocate_rotors(0.0, Vec3(0, 0, 1e-3), q), InfeasibleAllocation);
  bool clipped = false;
  const auto s = allocate_rotors_saturating(0.0, Vec3(0, 0, 1e-3), q, &clipped);
  CHECK(clipped);
  for (double w : s) CHECK(w >= 0.0);
}

TEST_CASE("steady profile closed form") {
  const CableParams p = table_cable_params();
  CHECK(steady_profile(p, 9.8, 0.0) == 0.0);
  CHECK(steady_profile(p, 9.8, 1.0) == doctest::Approx(-1.0623868).epsilon(1e-7));

  CableParams stiff = p;
  stiff.young_modulus = 1e15;
  CHECK(steady_profile(stiff, 9.8, 0.7) == doctest::Approx(-0.7).epsilon(1e-9));
}
