#include <cmath>

#include "doctest.h"
#include "flexcable/fdm_sim.hpp"
#include "flexcable/scenario.hpp"
#include "support/test_helpers.hpp"

using namespace flexcable;

namespace {

Mat3X steady_positions(const CableParams& cable, int n, double g) {
  Mat3X pos(3, n + 1);
  const double h = cable.length / n;
  for (int i = 0; i <= n; ++i) pos.col(i) = Vec3(0, 0, steady_profile(cable, g, i * h));
  return pos;
}

}  // namespace

TEST_CASE("ghost node extends the last segment direction") {
  const double h = 0.01;
  SUBCASE("straight vertical cable") {
    Mat3X pos(3, 4);
    for (int i = 0; i < 4; ++i) pos.col(i) = Vec3(0, 0, -i * h);
    const Vec3 g = ghost_tail_node(pos, h);
    CHECK((g - Vec3(0, 0, -4 * h)).norm() < 1e-15);
  }
  SUBCASE("uniform stretch still yields 2h beyond the second-last node") {
    Mat3X pos(3, 4);
    for (int i = 0; i < 4; ++i) pos.col(i) = Vec3(0, 0, -i * 1.1 * h);
    const Vec3 g = ghost_tail_node(pos, h);
    CHECK((g - (pos.col(2) + Vec3(0, 0, -2 * h))).norm() < 1e-15);
  }
  SUBCASE("right-angle bend continues the last segment") {
    Mat3X pos(3, 3);
    pos.col(0) = Vec3(0, 0, 0);
    pos.col(1) = Vec3(0, 0, -h);
    pos.col(2) = Vec3(h, 0, -h);
    const Vec3 g = ghost_tail_node(pos, h);
    CHECK((g - Vec3(2 * h, 0, -h)).norm() < 1e-15);
  }
}

TEST_CASE("interior accelerations of straight unstretched cable") {
  const CableParams cable = table_cable_params();
  const int n = 50;
  const FdmConfig cfg{n, 5e-4};
  const FdmState s = make_vertical_state(cable, cfg, Vec3::Zero(), false);
  Mat3X acc(3, n + 1);

  SUBCASE("no gravity: everything cancels") {
    interior_accelerations(s.positions, s.velocities, cable, 0.0, cfg.spacing(cable.length), acc);
    for (int i = 1; i <= n; ++i) CHECK(acc.col(i).norm() < 1e-10);
  }
  SUBCASE("with gravity: free fall, no elastic resistance at zero strain") {
    interior_accelerations(s.positions, s.velocities, cable, 9.8, cfg.spacing(cable.length), acc);
    for (int i = 1; i <= n; ++i) CHECK((acc.col(i) - Vec3(0, 0, -9.8)).norm() < 1e-10);
  }
}

TEST_CASE("steady profile is a discrete equilibrium of the interior stencil") {
  const CableParams cable = table_cable_params();
  const int n = 100;
  const double h = cable.length / n;
  const Mat3X pos = steady_positions(cable, n, 9.8);
  Mat3X acc(3, n + 1);
  interior_accelerations(pos, Mat3X::Zero(3, n + 1), cable, 9.8, h, acc);
  double worst = 0.0;
  for (int i = 1; i <= n; ++i) worst = std::max(worst, acc.col(i).norm());
  CHECK(worst < 1e-3);
}

TEST_CASE("stencil consistency is second order on a smooth curve") {
  CableParams cable = table_cable_params();
  cable.drag_coeff = 0.0;

  // Analytic tension divergence via tight differentiation of the closed-form
  // internal force along the curve; independent of the nodal stencil.
  auto curve = [](double s) {
    return Vec3(0.08 * std::sin(2.0 * s), 0.05 * std::cos(3.0 * s), -s);
  };
  auto curve_force = [&](double s) {
    const double ds = 1e-6;
    const Vec3 r_s = (curve(s + ds) - curve(s - ds)) / (2.0 * ds);
    return internal_force(r_s, cable);
  };
  auto analytic_ns = [&](double s) {
    const double ds = 1e-4;
    return Vec3((curve_force(s + ds) - curve_force(s - ds)) / (2.0 * ds));
  };

  auto residual = [&](int n) {
    const double h = cable.length / n;
    Mat3X pos(3, n + 1);
    for (int i = 0; i <= n; ++i) pos.col(i) = curve(i * h);
    Mat3X acc(3, n + 1);
    interior_accelerations(pos, Mat3X::Zero(3, n + 1), cable, 0.0, h, acc);
    double worst = 0.0;
    for (int i = 1; i <= n - 2; ++i) {
      const Vec3 expected = analytic_ns(i * h) / cable.linear_mass();
      worst = std::max(worst, (acc.col(i) - expected).norm());
    }
    return worst;
  };

  const double r50 = residual(50);
  const double r100 = residual(100);
  CHECK(r50 / r100 >= 3.0);
}

TEST_CASE("head acceleration balances at hover over the steady profile") {
  const CableParams cable = table_cable_params();
  const QuadParams quad = table_quad_params();
  const int n = 100;
  const double h = cable.length / n;
  const Mat3X pos = steady_positions(cable, n, quad.gravity);
  const Mat3X vel = Mat3X::Zero(3, n + 1);
  Mat3X acc(3, n + 1);
  interior_accelerations(pos, vel, cable, quad.gravity, h, acc);
  const Vec3 thrust(0, 0, (quad.mass + cable.total_mass()) * quad.gravity);
  const Vec3 head = head_acceleration(vel, acc, thrust, Vec3::Zero(), cable, quad, h);
  CHECK(head.cwiseAbs().maxCoeff() < 1e-3);
}

TEST_CASE("head acceleration reaches the free-fall limit for a light cable") {
  CableParams cable = table_cable_params();
  cable.density = 1e-6;
  const QuadParams quad = table_quad_params();
  const int n = 20;
  const double h = cable.length / n;
  const FdmConfig cfg{n, 5e-4};
  const FdmState s = make_vertical_state(cable, cfg, Vec3::Zero(), false);
  Mat3X acc(3, n + 1);
  interior_accelerations(s.positions, s.velocities, cable, quad.gravity, h, acc);
  const Vec3 head =
      head_acceleration(s.velocities, acc, Vec3::Zero(), Vec3::Zero(), cable, quad, h);
  CHECK((head - Vec3(0, 0, -quad.gravity)).norm() < 1e-9);
}

TEST_CASE("an external force shifts the head acceleration by 1/effective mass") {
  const CableParams cable = table_cable_params();
  const QuadParams quad = table_quad_params();
  const int n = 100;
  const double h = cable.length / n;
  const Mat3X pos = steady_positions(cable, n, quad.gravity);
  const Mat3X vel = Mat3X::Zero(3, n + 1);
  Mat3X acc(3, n + 1);
  interior_accelerations(pos, vel, cable, quad.gravity, h, acc);
  const Vec3 thrust(0, 0, (quad.mass + cable.total_mass()) * quad.gravity);
  const Vec3 base = head_acceleration(vel, acc, thrust, Vec3::Zero(), cable, quad, h);
  const Vec3 pushed = head_acceleration(vel, acc, thrust, Vec3(1, 0, 0), cable, quad, h);
  const double m_eff = quad.mass + 0.5 * cable.linear_mass() * h;
  CHECK(pushed.x() - base.x() == doctest::Approx(1.0 / m_eff).epsilon(1e-12));
}

TEST_CASE("attitude dynamics basics") {
  const QuadParams quad = table_quad_params();
  SUBCASE("rest stays at rest") {
    const AttitudeDerivative d = attitude_dynamics(Attitude{}, Vec3::Zero(), quad);
    CHECK(d.omega_dot.norm() == 0.0);
    CHECK(d.angle_accel.norm() == 0.0);
  }
  SUBCASE("unit inertia scaling") {
    const AttitudeDerivative d = attitude_dynamics(Attitude{}, Vec3(1e-6, 0, 0), quad);
    CHECK(d.omega_dot.x() == doctest::Approx(1.0));
  }
  SUBCASE("symmetric-top steady spin has no gyroscopic torque") {
    Attitude att;
    att.rates = Vec3(0, 0, 1.0);  // at zero attitude omega == angle rates
    const AttitudeDerivative d = attitude_dynamics(att, Vec3::Zero(), quad);
    CHECK(d.omega_dot.norm() < 1e-12);
  }
}

TEST_CASE("rk4 holds the discrete equilibrium") {
  const ScenarioConfig cfg = sim_profile();
  FdmSim sim(cfg.cable, cfg.quad, cfg.fdm);
  FdmState state = make_vertical_state(cfg.cable, cfg.fdm, Vec3::Zero(), true);
  const FdmState before = state;
  FdmInputs u;
  u.rotor_speeds = allocate_rotors(cfg.total_mass() * cfg.quad.gravity, Vec3::Zero(), cfg.quad);
  for (int k = 0; k < 100; ++k) sim.rk4_step(state, u, cfg.fdm.time_step);
  CHECK((state.positions - before.positions).cwiseAbs().maxCoeff() < 1e-9);
  CHECK(state.velocities.cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("free fall is integrated exactly") {
  ScenarioConfig cfg = sim_profile();
  cfg.cable.drag_coeff = 0.0;
  cfg.fdm = FdmConfig{20, 1e-3};
  FdmSim sim(cfg.cable, cfg.quad, cfg.fdm);
  FdmState state = make_vertical_state(cfg.cable, cfg.fdm, Vec3::Zero(), false);
  FdmInputs u;  // zero thrust
  for (int k = 0; k < 100; ++k) sim.rk4_step(state, u, cfg.fdm.time_step);
  const double t = 100 * cfg.fdm.time_step;
  CHECK(std::abs(state.positions(2, 0) + 0.5 * cfg.quad.gravity * t * t) < 1e-10);
}

TEST_CASE("sweep scenario diverges at a 5 ms step and survives 0.5 ms") {
  ScenarioConfig cfg = testing::small_config();
  CHECK(sweep_blows_up(cfg, 5e-3, 2.0));
  CHECK_FALSE(sweep_blows_up(cfg, 5e-4, 2.0));
}

TEST_CASE("energy is conserved without drag and gravity") {
  CableParams cable = table_cable_params();
  cable.drag_coeff = 0.0;
  const FdmConfig cfg{50, 1e-4};
  const double h = cfg.spacing(cable.length);

  FdmState state;
  state.positions.setZero(3, cfg.segment_count + 1);
  state.velocities.setZero(3, cfg.segment_count + 1);
  for (int i = 0; i <= cfg.segment_count; ++i)
    state.positions.col(i) = Vec3(0, 0, -1.05 * i * h);  // 5% uniform stretch

  DrivenCableSim sim(cable, cfg, 0.0);
  const HeadDriver driver = HeadDriver::pinned(Vec3::Zero());
  const double e0 = cable_elastic_energy(state.positions, cable, h) +
                    cable_kinetic_energy(state.velocities, cable, h);
  REQUIRE(e0 > 0.0);
  double worst = 0.0;
  for (int k = 0; k < 10000; ++k) {
    sim.rk4_step(state, driver, k * cfg.time_step, cfg.time_step);
    const double e = cable_elastic_energy(state.positions, cable, h) +
                     cable_kinetic_energy(state.velocities, cable, h);
    worst = std::max(worst, std::abs(e - e0) / e0);
  }
  CHECK(worst < 0.01);
}

TEST_CASE("runs replay deterministically") {
  ScenarioConfig cfg = testing::small_config();
  cfg.sweep.duration = 0.5;
  const CollectResult a = run_collect(cfg, cfg.collect_grid);
  const CollectResult b = run_collect(cfg, cfg.collect_grid);
  REQUIRE(a.run.frames() == b.run.frames());
  for (std::size_t f = 0; f < a.run.frames(); ++f) {
    CHECK((a.run.positions[f] - b.run.positions[f]).cwiseAbs().maxCoeff() == 0.0);
    CHECK((a.run.velocities[f] - b.run.velocities[f]).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("disturbance is a seeded piecewise-constant bounded signal") {
  Disturbance d;
  d.amplitude = 1.0;
  d.frequency = 0.5;
  d.seed = 42;
  const Vec3 v0 = d.sample(0.1);
  CHECK((d.sample(1.9) - v0).norm() == 0.0);   // same 2 s hold interval
  CHECK((d.sample(2.1) - v0).norm() > 0.0);    // next interval re-draws
  for (double t = 0.0; t < 20.0; t += 0.25)
    CHECK(d.sample(t).cwiseAbs().maxCoeff() <= 1.0);

  Disturbance d2 = d;
  CHECK((d2.sample(7.3) - d.sample(7.3)).norm() == 0.0);
  d2.seed = 43;
  CHECK((d2.sample(7.3) - d.sample(7.3)).norm() > 0.0);
}

TEST_CASE("blowup reports a timestamp") {
  ScenarioConfig cfg = testing::small_config();
  cfg.fdm.time_step = 5e-3;
  FdmSim sim(cfg.cable, cfg.quad, cfg.fdm);
  FdmState state = make_vertical_state(cfg.cable, cfg.fdm, Vec3::Zero(), false);
  state.velocities.row(0).setConstant(1.0);
  ControlCallback control = [&](double, const FdmState&) {
    FdmInputs u;
    u.rotor_speeds = allocate_rotors(cfg.total_mass() * cfg.quad.gravity, Vec3::Zero(), cfg.quad);
    return u;
  };
  SimulateOptions opts;
  opts.duration = 5.0;
  opts.record_every = 1000;
  bool threw = false;
  try {
    simulate(sim, state, control, opts);
  } catch (const NumericalBlowup& e) {
    threw = true;
    CHECK(e.time > 0.0);
    CHECK(e.time <= 5.0);
  }
  CHECK(threw);
}
