#include <random>

#include "doctest.h"
#include "flexcable/pod_rom.hpp"
#include "flexcable/scenario.hpp"
#include "support/test_helpers.hpp"

using namespace flexcable;
using flexcable::testing::small_bank;
using flexcable::testing::small_config;

TEST_CASE("snapshot collection shapes and centering") {
  const ScenarioConfig cfg = small_config();

  RunRecord run;
  const int n = 40;
  for (int f = 0; f < 5; ++f) {
    Mat3X pos(3, n + 1);
    const Vec3 offset(0.1 * f, -0.05 * f, 0.02 * f);  // rigid translation over time
    for (int i = 0; i <= n; ++i)
      pos.col(i) = offset + Vec3(0, 0, steady_profile(cfg.cable, 9.8, i * 0.025));
    run.times.push_back(0.02 * f);
    run.positions.push_back(pos);
    run.velocities.push_back(Mat3X::Zero(3, n + 1));
  }

  const SnapshotTensor tensor = collect_snapshots(run, 10, 0.04, cfg.cable.length);
  CHECK(tensor.grid_intervals() == 10);
  CHECK(tensor.time_intervals() == 2);
  CHECK(tensor.h_d == doctest::Approx(0.1));

  // Head-centered slices are invariant under rigid head translation.
  const MatX unfolded = unfold_mode2(tensor);
  CHECK(unfolded.rows() == 11);
  CHECK(unfolded.cols() == 9);
  for (int j = 0; j < unfolded.rows(); ++j)
    for (int k = 1; k < 3; ++k)
      CHECK((unfolded.block<1, 3>(j, 3 * k) - unfolded.block<1, 3>(j, 0)).norm() < 1e-14);
  // And equal to the steady displacement profile below the head.
  for (int j = 0; j <= 10; ++j)
    CHECK(unfolded(j, 2) == doctest::Approx(steady_profile(cfg.cable, 9.8, j * 0.1)));

  CHECK_THROWS_AS(collect_snapshots(run, 7, 0.04, cfg.cable.length), GridMismatch);
}

TEST_CASE("mode-2 unfolding of a hand-built tensor") {
  // 3 x 2 x 2 tensor: two points, two slices, entries chosen by hand.
  SnapshotTensor t;
  t.h_d = 0.5;
  t.t_s = 1.0;
  Mat3X s0(3, 2), s1(3, 2);
  s0 << 1, 4, 2, 5, 3, 6;    // point0=(1,2,3) point1=(4,5,6)
  s1 << 7, 10, 8, 11, 9, 12;  // point0=(7,8,9) point1=(10,11,12)
  t.slices = {s0, s1};

  const MatX u = unfold_mode2(t);
  REQUIRE(u.rows() == 2);
  REQUIRE(u.cols() == 6);
  // Row j = [point_j(t0) - head(t0), point_j(t1) - head(t1)].
  MatX expected(2, 6);
  expected << 0, 0, 0, 0, 0, 0,
              3, 3, 3, 3, 3, 3;
  CHECK((u - expected).cwiseAbs().maxCoeff() < 1e-15);

  SUBCASE("zero tensor unfolds to zero") {
    SnapshotTensor z = t;
    z.slices = {Mat3X::Zero(3, 2), Mat3X::Zero(3, 2)};
    CHECK(unfold_mode2(z).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("refolding inverts the unfolding") {
    const SnapshotTensor back = refold_mode2(u, t.h_d, t.t_s);
    for (int k = 0; k < 2; ++k) {
      const Mat3X centered = t.slices[k].colwise() - Vec3(t.slices[k].col(0));
      CHECK((back.slices[k] - centered).cwiseAbs().maxCoeff() < 1e-15);
    }
  }
}

TEST_CASE("modes of a rank-1 matrix") {
  const VecX u = VecX::LinSpaced(11, 0.0, 1.0).cwiseAbs();
  const VecX v = VecX::LinSpaced(9, 1.0, 2.0);
  const MatX m = u * v.transpose();
  const ModeBank bank = compute_modes(m, 0.1);
  CHECK(bank.singular_values[0] > 0.0);
  for (int i = 1; i < bank.singular_values.size(); ++i)
    CHECK(bank.singular_values[i] < 1e-12 * bank.singular_values[0]);
  const double align = std::abs(bank.modes.col(0).dot(u.normalized()));
  CHECK(align == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("mode bank is orthonormal with non-increasing spectrum") {
  const ModeBank& bank = small_bank();
  const MatX gram = bank.modes.transpose() * bank.modes;
  CHECK((gram - MatX::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff() < 1e-9);
  for (int i = 1; i < bank.singular_values.size(); ++i)
    CHECK(bank.singular_values[i] <= bank.singular_values[i - 1] + 1e-15);
  // Deterministic sign rule: the largest-magnitude entry of each mode is +.
  for (int i = 0; i < bank.mode_count(); ++i) {
    int arg = 0;
    bank.modes.col(i).cwiseAbs().maxCoeff(&arg);
    CHECK(bank.modes(arg, i) > 0.0);
  }
}

TEST_CASE("energy ratios") {
  VecX s(2);
  s << 2.0, 1.0;
  const VecX r = energy_ratios(s);
  CHECK(r[0] == doctest::Approx(0.8));
  CHECK(r[1] == doctest::Approx(0.2));
  CHECK(r.sum() == doctest::Approx(1.0).epsilon(1e-12));

  VecX one(1);
  one << 3.0;
  CHECK(energy_ratios(one)[0] == doctest::Approx(1.0));

  CHECK_THROWS_AS(energy_ratios(VecX::Zero(4)), AllZeroSpectrum);
}

TEST_CASE("projection recovers coefficients of states in the span") {
  const ModeBank& bank = small_bank();
  const int m = bank.grid_points() - 1;
  const double root_h = std::sqrt(bank.h_d);

  SUBCASE("pure first mode per axis") {
    Mat3X pos(3, m + 1), vel(3, m + 1);
    vel.setZero();
    const double c = 0.37;
    for (int j = 0; j <= m; ++j)
      pos.col(j) = Vec3::Constant(c * bank.modes(j, 0) / root_h);
    const RomState s = project(pos, vel, bank, 3);
    for (int a = 0; a < 3; ++a) {
      CHECK(s.coeffs(a, 0) == doctest::Approx(c).epsilon(1e-6));
      CHECK(std::abs(s.coeffs(a, 1)) < 1e-9);
      CHECK(std::abs(s.coeffs(a, 2)) < 1e-9);
    }
  }
  SUBCASE("zero displacement projects to zero") {
    Mat3X pos = Mat3X::Zero(3, m + 1), vel = Mat3X::Zero(3, m + 1);
    pos.colwise() = Vec3(0.4, -0.2, 1.0);  // pure head offset
    const RomState s = project(pos, vel, bank, 3);
    CHECK(s.coeffs.cwiseAbs().maxCoeff() < 1e-12);
    CHECK((s.head - Vec3(0.4, -0.2, 1.0)).norm() == 0.0);
  }
  SUBCASE("project after reconstruct is the identity on the span") {
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    for (int trial = 0; trial < 20; ++trial) {
      RomState s = RomState::zero(3);
      for (int i = 0; i < 3; ++i)
        for (int a = 0; a < 3; ++a) {
          s.coeffs(a, i) = u(rng);
          s.coeff_rates(a, i) = u(rng);
        }
      s.head = Vec3(u(rng), u(rng), u(rng));
      s.head_vel = Vec3(u(rng), u(rng), u(rng));
      Mat3X pos, vel;
      reconstruct(s, bank, pos, vel);
      const RomState back = project(pos, vel, bank, 3);
      CHECK((back.to_vector() - s.to_vector()).cwiseAbs().maxCoeff() < 1e-9);
    }
  }
  SUBCASE("grid mismatch raises") {
    Mat3X pos = Mat3X::Zero(3, m + 3), vel = Mat3X::Zero(3, m + 3);
    CHECK_THROWS_AS(project(pos, vel, bank, 3), GridMismatch);
  }
}

TEST_CASE("reconstruction basics") {
  const ModeBank& bank = small_bank();
  RomState s = RomState::zero(3);
  s.head = Vec3(1, 2, 3);
  Mat3X pos, vel;
  reconstruct(s, bank, pos, vel);
  for (int j = 0; j < pos.cols(); ++j) CHECK((pos.col(j) - s.head).norm() < 1e-12);

  s.coeffs(2, 0) = 1.0;  // single z coefficient on mode 1
  reconstruct(s, bank, pos, vel);
  const double root_h = std::sqrt(bank.h_d);
  for (int j = 0; j < pos.cols(); ++j)
    CHECK(pos(2, j) == doctest::Approx(3.0 + bank.modes(j, 0) / root_h));
}

TEST_CASE("state vector round trip") {
  RomState s = RomState::zero(3);
  s.coeffs << 1, 2, 3, 4, 5, 6, 7, 8, 9;
  s.head = Vec3(-1, -2, -3);
  s.coeff_rates = 0.5 * s.coeffs;
  s.head_vel = Vec3(0.1, 0.2, 0.3);
  const VecX x = s.to_vector();
  REQUIRE(x.size() == 24);
  CHECK(x[0] == 1);   // a1_x
  CHECK(x[9] == -1);  // head x
  const RomState back = RomState::from_vector(x, 3);
  CHECK((back.to_vector() - x).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("reduced dynamics near the steady equilibrium") {
  const ScenarioConfig cfg = small_config();
  const ModeBank& bank = small_bank();
  RomDynamics dyn(bank, cfg.cable, cfg.quad.gravity, 3);

  const RomState projected =
      steady_rom_state(bank, cfg.cable, cfg.quad.gravity, Vec3::Zero(), 3);
  const VecX x = projected.to_vector();
  const VecX dx = dyn.rhs(x, Vec3::Zero());

  // The kinematic half of the derivative vanishes exactly at rest.
  CHECK(dx.head(12).cwiseAbs().maxCoeff() == 0.0);
  // The residual coefficient accelerations are bounded by the truncation
  // error amplified through the elastic stencil (E/(rho h^2) per metre of
  // reconstruction error); anything past this indicates a structural bug.
  const double amplification =
      cfg.cable.young_modulus / (cfg.cable.density * bank.h_d * bank.h_d);
  Mat3X rec_pos, rec_vel;
  reconstruct(projected, bank, rec_pos, rec_vel);
  double shape_err = 0.0;
  for (int j = 0; j < rec_pos.cols(); ++j)
    shape_err = std::max(shape_err,
                         (rec_pos.col(j) -
                          Vec3(0, 0, steady_profile(cfg.cable, cfg.quad.gravity,
                                                    j * bank.h_d)))
                             .norm());
  CHECK(dx.cwiseAbs().maxCoeff() < amplification * shape_err);

  // The model's own rest state is a genuine fixed point close to the
  // projected steady shape.
  const RomState eq = rom_equilibrium(dyn, projected);
  const VecX xe = eq.to_vector();
  CHECK(dyn.rhs(xe, Vec3::Zero()).cwiseAbs().maxCoeff() < 1e-9);
  CHECK((xe - x).cwiseAbs().maxCoeff() < 0.05);

  SUBCASE("input enters through the constant matrix") {
    const Vec3 u(1.0, 0.0, 0.0);
    const VecX with_u = dyn.rhs(x, u);
    const VecX delta = with_u - dx;
    // Head velocity derivative gains exactly u.
    CHECK((delta.segment<3>(6 * 3 + 3) - u).norm() < 1e-14);
    // Each coefficient acceleration shifts by -I_i u.
    for (int i = 0; i < 3; ++i)
      CHECK((delta.segment<3>(3 * 3 + 3 + 3 * i) + bank.mode_integrals[i] * u).norm() < 1e-12);
    // Position block is untouched.
    CHECK(delta.head(12).norm() == 0.0);
  }

  SUBCASE("equilibrium holds over ten discrete steps") {
    VecX xs = xe;
    for (int k = 0; k < 10; ++k) xs = dyn.step(xs, Vec3::Zero(), 0.02);
    CHECK((xs - xe).cwiseAbs().maxCoeff() < 1e-3);
  }

  SUBCASE("one step is a near fixed point") {
    const VecX nxt = dyn.step(xe, Vec3::Zero(), 0.02);
    CHECK((nxt - xe).cwiseAbs().maxCoeff() < 1e-6);
  }

  SUBCASE("head velocity integrates a constant input exactly") {
    const Vec3 u(0, 0, 1.0);
    const VecX nxt = dyn.step(x, u, 0.02);
    CHECK((nxt.segment<3>(6 * 3 + 3) - (x.segment<3>(6 * 3 + 3) + 0.02 * u)).norm() < 1e-14);
  }
}

TEST_CASE("analytic jacobian matches finite differences") {
  const ScenarioConfig cfg = small_config();
  const ModeBank& bank = small_bank();
  RomDynamics dyn(bank, cfg.cable, cfg.quad.gravity, 3);

  // A noticeably deformed, moving state.
  RomState s = steady_rom_state(bank, cfg.cable, cfg.quad.gravity, Vec3(0.2, -0.1, 0.05), 3);
  s.coeffs(0, 0) += 0.15;
  s.coeffs(1, 1) -= 0.08;
  s.coeff_rates(2, 0) = 0.4;
  s.coeff_rates(0, 2) = -0.25;
  s.head_vel = Vec3(0.3, -0.2, 0.1);
  const VecX x = s.to_vector();
  const Vec3 u(0.5, -0.3, 0.2);

  const MatX jac = dyn.rhs_jacobian(x);
  const int n = dyn.dim();
  const double h = 1e-6;
  for (int c = 0; c < n; ++c) {
    VecX hi = x, lo = x;
    hi[c] += h;
    lo[c] -= h;
    const VecX fd = (dyn.rhs(hi, u) - dyn.rhs(lo, u)) / (2.0 * h);
    CHECK((fd - jac.col(c)).cwiseAbs().maxCoeff() < 2e-4 * std::max(1.0, fd.norm()));
  }

  SUBCASE("discrete-step tangents match finite differences") {
    VecX x_next;
    MatX d_dx, d_du;
    dyn.step_with_sensitivity(x, u, 0.02, x_next, d_dx, d_du);
    CHECK((x_next - dyn.step(x, u, 0.02)).cwiseAbs().maxCoeff() < 1e-13);
    for (int c = 0; c < n; ++c) {
      VecX hi = x, lo = x;
      hi[c] += h;
      lo[c] -= h;
      const VecX fd = (dyn.step(hi, u, 0.02) - dyn.step(lo, u, 0.02)) / (2.0 * h);
      CHECK((fd - d_dx.col(c)).cwiseAbs().maxCoeff() < 2e-4 * std::max(1.0, fd.norm()));
    }
    for (int c = 0; c < 3; ++c) {
      Vec3 hi = u, lo = u;
      hi[c] += h;
      lo[c] -= h;
      const VecX fd = (dyn.step(x, hi, 0.02) - dyn.step(x, lo, 0.02)) / (2.0 * h);
      CHECK((fd - d_du.col(c)).cwiseAbs().maxCoeff() < 2e-4 * std::max(1.0, fd.norm()));
    }
  }
}

TEST_CASE("steady profile lies close to the truncated mode span") {
  const ScenarioConfig cfg = small_config();
  const ModeBank& bank = small_bank();
  const RomState eq = steady_rom_state(bank, cfg.cable, cfg.quad.gravity, Vec3::Zero(), 3);
  Mat3X pos, vel;
  reconstruct(eq, bank, pos, vel);
  double worst = 0.0;
  for (int j = 0; j < pos.cols(); ++j) {
    const Vec3 truth(0, 0, steady_profile(cfg.cable, cfg.quad.gravity, j * bank.h_d));
    worst = std::max(worst, (pos.col(j) - truth).norm());
  }
  CHECK(worst < 0.02);  // truncation residual, checked empirically
}
