#include "flexcable/fdm_sim.hpp"

#include <cmath>

namespace flexcable {

void FdmConfig::validate() const {
  if (segment_count < 2) throw ConfigError("fdm.segment_count", "must be >= 2");
  if (time_step <= 0) throw ConfigError("fdm.time_step", "must be > 0");
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double unit_from_bits(std::uint64_t bits) {
  return static_cast<double>(bits >> 11) * (1.0 / 9007199254740992.0);  // [0,1)
}

constexpr double kBlowupLimit = 1e6;

bool finite_and_bounded(const Mat3X& m) {
  return m.allFinite() && m.cwiseAbs().maxCoeff() < kBlowupLimit;
}

}  // namespace

Vec3 Disturbance::sample(double t) const {
  if (amplitude == 0.0) return Vec3::Zero();
  const auto interval = static_cast<std::uint64_t>(std::max(0.0, t) * frequency);
  Vec3 d;
  for (int axis = 0; axis < 3; ++axis) {
    const std::uint64_t bits =
        splitmix64(seed ^ splitmix64(interval * 3 + static_cast<std::uint64_t>(axis) + 1));
    d[axis] = amplitude * (2.0 * unit_from_bits(bits) - 1.0);
  }
  return d;
}

FdmState make_vertical_state(const CableParams& cable, const FdmConfig& cfg,
                             const Vec3& head, bool stretched) {
  const int n = cfg.segment_count;
  const double h = cfg.spacing(cable.length);
  FdmState s;
  s.positions.setZero(3, n + 1);
  s.velocities.setZero(3, n + 1);
  for (int i = 0; i <= n; ++i) {
    const double si = i * h;
    const double z = stretched ? steady_profile(cable, QuadParams{}.gravity, si) : -si;
    s.positions.col(i) = head + Vec3(0, 0, z);
  }
  return s;
}

FdmState make_horizontal_state(const CableParams& cable, const FdmConfig& cfg,
                               const Vec3& head) {
  const int n = cfg.segment_count;
  const double h = cfg.spacing(cable.length);
  FdmState s;
  s.positions.setZero(3, n + 1);
  s.velocities.setZero(3, n + 1);
  for (int i = 0; i <= n; ++i) s.positions.col(i) = head + Vec3(-i * h, 0, 0);
  return s;
}

Vec3 ghost_tail_node(const Mat3X& positions, double h_s) {
  const int n = static_cast<int>(positions.cols()) - 1;
  const Vec3 last = positions.col(n) - positions.col(n - 1);
  const double len = last.norm();
  if (len < kMinSegmentLength) throw DegenerateSegment(n);
  return positions.col(n - 1) + (2.0 * h_s / len) * last;
}

void interior_accelerations(const Mat3X& positions, const Mat3X& velocities,
                            const CableParams& cable, double g, double h_s,
                            Mat3X& acc) {
  const int n = static_cast<int>(positions.cols()) - 1;
  const double e_over_rho = cable.young_modulus / cable.density;
  const double drag_scale = cable.air_density * cable.drag_coeff / cable.linear_mass();
  const Vec3 ghost = ghost_tail_node(positions, h_s);

  for (int i = 1; i <= n; ++i) {
    const Vec3 next = (i == n) ? ghost : Vec3(positions.col(i + 1));
    const Vec3 cur = positions.col(i);
    const Vec3 prev = positions.col(i - 1);
    const Vec3 fwd = next - cur;
    const Vec3 bwd = cur - prev;
    const double lf = fwd.norm(), lb = bwd.norm();
    if (lf < kMinSegmentLength) throw DegenerateSegment(i);
    if (lb < kMinSegmentLength) throw DegenerateSegment(i - 1);
    const Vec3 stencil =
        (next - 2.0 * cur + prev) / (h_s * h_s) - fwd / (h_s * lf) + bwd / (h_s * lb);
    const Vec3 vel = velocities.col(i);
    acc.col(i) = e_over_rho * stencil - drag_scale * vel.norm() * vel - Vec3(0, 0, g);
  }
}

Vec3 head_acceleration(const Mat3X& velocities, const Mat3X& interior_acc,
                       const Vec3& thrust_world, const Vec3& ext_force,
                       const CableParams& cable, const QuadParams& quad, double h_s) {
  const int n = static_cast<int>(velocities.cols()) - 1;
  const double mu = cable.linear_mass();
  const double drag_coef = cable.air_density * cable.drag_coeff;

  Vec3 rhs = -Vec3(0, 0, (quad.mass + mu * cable.length) * quad.gravity);
  rhs += thrust_world + ext_force;
  rhs -= 0.5 * mu * h_s * interior_acc.col(1);
  for (int i = 2; i <= n; ++i)
    rhs -= 0.5 * mu * h_s * (interior_acc.col(i) + interior_acc.col(i - 1));
  for (int i = 1; i <= n; ++i) {
    const Vec3 vi = velocities.col(i);
    const Vec3 vp = velocities.col(i - 1);
    rhs -= 0.5 * drag_coef * h_s * (vi.norm() * vi + vp.norm() * vp);
  }
  return rhs / (quad.mass + 0.5 * mu * h_s);
}

AttitudeDerivative attitude_dynamics(const Attitude& att, const Vec3& torque_body,
                                     const QuadParams& quad) {
  const Vec3 omega = body_rates_from_euler_rates(att);
  const Vec3 j_omega = quad.inertia.cwiseProduct(omega);
  AttitudeDerivative d;
  d.omega_dot = (torque_body - omega.cross(j_omega)).cwiseQuotient(quad.inertia);
  d.angle_accel = euler_rate_matrix_dot(att) * omega + euler_rate_matrix(att) * d.omega_dot;
  return d;
}

FdmSim::FdmSim(CableParams cable, QuadParams quad, FdmConfig cfg)
    : cable_(cable), quad_(quad), cfg_(cfg), h_s_(cfg.spacing(cable.length)) {
  cable_.validate();
  quad_.validate();
  cfg_.validate();
  const int cols = cfg_.segment_count + 1;
  stages_.resize(4);
  for (auto& st : stages_) {
    st.vel.setZero(3, cols);
    st.acc.setZero(3, cols);
  }
  stage_state_.positions.setZero(3, cols);
  stage_state_.velocities.setZero(3, cols);
}

void FdmSim::eval(const FdmState& s, const FdmInputs& u, Derivative& d) const {
  const RotorWrench w = rotor_wrench(u.rotor_speeds, quad_);
  const Mat3 r_b = rotation_from_attitude(s.att);

  interior_accelerations(s.positions, s.velocities, cable_, quad_.gravity, h_s_, d.acc);
  d.acc.col(0) = head_acceleration(s.velocities, d.acc, r_b * w.thrust_body, u.ext_force,
                                   cable_, quad_, h_s_);
  d.vel = s.velocities;

  const AttitudeDerivative ad = attitude_dynamics(s.att, w.torque_body, quad_);
  d.angle_rates = s.att.rates;
  d.angle_accel = ad.angle_accel;
}

void FdmSim::rk4_step(FdmState& state, const FdmInputs& inputs, double dt) const {
  static constexpr double kStageOffset[4] = {0.0, 0.5, 0.5, 1.0};
  for (int k = 0; k < 4; ++k) {
    if (k == 0) {
      eval(state, inputs, stages_[0]);
    } else {
      const double c = kStageOffset[k] * dt;
      const Derivative& prev = stages_[k - 1];
      stage_state_.positions = state.positions + c * prev.vel;
      stage_state_.velocities = state.velocities + c * prev.acc;
      stage_state_.att.angles = state.att.angles + c * prev.angle_rates;
      stage_state_.att.rates = state.att.rates + c * prev.angle_accel;
      eval(stage_state_, inputs, stages_[k]);
    }
  }
  const double w = dt / 6.0;
  state.positions +=
      w * (stages_[0].vel + 2.0 * stages_[1].vel + 2.0 * stages_[2].vel + stages_[3].vel);
  state.velocities +=
      w * (stages_[0].acc + 2.0 * stages_[1].acc + 2.0 * stages_[2].acc + stages_[3].acc);
  state.att.angles += w * (stages_[0].angle_rates + 2.0 * stages_[1].angle_rates +
                           2.0 * stages_[2].angle_rates + stages_[3].angle_rates);
  state.att.rates += w * (stages_[0].angle_accel + 2.0 * stages_[1].angle_accel +
                          2.0 * stages_[2].angle_accel + stages_[3].angle_accel);
}

HeadDriver HeadDriver::pinned(const Vec3& p) {
  return HeadDriver{[p](double) { return p; }, [](double) { return Vec3::Zero(); }};
}

DrivenCableSim::DrivenCableSim(CableParams cable, FdmConfig cfg, double g)
    : cable_(cable), cfg_(cfg), g_(g), h_s_(cfg.spacing(cable.length)) {
  cable_.validate();
  cfg_.validate();
  const int cols = cfg_.segment_count + 1;
  stages_.resize(4);
  for (auto& st : stages_) {
    st.vel.setZero(3, cols);
    st.acc.setZero(3, cols);
  }
  stage_state_.positions.setZero(3, cols);
  stage_state_.velocities.setZero(3, cols);
}

void DrivenCableSim::eval(const FdmState& s, const HeadDriver& driver, double t,
                          Derivative& d) const {
  interior_accelerations(s.positions, s.velocities, cable_, g_, h_s_, d.acc);
  d.acc.col(0).setZero();
  d.vel = s.velocities;
  d.vel.col(0) = driver.velocity(t);
}

void DrivenCableSim::rk4_step(FdmState& state, const HeadDriver& driver, double t,
                              double dt) const {
  static constexpr double kStageOffset[4] = {0.0, 0.5, 0.5, 1.0};
  for (int k = 0; k < 4; ++k) {
    const double tk = t + kStageOffset[k] * dt;
    if (k == 0) {
      eval(state, driver, tk, stages_[0]);
    } else {
      const double c = kStageOffset[k] * dt;
      const Derivative& prev = stages_[k - 1];
      stage_state_.positions = state.positions + c * prev.vel;
      stage_state_.velocities = state.velocities + c * prev.acc;
      stage_state_.positions.col(0) = driver.position(tk);
      stage_state_.velocities.col(0) = driver.velocity(tk);
      eval(stage_state_, driver, tk, stages_[k]);
    }
  }
  const double w = dt / 6.0;
  state.positions +=
      w * (stages_[0].vel + 2.0 * stages_[1].vel + 2.0 * stages_[2].vel + stages_[3].vel);
  state.velocities +=
      w * (stages_[0].acc + 2.0 * stages_[1].acc + 2.0 * stages_[2].acc + stages_[3].acc);
  state.positions.col(0) = driver.position(t + dt);
  state.velocities.col(0) = driver.velocity(t + dt);
}

namespace {

void check_divergence(const FdmState& s, double t) {
  if (!finite_and_bounded(s.positions) || !finite_and_bounded(s.velocities) ||
      !s.att.angles.allFinite() || !s.att.rates.allFinite() ||
      s.att.rates.cwiseAbs().maxCoeff() >= kBlowupLimit)
    throw NumericalBlowup(t);
}

void record_frame(RunRecord& rec, double t, const FdmState& s, bool with_attitude) {
  rec.times.push_back(t);
  rec.positions.push_back(s.positions);
  rec.velocities.push_back(s.velocities);
  if (with_attitude) rec.attitudes.push_back(s.att);
}

}  // namespace

RunRecord simulate(const FdmSim& sim, FdmState state, const ControlCallback& control,
                   const SimulateOptions& opts) {
  const double dt = sim.config().time_step;
  const auto steps = static_cast<long>(std::llround(opts.duration / dt));
  const auto control_every =
      std::max<long>(1, std::llround(opts.control_period / dt));

  RunRecord rec;
  FdmInputs inputs;
  record_frame(rec, 0.0, state, true);
  for (long k = 0; k < steps; ++k) {
    const double t = k * dt;
    if (k % control_every == 0) inputs = control(t, state);
    if (opts.disturbance) inputs.ext_force = opts.disturbance->sample(t);
    sim.rk4_step(state, inputs, dt);
    check_divergence(state, t + dt);
    if ((k + 1) % opts.record_every == 0) record_frame(rec, (k + 1) * dt, state, true);
  }
  return rec;
}

RunRecord simulate_driven(const DrivenCableSim& sim, FdmState state,
                          const HeadDriver& driver, double duration, int record_every) {
  RunRecord rec;
  record_frame(rec, 0.0, state, false);
  const double dt = sim.time_step();
  const auto steps = static_cast<long>(std::llround(duration / dt));
  for (long k = 0; k < steps; ++k) {
    sim.rk4_step(state, driver, k * dt, dt);
    if (!finite_and_bounded(state.positions) || !finite_and_bounded(state.velocities))
      throw NumericalBlowup((k + 1) * dt);
    if ((k + 1) % record_every == 0) record_frame(rec, (k + 1) * dt, state, false);
  }
  return rec;
}

double cable_elastic_energy(const Mat3X& positions, const CableParams& cable, double h_s) {
  const int n = static_cast<int>(positions.cols()) - 1;
  double e = 0.0;
  for (int i = 0; i < n; ++i) {
    const double eps = (positions.col(i + 1) - positions.col(i)).norm() / h_s - 1.0;
    e += 0.5 * cable.axial_stiffness() * eps * eps * h_s;
  }
  return e;
}

double cable_kinetic_energy(const Mat3X& velocities, const CableParams& cable, double h_s) {
  const int n = static_cast<int>(velocities.cols()) - 1;
  const double mu = cable.linear_mass();
  double e = 0.5 * (0.5 * mu * h_s) * velocities.col(0).squaredNorm();
  e += 0.5 * (0.5 * mu * h_s) * velocities.col(n).squaredNorm();
  for (int i = 1; i < n; ++i) e += 0.5 * mu * h_s * velocities.col(i).squaredNorm();
  return e;
}

Mat3X pinned_equilibrium(const CableParams& cable, const FdmConfig& cfg, double g,
                         const Vec3& head, const Vec3& tail) {
  const int n = cfg.segment_count;
  const double h = cfg.spacing(cable.length);
  Mat3X pos(3, n + 1), vel(3, n + 1), acc(3, n + 1);
  for (int i = 0; i <= n; ++i) {
    const double a = static_cast<double>(i) / n;
    pos.col(i) = (1.0 - a) * head + a * tail;
  }
  vel.setZero();
  acc.setZero();

  // Damped relaxation: semi-implicit Euler with strong viscous drag and
  // periodic velocity resets until the interior residual is negligible.
  const double wave_speed = std::sqrt(cable.young_modulus / cable.density);
  const double dt = 0.2 * h / wave_speed;
  const double damping = 2.0 * wave_speed / cable.length;
  const int max_iters = 4000000;
  const int reset_every = static_cast<int>(std::max(1.0, 0.5 / dt / 10.0));
  double residual = 1e30;
  for (int it = 0; it < max_iters; ++it) {
    interior_accelerations(pos, vel, cable, g, h, acc);
    // Pinned-tail variant: overwrite the tail row (node n is fixed, the
    // ghost closure does not apply while both ends are held).
    acc.col(0).setZero();
    acc.col(n).setZero();
    residual = 0.0;
    for (int i = 1; i < n; ++i) residual = std::max(residual, acc.col(i).norm());
    if (residual < 1e-7) break;
    for (int i = 1; i < n; ++i) {
      vel.col(i) += dt * (acc.col(i) - damping * vel.col(i));
      pos.col(i) += dt * vel.col(i);
    }
    if ((it + 1) % reset_every == 0) vel.setZero();
  }
  if (residual >= 1e-7)
    throw NoConvergence("pinned equilibrium relaxation did not settle");
  return pos;
}

}  // namespace flexcable
