#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "flexcable/core_model.hpp"

namespace flexcable {

// Full simulation state: node 0 is the quadrotor CoM, nodes 1..N the cable.
struct FdmState {
  Mat3X positions;   // 3 x (N+1) [m], world frame
  Mat3X velocities;  // 3 x (N+1) [m/s]
  Attitude att;

  int node_count() const { return static_cast<int>(positions.cols()); }
  int segments() const { return node_count() - 1; }
};

struct FdmConfig {
  int segment_count = 100;  // N >= 2
  double time_step = 5e-4;  // [s]

  double spacing(double length) const { return length / segment_count; }
  void validate() const;
};

// Piecewise-constant random force held for 1/frequency seconds per axis,
// uniform in [-amplitude, amplitude], reproducible per seed.
struct Disturbance {
  double amplitude = 0.0;  // [N]
  double frequency = 0.5;  // [Hz]
  std::uint64_t seed = 0;

  Vec3 sample(double t) const;
};

// Straight vertical state hanging below `head`: unstretched when
// `stretched` is false, on the closed-form sag profile otherwise.
FdmState make_vertical_state(const CableParams& cable, const FdmConfig& cfg,
                             const Vec3& head, bool stretched);
// Straight horizontal state along -x from `head`, unstretched.
FdmState make_horizontal_state(const CableParams& cable, const FdmConfig& cfg,
                               const Vec3& head);

// Fictitious node beyond the free tail enforcing zero strain there.
Vec3 ghost_tail_node(const Mat3X& positions, double h_s);

// Nodal accelerations of the interior nodes 1..N (central stencil, drag,
// gravity); the tail stencil is closed with the ghost node.
void interior_accelerations(const Mat3X& positions, const Mat3X& velocities,
                            const CableParams& cable, double g, double h_s,
                            Mat3X& acc);

// Head (quadrotor CoM) acceleration with the trapezoidal tension elimination;
// `thrust_world` is the rotated total rotor thrust, `ext_force` an optional
// extra force on the quadrotor.
Vec3 head_acceleration(const Mat3X& velocities, const Mat3X& interior_acc,
                       const Vec3& thrust_world, const Vec3& ext_force,
                       const CableParams& cable, const QuadParams& quad, double h_s);

// Rigid-body rotational dynamics resolved to Tait-Bryan accelerations.
struct AttitudeDerivative {
  Vec3 omega_dot;    // body frame
  Vec3 angle_accel;  // second derivative of the angles
};
AttitudeDerivative attitude_dynamics(const Attitude& att, const Vec3& torque_body,
                                     const QuadParams& quad);

// Inputs held constant across one integration step.
struct FdmInputs {
  std::array<double, 4> rotor_speeds = {0, 0, 0, 0};
  Vec3 ext_force = Vec3::Zero();
};

class FdmSim {
 public:
  FdmSim(CableParams cable, QuadParams quad, FdmConfig cfg);

  // One classical Runge-Kutta step; throws NumericalBlowup on divergence.
  void rk4_step(FdmState& state, const FdmInputs& inputs, double dt) const;

  double spacing() const { return h_s_; }
  const CableParams& cable() const { return cable_; }
  const QuadParams& quad() const { return quad_; }
  const FdmConfig& config() const { return cfg_; }

 private:
  struct Derivative {
    Mat3X vel, acc;
    Vec3 angle_rates, angle_accel;
  };
  void eval(const FdmState& s, const FdmInputs& u, Derivative& d) const;

  CableParams cable_;
  QuadParams quad_;
  FdmConfig cfg_;
  double h_s_;
  mutable Mat3X scratch_acc_;
  mutable std::vector<Derivative> stages_;
  mutable FdmState stage_state_;
};

// Prescribed head trajectory for boundary-driven runs.
struct HeadDriver {
  std::function<Vec3(double)> position;
  std::function<Vec3(double)> velocity;

  static HeadDriver pinned(const Vec3& p);
};

// Cable-only simulator with the head position imposed kinematically.
class DrivenCableSim {
 public:
  DrivenCableSim(CableParams cable, FdmConfig cfg, double g);

  void rk4_step(FdmState& state, const HeadDriver& driver, double t, double dt) const;

  double spacing() const { return h_s_; }
  double time_step() const { return cfg_.time_step; }
  const CableParams& cable() const { return cable_; }

 private:
  struct Derivative {
    Mat3X vel, acc;
  };
  void eval(const FdmState& s, const HeadDriver& driver, double t, Derivative& d) const;

  CableParams cable_;
  FdmConfig cfg_;
  double g_;
  double h_s_;
  mutable std::vector<Derivative> stages_;
  mutable FdmState stage_state_;
};

// Time-stamped trajectory of recorded snapshots.
struct RunRecord {
  std::vector<double> times;
  std::vector<Mat3X> positions;
  std::vector<Mat3X> velocities;
  std::vector<Attitude> attitudes;  // empty for head-driven runs

  std::size_t frames() const { return times.size(); }
};

// Rotor-speed command source polled at the control period.
using ControlCallback = std::function<FdmInputs(double, const FdmState&)>;

struct SimulateOptions {
  double duration = 1.0;          // [s]
  double control_period = 0.02;   // [s]
  int record_every = 40;          // physics steps per recorded frame
  std::optional<Disturbance> disturbance;
};

// Runs the coupled system under a controller callback; deterministic.
RunRecord simulate(const FdmSim& sim, FdmState state, const ControlCallback& control,
                   const SimulateOptions& opts);

// Runs the head-driven cable; `record_every` in physics steps.
RunRecord simulate_driven(const DrivenCableSim& sim, FdmState state,
                          const HeadDriver& driver, double duration, int record_every);

// Discrete elastic energy: sum of 0.5*EA*eps^2*h over the N segments.
double cable_elastic_energy(const Mat3X& positions, const CableParams& cable, double h_s);
// Kinetic energy of the cable mass with trapezoidal node lumping (no quad mass).
double cable_kinetic_energy(const Mat3X& velocities, const CableParams& cable, double h_s);

// Static shape of the cable with both endpoints pinned, found by damped
// relaxation; deterministic. Used to initialize identification rollouts.
Mat3X pinned_equilibrium(const CableParams& cable, const FdmConfig& cfg, double g,
                         const Vec3& head, const Vec3& tail);

}  // namespace flexcable
