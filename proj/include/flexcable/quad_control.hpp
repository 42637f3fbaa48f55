#pragma once

#include <functional>
#include <vector>

#include "flexcable/core_model.hpp"

namespace flexcable {

// Diagonal PD gains of the two cascaded loops.
struct PidGains {
  Vec3 kp_pos = Vec3(8, 8, 8);
  Vec3 kd_pos = Vec3(4, 4, 4);
  Vec3 kp_att = Vec3(1500, 1500, 1500);
  Vec3 kd_att = Vec3(80, 80, 80);
};

struct AttitudeCommand {
  double thrust = 0.0;            // desired total thrust magnitude [N]
  Vec3 angles = Vec3::Zero();     // desired Tait-Bryan angles [rad]
  Vec3 rates = Vec3::Zero();      // desired angle rates [rad/s]
};

struct PositionReference {
  Vec3 position = Vec3::Zero();
  Vec3 velocity = Vec3::Zero();
  Vec3 acceleration = Vec3::Zero();  // feedforward; zero for the plain PD law
};

// Maps a desired CoM acceleration to thrust magnitude + tilt angles, heading
// held at zero. Arcsin arguments are clamped to [-1,1]; an argument beyond
// 1 + 1e-6 before clamping raises UnreachableAttitude.
AttitudeCommand acceleration_to_attitude_command(const Vec3& accel_desired, double mass,
                                                 double g);

// Outer position loop: PD + feedforward to desired acceleration, then the
// thrust/tilt extraction. `mass` is quadrotor plus cable.
AttitudeCommand outer_loop(const Vec3& position, const Vec3& velocity,
                           const PositionReference& ref, const PidGains& gains,
                           double mass, double g);

// Inner attitude loop: PD in angle space, converted to body-rate acceleration
// and torque with gyroscopic compensation.
Vec3 inner_loop(const Attitude& att, const AttitudeCommand& cmd, const PidGains& gains,
                const QuadParams& quad);

// Linear-chirp excitation used for snapshot collection. After the chirp the
// collection run brakes smoothly (cubic taper) and holds position so the
// free decay of the cable enters the snapshot set.
struct SweepConfig {
  Vec3 amplitude = Vec3(1.0, 1.0, 0.5);  // [m]
  double f_start = 0.04;                 // [Hz]
  double f_end = 0.45;                   // [Hz]
  double duration = 60.0;                // [s]
  double taper = 1.0;                    // deceleration window [s]
  double hold = 40.0;                    // post-sweep hold [s]

  double total_duration() const { return duration + taper + hold; }
};
// Chirp value at t in [0, duration]; exact analytic derivatives.
PositionReference sweep_reference(double t, const SweepConfig& cfg);
// Full collection reference: chirp, then a smooth stop, then a hold.
PositionReference collection_reference(double t, const SweepConfig& cfg);

// Gain-tuning search: projected gradient descent with central finite
// differences on the six position-loop gains.
struct TuneOptions {
  double lower = 0.0;
  double upper = 20.0;
  double fd_step = 0.05;
  int max_iters = 30;
  double grad_tol = 1e-3;
  double initial_step = 0.5;
};

struct TuneResult {
  PidGains gains;
  double objective = 0.0;
  std::vector<double> trace;       // objective after each accepted iterate
  bool at_bounds = false;          // any gain clamped at the search box edge
  int evaluations = 0;
};

// Minimizes `objective` over (kp_pos, kd_pos); attitude gains are left
// untouched. Evaluations may run on `threads` workers; the reduction order
// is fixed so results are deterministic.
TuneResult tune_gains(const std::function<double(const PidGains&)>& objective,
                      const PidGains& initial, const TuneOptions& opts, int threads = 1);

}  // namespace flexcable
