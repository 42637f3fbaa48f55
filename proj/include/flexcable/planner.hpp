#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "flexcable/pod_rom.hpp"
#include "flexcable/quad_control.hpp"

namespace flexcable {

// Horizontal circle flown in 5 s, starting at the origin.
PositionReference circle_reference(double t);
// Constant-height loop with a 10 s period used on the hardware rig.
PositionReference eight_reference(double t);

enum class TrajectoryKind { fourier, polynomial };

// Parametrized head-tip trajectory with exact first and second derivatives.
// Fourier: value = a0 + sum_i (a_i sin(i pi t / t_r) + b_i cos(i pi t / t_r)).
// Polynomial: value = sum_i a_i t^i (b unused).
struct HeadTrajectory {
  TrajectoryKind kind = TrajectoryKind::fourier;
  double duration = 1.5;                 // t_r [s]
  std::array<VecX, 3> a;                 // per-axis coefficients (may be empty)
  std::array<VecX, 3> b;                 // cosine coefficients (fourier only)

  PositionReference eval(double t) const;
};

// Periodic reduced-state trajectory reached by rolling the model under a
// periodic head acceleration until successive periods coincide.
struct LimitCycle {
  std::vector<VecX> states;   // one period, sampled every `step`
  std::vector<Vec3> inputs;   // head acceleration at the same samples
  double period = 0.0;
  double step = 0.0;
  int periods_to_converge = 0;

  // Reference state at absolute time t (wraps modulo the period).
  VecX at(double t) const;
};

using HeadReference = std::function<PositionReference(double)>;

LimitCycle limit_cycle_reference(const HeadReference& head, double period,
                                 const RomDynamics& dynamics, const RomState& initial,
                                 double step, double tolerance = 1e-4,
                                 int max_periods = 60);

// Planar opening: points crossing plane_axis = plane_offset must lie inside
// the box spanned by the two transverse axes.
struct WindowConstraint {
  int plane_axis = 0;
  double plane_offset = 1.0;
  std::array<int, 2> box_axes = {1, 2};
  std::array<double, 2> lower = {-0.2, -0.2};
  std::array<double, 2> upper = {0.2, 0.2};
  std::optional<double> quad_clearance;  // informational; baked into bounds
};

struct WindowCrossing {
  double time = 0.0;
  int point = 0;
  Vec3 location = Vec3::Zero();
  double margin = 0.0;  // distance to the nearest box edge; negative = outside
};

struct WindowReport {
  bool feasible = true;
  double worst_margin = std::numeric_limits<double>::infinity();
  int crossings = 0;
  std::vector<WindowCrossing> violations;
};

// Checks every material-point path against the window; crossing instants are
// bracketed by linear interpolation between consecutive samples.
WindowReport check_window(const std::vector<double>& times,
                          const std::vector<Mat3X>& shapes,
                          const WindowConstraint& window);

// Incremental variant used inside fitness loops.
class WindowTracker {
 public:
  explicit WindowTracker(const WindowConstraint& window) : window_(window) {}
  void observe(double t, const Mat3X& shape);
  const WindowReport& report() const { return report_; }

 private:
  WindowConstraint window_;
  WindowReport report_;
  double prev_time_ = 0.0;
  Mat3X prev_;
  bool has_prev_ = false;
};

struct PsoConfig {
  int swarm = 60;
  int iterations = 300;
  double inertia = 0.72;
  double cognitive = 1.49;
  double social = 1.49;
  std::uint64_t seed = 0;
  std::optional<double> early_stop;  // stop once best fitness drops below
};

struct PsoResult {
  VecX best;
  double best_fitness = 0.0;
  std::vector<double> trace;  // best fitness per iteration, non-increasing
  int iterations = 0;
};

using Fitness = std::function<double(const VecX&)>;

// Global-best particle swarm over a box; deterministic per seed.
PsoResult pso_minimize(const Fitness& fitness, const VecX& lower, const VecX& upper,
                       const PsoConfig& cfg);

struct PlanConfig {
  TrajectoryKind kind = TrajectoryKind::fourier;
  int terms = 5;               // K_r
  double duration = 1.5;       // t_r [s]
  double terminal_lower = 2.0; // box on the head plane-axis coordinate at t_r
  double terminal_upper = 3.0;
  double accel_bound = 20.0;   // [m/s^2], sampled at 1 ms
  double rollout_step = 0.005; // [s]
  double coeff_bound = 4.0;    // PSO search box half-width per coefficient
  PsoConfig pso;
};

struct PlanResult {
  HeadTrajectory trajectory;
  std::vector<VecX> reference_states;  // rollout at rollout_step, t = 0..t_r
  std::vector<Vec3> reference_inputs;
  WindowReport window;
  double fitness = 0.0;
  bool feasible = false;
  std::vector<double> fitness_trace;
};

// Searches trajectory coefficients so the rolled reduced model threads the
// window, honours the acceleration box, and ends in the terminal interval.
// The fitness is the sum of squared constraint violations (feasibility
// problem); the best candidate is returned even when infeasible.
PlanResult plan_window_crossing(const RomState& initial, const WindowConstraint& window,
                                const PlanConfig& cfg, const RomDynamics& dynamics);

}  // namespace flexcable
