#pragma once

#include <memory>
#include <optional>
#include <vector>

#include "flexcable/pod_rom.hpp"
#include "flexcable/quad_control.hpp"

namespace flexcable {

// Discrete prediction model used by the receding-horizon solver.
class OcpDynamics {
 public:
  virtual ~OcpDynamics() = default;
  virtual int dim() const = 0;
  virtual VecX step(const VecX& x, const Vec3& u) const = 0;
  virtual void step_with_sensitivity(const VecX& x, const Vec3& u, VecX& x_next,
                                     MatX& d_dx, MatX& d_du) const = 0;
};

// Reduced cable dynamics discretized with one RK4 step per control period.
class RomPrediction final : public OcpDynamics {
 public:
  RomPrediction(RomDynamics dynamics, double dt) : dyn_(std::move(dynamics)), dt_(dt) {}
  int dim() const override { return dyn_.dim(); }
  VecX step(const VecX& x, const Vec3& u) const override { return dyn_.step(x, u, dt_); }
  void step_with_sensitivity(const VecX& x, const Vec3& u, VecX& x_next, MatX& d_dx,
                             MatX& d_du) const override {
    dyn_.step_with_sensitivity(x, u, dt_, x_next, d_dx, d_du);
  }
  const RomDynamics& rom() const { return dyn_; }
  double step_size() const { return dt_; }

 private:
  RomDynamics dyn_;
  double dt_;
};

struct OcpConfig {
  double horizon = 0.4;       // t_p [s]
  double step = 0.02;         // t_h [s]
  VecX q_diag;                // state weights, length 6(K+1)
  Vec3 r_diag = Vec3(0.001, 0.001, 0.001);
  Vec3 u_lower = Vec3(-20, -20, -20);  // [m/s^2]
  Vec3 u_upper = Vec3(20, 20, 20);
  double tolerance = 1e-4;    // on the projected-gradient norm
  int max_iterations = 200;
  bool momentum = false;

  int steps() const;
  void validate(int state_dim) const;
};

struct OcpSolution {
  MatX inputs;                  // 3 x H, within bounds
  std::vector<VecX> predicted;  // states X_1..X_H
  double objective = 0.0;
  int iterations = 0;
  double solve_seconds = 0.0;
  bool converged = false;
  double projected_gradient_norm = 0.0;
  std::vector<double> objective_trace;
};

// Box-constrained finite-horizon problem solved by projected gradient descent
// with backtracking; gradients come from forward sensitivity propagation of
// the discrete rollout. Non-convergence is reported, never thrown; the best
// sequence found is always returned.
OcpSolution solve_ocp(const OcpDynamics& dynamics, const VecX& x0,
                      const std::vector<VecX>& reference, const OcpConfig& cfg,
                      const std::optional<MatX>& warm_start = std::nullopt);

// Quadratic cost of a concrete input sequence under the same rollout.
double ocp_objective(const OcpDynamics& dynamics, const VecX& x0,
                     const std::vector<VecX>& reference, const OcpConfig& cfg,
                     const MatX& inputs);

// Supplies the reference state at an absolute time.
using ReferenceProvider = std::function<VecX(double)>;

struct ControlTickResult {
  AttitudeCommand command;
  OcpSolution solution;
};

// One controller tick: project the measured cable state, solve from the
// shifted warm start, and map the first optimal input to an attitude command.
ControlTickResult control_tick(const Mat3X& positions, const Mat3X& velocities,
                               const RomPrediction& prediction, const OcpConfig& cfg,
                               const ReferenceProvider& reference, double t,
                               double total_mass, double g,
                               const std::optional<OcpSolution>& previous);

}  // namespace flexcable
