#include "flexcable/nmpc.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

namespace flexcable {

int OcpConfig::steps() const {
  const auto h = static_cast<int>(std::llround(horizon / step));
  return h;
}

void OcpConfig::validate(int state_dim) const {
  const double h = horizon / step;
  if (step <= 0 || horizon <= 0 || std::abs(h - std::round(h)) > 1e-9 || steps() < 1)
    throw ConfigError("nmpc.horizon", "must be a positive multiple of the control step");
  if (q_diag.size() != state_dim)
    throw ConfigError("nmpc.q_diag", "length must match the reduced state dimension");
  if ((q_diag.array() < 0).any()) throw ConfigError("nmpc.q_diag", "entries must be >= 0");
  if ((r_diag.array() < 0).any()) throw ConfigError("nmpc.r_diag", "entries must be >= 0");
  if (((u_upper - u_lower).array() <= 0).any())
    throw ConfigError("nmpc.u_bounds", "lower bound must be below upper bound");
}

namespace {

MatX clip_inputs(MatX u, const OcpConfig& cfg) {
  for (int k = 0; k < u.cols(); ++k)
    for (int a = 0; a < 3; ++a)
      u(a, k) = std::clamp(u(a, k), cfg.u_lower[a], cfg.u_upper[a]);
  return u;
}

struct Rollout {
  std::vector<VecX> states;  // X_1..X_H
  double cost = 0.0;
};

Rollout roll(const OcpDynamics& dyn, const VecX& x0, const std::vector<VecX>& ref,
             const OcpConfig& cfg, const MatX& u) {
  const int h = static_cast<int>(u.cols());
  Rollout r;
  r.states.resize(h);
  VecX x = x0;
  for (int k = 0; k < h; ++k) {
    x = dyn.step(x, u.col(k));
    r.states[k] = x;
    const VecX err = ref[k] - x;
    r.cost += err.dot(cfg.q_diag.cwiseProduct(err));
    r.cost += u.col(k).dot(cfg.r_diag.cwiseProduct(u.col(k)));
  }
  return r;
}

// Cost gradient via forward sensitivity: S_k = dX_k/dU is propagated through
// the exact tangents of the discrete step.
double gradient(const OcpDynamics& dyn, const VecX& x0, const std::vector<VecX>& ref,
                const OcpConfig& cfg, const MatX& u, MatX& grad,
                std::vector<VecX>& states) {
  const int h = static_cast<int>(u.cols());
  const int n = dyn.dim();
  grad.setZero(3, h);
  states.resize(h);

  MatX sens = MatX::Zero(n, 3 * h);
  MatX a(n, n), b(n, 3);
  VecX x = x0, x_next(n);
  double cost = 0.0;
  for (int k = 0; k < h; ++k) {
    dyn.step_with_sensitivity(x, u.col(k), x_next, a, b);
    if (k == 0)
      sens.leftCols(3) = b;
    else {
      sens.leftCols(3 * k) = a * sens.leftCols(3 * k);
      sens.middleCols(3 * k, 3) = b;
    }
    x = x_next;
    states[k] = x;

    const VecX err = x - ref[k];
    cost += err.dot(cfg.q_diag.cwiseProduct(err));
    cost += u.col(k).dot(cfg.r_diag.cwiseProduct(u.col(k)));
    const VecX weighted = 2.0 * cfg.q_diag.cwiseProduct(err);
    const VecX contrib = sens.leftCols(3 * (k + 1)).transpose() * weighted;
    for (int j = 0; j <= k; ++j) grad.col(j) += contrib.segment<3>(3 * j);
    grad.col(k) += 2.0 * cfg.r_diag.cwiseProduct(u.col(k));
  }
  return cost;
}

double projected_gradient_norm(const MatX& u, const MatX& grad, const OcpConfig& cfg) {
  double norm_sq = 0.0;
  for (int k = 0; k < u.cols(); ++k)
    for (int a = 0; a < 3; ++a) {
      const double moved = std::clamp(u(a, k) - grad(a, k), cfg.u_lower[a], cfg.u_upper[a]);
      const double d = u(a, k) - moved;
      norm_sq += d * d;
    }
  return std::sqrt(norm_sq);
}

}  // namespace

double ocp_objective(const OcpDynamics& dyn, const VecX& x0,
                     const std::vector<VecX>& ref, const OcpConfig& cfg, const MatX& u) {
  return roll(dyn, x0, ref, cfg, u).cost;
}

OcpSolution solve_ocp(const OcpDynamics& dyn, const VecX& x0,
                      const std::vector<VecX>& reference, const OcpConfig& cfg,
                      const std::optional<MatX>& warm_start) {
  const auto t_start = std::chrono::steady_clock::now();
  cfg.validate(dyn.dim());
  const int h = cfg.steps();
  if (static_cast<int>(reference.size()) < h)
    throw DimensionMismatch("reference trajectory shorter than the horizon");
  std::vector<VecX> ref(reference.begin(), reference.begin() + h);

  MatX u = warm_start ? clip_inputs(*warm_start, cfg) : MatX::Zero(3, h);
  MatX grad(3, h);
  std::vector<VecX> states;
  double cost = gradient(dyn, x0, ref, cfg, u, grad, states);

  OcpSolution sol;
  sol.objective_trace.push_back(cost);

  double alpha = 1.0 / std::max(1e-8, grad.cwiseAbs().maxCoeff());
  alpha = std::min(alpha, 1.0);
  MatX u_prev = u;
  double t_momentum = 1.0;
  int iter = 0;
  double pg_norm = projected_gradient_norm(u, grad, cfg);

  for (; iter < cfg.max_iterations && pg_norm > cfg.tolerance; ++iter) {
    MatX base = u;
    if (cfg.momentum && iter > 0) {
      const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t_momentum * t_momentum));
      base = clip_inputs(u + ((t_momentum - 1.0) / t_next) * (u - u_prev), cfg);
      t_momentum = t_next;
    }

    MatX grad_base = grad;
    std::vector<VecX> states_base;
    if (cfg.momentum && iter > 0)
      gradient(dyn, x0, ref, cfg, base, grad_base, states_base);

    bool accepted = false;
    for (int bt = 0; bt < 30; ++bt) {
      const MatX cand = clip_inputs(base - alpha * grad_base, cfg);
      const double step_sq = (cand - base).squaredNorm();
      if (step_sq < 1e-30) break;
      Rollout r = roll(dyn, x0, ref, cfg, cand);
      // Sufficient decrease against the *current* iterate keeps the
      // objective trace monotone even on momentum steps.
      if (r.cost <= cost - 1e-4 * step_sq / alpha) {
        u_prev = u;
        u = cand;
        cost = r.cost;
        states = std::move(r.states);
        alpha *= 1.3;
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) {
      // Momentum extrapolation (or scaling) failed; restart from a plain step.
      if (cfg.momentum && t_momentum != 1.0) {
        t_momentum = 1.0;
        continue;
      }
      break;
    }
    cost = gradient(dyn, x0, ref, cfg, u, grad, states);
    sol.objective_trace.push_back(cost);
    pg_norm = projected_gradient_norm(u, grad, cfg);
  }

  sol.inputs = u;
  sol.predicted = states;
  sol.objective = cost;
  sol.iterations = iter;
  sol.projected_gradient_norm = pg_norm;
  sol.converged = pg_norm <= cfg.tolerance;
  sol.solve_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return sol;
}

ControlTickResult control_tick(const Mat3X& positions, const Mat3X& velocities,
                               const RomPrediction& prediction, const OcpConfig& cfg,
                               const ReferenceProvider& reference, double t,
                               double total_mass, double g,
                               const std::optional<OcpSolution>& previous) {
  const RomDynamics& rom = prediction.rom();
  const RomState measured = project(positions, velocities, rom.bank(), rom.order());
  const VecX x0 = measured.to_vector();

  const int h = cfg.steps();
  std::vector<VecX> ref(h);
  for (int k = 0; k < h; ++k) ref[k] = reference(t + (k + 1) * cfg.step);

  std::optional<MatX> warm;
  if (previous && previous->inputs.cols() == h) {
    MatX shifted(3, h);
    shifted.leftCols(h - 1) = previous->inputs.rightCols(h - 1);
    shifted.col(h - 1) = previous->inputs.col(h - 1);
    warm = shifted;
  }

  ControlTickResult result;
  result.solution = solve_ocp(prediction, x0, ref, cfg, warm);
  const Vec3 u0 = result.solution.inputs.col(0);
  result.command = acceleration_to_attitude_command(u0, total_mass, g);
  return result;
}

}  // namespace flexcable
