#include "flexcable/planner.hpp"

#include <cmath>
#include <random>

namespace flexcable {

PositionReference circle_reference(double t) {
  const double w = 2.0 * M_PI / 5.0;
  PositionReference ref;
  ref.position = Vec3(-1.0 + std::cos(w * t), std::sin(w * t), 0.0);
  ref.velocity = Vec3(-w * std::sin(w * t), w * std::cos(w * t), 0.0);
  ref.acceleration = Vec3(-w * w * std::cos(w * t), -w * w * std::sin(w * t), 0.0);
  return ref;
}

PositionReference eight_reference(double t) {
  const double w = 2.0 * M_PI / 10.0;
  PositionReference ref;
  ref.position = Vec3(std::sin(w * t), std::cos(w * t), 1.5);
  ref.velocity = Vec3(w * std::cos(w * t), -w * std::sin(w * t), 0.0);
  ref.acceleration = Vec3(-w * w * std::sin(w * t), -w * w * std::cos(w * t), 0.0);
  return ref;
}

PositionReference HeadTrajectory::eval(double t) const {
  PositionReference ref;
  for (int axis = 0; axis < 3; ++axis) {
    const VecX& ca = a[axis];
    const VecX& cb = b[axis];
    double p = 0, v = 0, acc = 0;
    if (kind == TrajectoryKind::fourier) {
      if (ca.size() > 0) p += ca[0];
      for (int i = 1; i < ca.size(); ++i) {
        const double w = i * M_PI / duration;
        p += ca[i] * std::sin(w * t);
        v += ca[i] * w * std::cos(w * t);
        acc -= ca[i] * w * w * std::sin(w * t);
      }
      for (int i = 1; i <= cb.size(); ++i) {
        const double w = i * M_PI / duration;
        p += cb[i - 1] * std::cos(w * t);
        v -= cb[i - 1] * w * std::sin(w * t);
        acc -= cb[i - 1] * w * w * std::cos(w * t);
      }
    } else {
      double tp = 1.0;  // t^i
      for (int i = 0; i < ca.size(); ++i) {
        p += ca[i] * tp;
        if (i + 1 < ca.size()) v += ca[i + 1] * (i + 1) * tp;
        if (i + 2 < ca.size()) acc += ca[i + 2] * (i + 2) * (i + 1) * tp;
        tp *= t;
      }
    }
    ref.position[axis] = p;
    ref.velocity[axis] = v;
    ref.acceleration[axis] = acc;
  }
  return ref;
}

VecX LimitCycle::at(double t) const {
  const auto count = static_cast<long>(states.size());
  long idx = static_cast<long>(std::llround(t / step)) % count;
  if (idx < 0) idx += count;
  return states[idx];
}

LimitCycle limit_cycle_reference(const HeadReference& head, double period,
                                 const RomDynamics& dynamics, const RomState& initial,
                                 double step, double tolerance, int max_periods) {
  const auto samples = static_cast<int>(std::llround(period / step));
  if (samples < 1) throw ConfigError("planner.limit_cycle", "period shorter than the step");

  VecX x = initial.to_vector();
  std::vector<VecX> prev_period, cur_period;
  LimitCycle cycle;
  cycle.period = period;
  cycle.step = step;

  for (int p = 0; p < max_periods; ++p) {
    cur_period.clear();
    std::vector<Vec3> inputs;
    for (int k = 0; k < samples; ++k) {
      cur_period.push_back(x);
      // Midpoint sampling of the held input; the left endpoint would bias
      // the double-integrated head position secularly.
      const double t = (p * samples + k + 0.5) * step;
      const Vec3 u = head(t).acceleration;
      inputs.push_back(u);
      x = dynamics.step(x, u, step);
    }
    if (!prev_period.empty()) {
      double diff = 0.0;
      for (int k = 0; k < samples; ++k)
        diff = std::max(diff, (cur_period[k] - prev_period[k]).norm());
      if (diff < tolerance) {
        cycle.states = cur_period;
        cycle.inputs = inputs;
        cycle.periods_to_converge = p + 1;
        return cycle;
      }
    }
    prev_period = cur_period;
  }
  throw NoConvergence("head motion did not settle onto a periodic cable trajectory");
}

namespace {

void observe_pair(const WindowConstraint& w, WindowReport& report, double t0, double t1,
                  const Mat3X& s0, const Mat3X& s1) {
  const int cols = static_cast<int>(s0.cols());
  for (int j = 0; j < cols; ++j) {
    const double c0 = s0(w.plane_axis, j) - w.plane_offset;
    const double c1 = s1(w.plane_axis, j) - w.plane_offset;
    if (c0 == 0.0 && c1 == 0.0) continue;  // sliding inside the plane
    const bool crosses = (c0 <= 0.0 && c1 > 0.0) || (c0 >= 0.0 && c1 < 0.0) ||
                         (c0 < 0.0 && c1 >= 0.0) || (c0 > 0.0 && c1 <= 0.0);
    if (!crosses || c0 == c1) continue;
    const double s = c0 / (c0 - c1);
    if (s < 0.0 || s > 1.0) continue;
    const Vec3 p = (1.0 - s) * s0.col(j) + s * s1.col(j);
    double margin = std::numeric_limits<double>::infinity();
    for (int k = 0; k < 2; ++k) {
      const double v = p[w.box_axes[k]];
      margin = std::min(margin, std::min(w.upper[k] - v, v - w.lower[k]));
    }
    ++report.crossings;
    report.worst_margin = std::min(report.worst_margin, margin);
    if (margin <= 0.0) {
      report.feasible = false;
      report.violations.push_back({(1.0 - s) * t0 + s * t1, j, p, margin});
    }
  }
}

}  // namespace

WindowReport check_window(const std::vector<double>& times,
                          const std::vector<Mat3X>& shapes,
                          const WindowConstraint& window) {
  WindowReport report;
  for (std::size_t f = 1; f < shapes.size(); ++f)
    observe_pair(window, report, times[f - 1], times[f], shapes[f - 1], shapes[f]);
  return report;
}

void WindowTracker::observe(double t, const Mat3X& shape) {
  if (has_prev_) observe_pair(window_, report_, prev_time_, t, prev_, shape);
  prev_ = shape;
  prev_time_ = t;
  has_prev_ = true;
}

PsoResult pso_minimize(const Fitness& fitness, const VecX& lower, const VecX& upper,
                       const PsoConfig& cfg) {
  const int dim = static_cast<int>(lower.size());
  if (dim < 1 || upper.size() != dim)
    throw DimensionMismatch("search bounds are empty or inconsistent");
  if (((upper - lower).array() <= 0).any())
    throw ConfigError("pso.bounds", "lower bound must be below upper bound");

  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const VecX range = upper - lower;

  MatX x(dim, cfg.swarm), v(dim, cfg.swarm), pbest(dim, cfg.swarm);
  VecX pbest_f(cfg.swarm);
  VecX gbest;
  double gbest_f = std::numeric_limits<double>::infinity();

  for (int s = 0; s < cfg.swarm; ++s) {
    for (int d = 0; d < dim; ++d) {
      x(d, s) = lower[d] + unit(rng) * range[d];
      v(d, s) = (unit(rng) - 0.5) * range[d];
    }
    pbest.col(s) = x.col(s);
    pbest_f[s] = fitness(x.col(s));
    if (pbest_f[s] < gbest_f) {
      gbest_f = pbest_f[s];
      gbest = x.col(s);
    }
  }

  PsoResult res;
  res.trace.push_back(gbest_f);
  for (int it = 0; it < cfg.iterations; ++it) {
    if (cfg.early_stop && gbest_f < *cfg.early_stop) break;
    for (int s = 0; s < cfg.swarm; ++s) {
      for (int d = 0; d < dim; ++d) {
        const double r1 = unit(rng), r2 = unit(rng);
        v(d, s) = cfg.inertia * v(d, s) + cfg.cognitive * r1 * (pbest(d, s) - x(d, s)) +
                  cfg.social * r2 * (gbest[d] - x(d, s));
        x(d, s) = std::clamp(x(d, s) + v(d, s), lower[d], upper[d]);
      }
      const double f = fitness(x.col(s));
      if (f < pbest_f[s]) {
        pbest_f[s] = f;
        pbest.col(s) = x.col(s);
      }
      if (f < gbest_f) {
        gbest_f = f;
        gbest = x.col(s);
      }
    }
    res.trace.push_back(gbest_f);
    res.iterations = it + 1;
  }

  res.best = gbest;
  res.best_fitness = gbest_f;
  return res;
}

namespace {

// The free coefficients exclude the two lowest terms per active axis; those
// are recovered from the start position and velocity, so every candidate
// matches the initial head state exactly.
int plan_dimension(const PlanConfig& cfg) {
  return (cfg.kind == TrajectoryKind::fourier) ? 2 * cfg.terms - 1
                                               : 2 * (cfg.terms - 1);
}

HeadTrajectory decode_trajectory(const VecX& theta, const PlanConfig& cfg,
                                 const RomState& initial, int plane_axis) {
  HeadTrajectory traj;
  traj.kind = cfg.kind;
  traj.duration = cfg.duration;
  for (int axis = 0; axis < 3; ++axis) traj.a[axis] = VecX::Constant(1, initial.head[axis]);
  const int kr = cfg.terms;

  if (cfg.kind == TrajectoryKind::fourier) {
    // Plan along the window plane axis: free a_2..a_Kr and b_1..b_Kr.
    VecX a = VecX::Zero(kr + 1);
    VecX b = theta.tail(kr);
    a.segment(2, kr - 1) = theta.head(kr - 1);
    // x(0) = a_0 + sum b_i and x'(0) = (pi/t_r) sum i a_i pin a_0 and a_1.
    double ia_sum = 0.0;
    for (int i = 2; i <= kr; ++i) ia_sum += i * a[i];
    a[1] = initial.head_vel[plane_axis] * cfg.duration / M_PI - ia_sum;
    a[0] = initial.head[plane_axis] - b.sum();
    traj.a[plane_axis] = a;
    traj.b[plane_axis] = b;
  } else {
    // Two-axis polynomial plan (plane axis and vertical): free degrees >= 2;
    // the constant and linear terms come from the start state.
    const int free_terms = kr - 1;
    const int axes[2] = {plane_axis, 2};
    for (int which = 0; which < 2; ++which) {
      const int axis = axes[which];
      VecX c = VecX::Zero(kr + 1);
      c[0] = initial.head[axis];
      c[1] = initial.head_vel[axis];
      c.segment(2, free_terms) = theta.segment(which * free_terms, free_terms);
      traj.a[axis] = c;
    }
  }
  return traj;
}

}  // namespace

PlanResult plan_window_crossing(const RomState& initial, const WindowConstraint& window,
                                const PlanConfig& cfg, const RomDynamics& dynamics) {
  const int dim = plan_dimension(cfg);
  const VecX lower = VecX::Constant(dim, -cfg.coeff_bound);
  const VecX upper = VecX::Constant(dim, cfg.coeff_bound);
  const VecX x0 = initial.to_vector();
  const auto steps = static_cast<int>(std::llround(cfg.duration / cfg.rollout_step));

  Mat3X shape_pos, shape_vel;
  RomDynamics rollout_dyn = dynamics;  // private scratch for the fitness loop

  auto evaluate = [&](const VecX& theta, PlanResult* detail) {
    const HeadTrajectory traj = decode_trajectory(theta, cfg, initial, window.plane_axis);
    double penalty = 0.0;

    // Start consistency holds by construction; keep the residual as a guard.
    const PositionReference at0 = traj.eval(0.0);
    penalty += (at0.position - initial.head).squaredNorm();
    penalty += (at0.velocity - initial.head_vel).squaredNorm();

    // Acceleration box, sampled densely on the analytic expression.
    const int acc_samples = static_cast<int>(std::llround(cfg.duration / 0.001));
    for (int k = 0; k <= acc_samples; ++k) {
      const Vec3 acc = traj.eval(k * 0.001).acceleration;
      for (int axis = 0; axis < 3; ++axis) {
        const double over = std::abs(acc[axis]) - cfg.accel_bound;
        if (over > 0) penalty += over * over * 0.001;
      }
    }

    // Rolled reduced trajectory and the window constraint along it.
    WindowTracker tracker(window);
    VecX x = x0;
    reconstruct(RomState::from_vector(x, dynamics.order()), dynamics.bank(), shape_pos,
                shape_vel);
    tracker.observe(0.0, shape_pos);
    if (detail) {
      detail->reference_states.clear();
      detail->reference_inputs.clear();
      detail->reference_states.push_back(x);
    }
    for (int k = 0; k < steps; ++k) {
      const Vec3 u = traj.eval((k + 0.5) * cfg.rollout_step).acceleration;
      x = rollout_dyn.step(x, u, cfg.rollout_step);
      reconstruct(RomState::from_vector(x, dynamics.order()), dynamics.bank(), shape_pos,
                  shape_vel);
      tracker.observe((k + 1) * cfg.rollout_step, shape_pos);
      if (detail) {
        detail->reference_inputs.push_back(u);
        detail->reference_states.push_back(x);
      }
    }
    for (const auto& viol : tracker.report().violations)
      penalty += viol.margin * viol.margin;

    const double terminal = x[3 * dynamics.order() + window.plane_axis];
    if (terminal < cfg.terminal_lower) {
      const double d = cfg.terminal_lower - terminal;
      penalty += d * d;
    } else if (terminal > cfg.terminal_upper) {
      const double d = terminal - cfg.terminal_upper;
      penalty += d * d;
    }

    if (detail) {
      detail->trajectory = traj;
      detail->window = tracker.report();
    }
    return penalty;
  };

  PsoConfig pso = cfg.pso;
  if (!pso.early_stop) pso.early_stop = 1e-6;
  const PsoResult search =
      pso_minimize([&](const VecX& theta) { return evaluate(theta, nullptr); }, lower,
                   upper, pso);

  PlanResult plan;
  plan.fitness = evaluate(search.best, &plan);
  plan.fitness_trace = search.trace;
  plan.feasible = plan.fitness < 1e-6 && plan.window.feasible;
  // Self-consistency: a feasible fitness must imply a clean window pass.
  if (plan.fitness < 1e-6 && !plan.window.feasible)
    throw NoConvergence("feasible fitness disagrees with the window check");
  return plan;
}

}  // namespace flexcable
