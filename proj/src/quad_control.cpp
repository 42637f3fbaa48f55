#include "flexcable/quad_control.hpp"

#include <algorithm>
#include <cmath>
#include <future>

namespace flexcable {

namespace {

double clamped_asin(double x) {
  if (std::abs(x) > 1.0 + 1e-6) throw UnreachableAttitude();
  return std::asin(std::clamp(x, -1.0, 1.0));
}

}  // namespace

AttitudeCommand acceleration_to_attitude_command(const Vec3& accel_desired, double mass,
                                                 double g) {
  const Vec3 force = mass * (accel_desired + Vec3(0, 0, g));
  const double thrust = force.norm();
  if (thrust <= 0.0) throw UnreachableAttitude();

  AttitudeCommand cmd;
  cmd.thrust = thrust;
  // Tilt extraction for a Z->Y->X rotation with zero heading: the thrust
  // axis e_z maps to (sy*cx, -sx, cy*cx).
  cmd.angles.x() = clamped_asin(-force.y() / thrust);
  const double cx = std::cos(cmd.angles.x());
  cmd.angles.y() = clamped_asin(force.x() / (thrust * cx));
  cmd.angles.z() = 0.0;
  cmd.rates.setZero();
  return cmd;
}

AttitudeCommand outer_loop(const Vec3& position, const Vec3& velocity,
                           const PositionReference& ref, const PidGains& gains,
                           double mass, double g) {
  const Vec3 accel = gains.kp_pos.cwiseProduct(ref.position - position) +
                     gains.kd_pos.cwiseProduct(ref.velocity - velocity) +
                     ref.acceleration;
  return acceleration_to_attitude_command(accel, mass, g);
}

Vec3 inner_loop(const Attitude& att, const AttitudeCommand& cmd, const PidGains& gains,
                const QuadParams& quad) {
  const Vec3 angle_accel = gains.kp_att.cwiseProduct(cmd.angles - att.angles) +
                           gains.kd_att.cwiseProduct(cmd.rates - att.rates);
  const Vec3 omega = body_rates_from_euler_rates(att);
  const Vec3 omega_dot_des =
      euler_rate_matrix_inverse(att) * (angle_accel - euler_rate_matrix_dot(att) * omega);
  return quad.inertia.cwiseProduct(omega_dot_des) +
         omega.cross(quad.inertia.cwiseProduct(omega));
}

PositionReference sweep_reference(double t, const SweepConfig& cfg) {
  const double k = (cfg.f_end - cfg.f_start) / cfg.duration;  // chirp rate [Hz/s]
  const double phase = 2.0 * M_PI * (cfg.f_start * t + 0.5 * k * t * t);
  const double freq = 2.0 * M_PI * (cfg.f_start + k * t);
  const double dfreq = 2.0 * M_PI * k;
  PositionReference ref;
  for (int axis = 0; axis < 3; ++axis) {
    const double a = cfg.amplitude[axis];
    ref.position[axis] = a * std::sin(phase);
    ref.velocity[axis] = a * freq * std::cos(phase);
    ref.acceleration[axis] = a * (dfreq * std::cos(phase) - freq * freq * std::sin(phase));
  }
  return ref;
}

PositionReference collection_reference(double t, const SweepConfig& cfg) {
  if (t < cfg.duration) return sweep_reference(t, cfg);
  const PositionReference end = sweep_reference(cfg.duration, cfg);
  const double tau = std::max(cfg.taper, 1e-9);
  // Cubic blend of the velocity from v_end to 0 keeps position and velocity
  // continuous at both ends of the taper.
  const Vec3 stop_point = end.position + end.velocity * (tau / 2.0);
  if (t < cfg.duration + tau) {
    const double s = (t - cfg.duration) / tau;  // in [0, 1)
    const double blend = 1.0 - 3.0 * s * s + 2.0 * s * s * s;
    const double blend_int = s - s * s * s + 0.5 * s * s * s * s;
    const double blend_dot = (-6.0 * s + 6.0 * s * s) / tau;
    PositionReference ref;
    ref.position = end.position + end.velocity * tau * blend_int;
    ref.velocity = end.velocity * blend;
    ref.acceleration = end.velocity * blend_dot;
    return ref;
  }
  PositionReference ref;
  ref.position = stop_point;
  return ref;
}

namespace {

VecX gains_to_vec(const PidGains& g) {
  VecX v(6);
  v << g.kp_pos, g.kd_pos;
  return v;
}

PidGains vec_to_gains(const VecX& v, const PidGains& base) {
  PidGains g = base;
  g.kp_pos = v.segment<3>(0);
  g.kd_pos = v.segment<3>(3);
  return g;
}

}  // namespace

TuneResult tune_gains(const std::function<double(const PidGains&)>& objective,
                      const PidGains& initial, const TuneOptions& opts, int threads) {
  TuneResult res;
  res.gains = initial;

  auto clip = [&](VecX v) {
    for (int i = 0; i < v.size(); ++i) v[i] = std::clamp(v[i], opts.lower, opts.upper);
    return v;
  };

  auto eval_batch = [&](const std::vector<VecX>& points) {
    std::vector<double> out(points.size());
    if (threads <= 1 || points.size() <= 1) {
      for (std::size_t i = 0; i < points.size(); ++i)
        out[i] = objective(vec_to_gains(points[i], initial));
    } else {
      std::vector<std::future<double>> futs(points.size());
      for (std::size_t i = 0; i < points.size(); ++i)
        futs[i] = std::async(std::launch::async, [&, i] {
          return objective(vec_to_gains(points[i], initial));
        });
      for (std::size_t i = 0; i < points.size(); ++i) out[i] = futs[i].get();
    }
    res.evaluations += static_cast<int>(points.size());
    return out;
  };

  VecX x = clip(gains_to_vec(initial));
  double fx = eval_batch({x})[0];
  res.trace.push_back(fx);

  double step = opts.initial_step;
  for (int iter = 0; iter < opts.max_iters; ++iter) {
    // Central differences, all probes evaluated as one batch.
    std::vector<VecX> probes;
    probes.reserve(12);
    for (int i = 0; i < 6; ++i) {
      VecX hi = x, lo = x;
      hi[i] = std::clamp(hi[i] + opts.fd_step, opts.lower, opts.upper);
      lo[i] = std::clamp(lo[i] - opts.fd_step, opts.lower, opts.upper);
      probes.push_back(hi);
      probes.push_back(lo);
    }
    const std::vector<double> fvals = eval_batch(probes);
    VecX grad(6);
    for (int i = 0; i < 6; ++i) {
      const double span = probes[2 * i][i] - probes[2 * i + 1][i];
      grad[i] = span > 0 ? (fvals[2 * i] - fvals[2 * i + 1]) / span : 0.0;
    }
    if (grad.norm() < opts.grad_tol) break;

    // Backtracking line search on the projected step.
    bool accepted = false;
    double alpha = step;
    for (int ls = 0; ls < 12; ++ls) {
      const VecX cand = clip(x - alpha * grad / std::max(grad.norm(), 1e-12));
      if ((cand - x).norm() < 1e-12) break;
      const double fc = eval_batch({cand})[0];
      if (fc < fx) {
        x = cand;
        fx = fc;
        step = alpha * 1.5;
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    res.trace.push_back(fx);
    if (!accepted) break;
  }

  res.gains = vec_to_gains(x, initial);
  res.objective = fx;
  res.at_bounds = false;
  for (int i = 0; i < 6; ++i)
    if (x[i] <= opts.lower + 1e-12 || x[i] >= opts.upper - 1e-12) res.at_bounds = true;
  return res;
}

}  // namespace flexcable
