#include "flexcable/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace flexcable {

double metric_em(const std::vector<Mat3X>& reference_shapes,
                 const std::vector<Mat3X>& test_shapes) {
  if (reference_shapes.size() != test_shapes.size() || reference_shapes.empty())
    throw GridMismatch("shape histories have different lengths");
  const int cols = static_cast<int>(reference_shapes[0].cols());
  double total = 0.0;
  for (std::size_t f = 0; f < reference_shapes.size(); ++f) {
    if (test_shapes[f].cols() != cols) throw GridMismatch("shape grids differ");
    for (int j = 1; j < cols; ++j)
      total += (reference_shapes[f].col(j) - test_shapes[f].col(j)).norm();
  }
  return total / static_cast<double>(reference_shapes.size());
}

ShapeError metric_e1_e2(const Mat3X& ref_pos, const Mat3X& ref_vel, const Mat3X& pos,
                        const Mat3X& vel) {
  if (ref_pos.cols() != pos.cols() || ref_vel.cols() != vel.cols())
    throw GridMismatch("shape grids differ");
  ShapeError e;
  for (int j = 1; j < pos.cols(); ++j) {
    e.position += (ref_pos.col(j) - pos.col(j)).norm();
    e.velocity += (ref_vel.col(j) - vel.col(j)).norm();
  }
  return e;
}

Mat3X downsample_grid(const Mat3X& full, int target_intervals) {
  const int n = static_cast<int>(full.cols()) - 1;
  if (target_intervals < 1 || n % target_intervals != 0)
    throw GridMismatch("target grid does not divide the source grid");
  const int stride = n / target_intervals;
  Mat3X out(3, target_intervals + 1);
  for (int j = 0; j <= target_intervals; ++j) out.col(j) = full.col(j * stride);
  return out;
}

double metric_es(const VecX& state, const VecX& reference, const VecX& q_diag) {
  if (state.size() != reference.size() || state.size() != q_diag.size())
    throw DimensionMismatch("state, reference and weights must have equal length");
  const VecX err = reference - state;
  return err.dot(q_diag.cwiseProduct(err));
}

double metric_et(const std::vector<VecX>& states, const std::vector<VecX>& references,
                 const VecX& q_diag) {
  if (states.size() != references.size() || states.empty())
    throw DimensionMismatch("state and reference histories must have equal length");
  double sum = 0.0;
  for (std::size_t k = 0; k < states.size(); ++k)
    sum += metric_es(states[k], references[k], q_diag);
  return sum / static_cast<double>(states.size());
}

void PointCloudRecording::validate() const {
  if (times.empty() || markers.empty()) throw InvalidRecording("recording is empty");
  if (times.size() != markers.size())
    throw InvalidRecording("timestamp and marker frame counts differ");
  if (marker_count() < 2) throw InvalidRecording("recording needs at least two markers");
  if (marker_spacing <= 0) throw InvalidRecording("marker spacing must be positive");
}

std::vector<double> metric_exp(const PointCloudRecording& recording,
                               const std::vector<Mat3X>& model_shapes,
                               double cable_length) {
  recording.validate();
  if (model_shapes.size() != recording.frames())
    throw GridMismatch("model history does not match the recording length");
  const int n = static_cast<int>(model_shapes[0].cols()) - 1;
  const double h_s = cable_length / n;
  const int tapes = static_cast<int>(std::llround(cable_length / recording.marker_spacing));
  const double stride_f = recording.marker_spacing / h_s;
  const int stride = static_cast<int>(std::llround(stride_f));
  if (std::abs(stride_f - stride) > 1e-9 || stride < 1)
    throw GridMismatch("marker spacing does not map onto the simulation grid");
  if (recording.marker_count() < tapes + 1)
    throw GridMismatch("recording holds fewer markers than expected");

  std::vector<double> series(recording.frames());
  for (std::size_t f = 0; f < recording.frames(); ++f) {
    double sum = 0.0;
    for (int k = 1; k <= tapes; ++k)
      sum += (recording.markers[f].col(k) - model_shapes[f].col(k * stride)).norm();
    series[f] = sum * recording.marker_spacing / cable_length;
  }
  return series;
}

namespace {

// Head-pinned rollout sampled at the recording timestamps; accumulates the
// marker distance sum (all frames, non-head markers).
double rollout_residual(const PointCloudRecording& recording, const CableParams& cable,
                        const IdentifyOptions& opts) {
  const int n = opts.fdm.segment_count;
  const double h_s = cable.length / n;
  const int tapes = static_cast<int>(std::llround(cable.length / recording.marker_spacing));
  const int stride = static_cast<int>(std::llround(recording.marker_spacing / h_s));
  if (stride < 1 || std::abs(recording.marker_spacing / h_s - stride) > 1e-9)
    throw GridMismatch("marker spacing does not map onto the rollout grid");

  const Vec3 head = recording.markers[0].col(0);
  const Vec3 tail = recording.markers[0].col(recording.marker_count() - 1);

  FdmState state;
  state.positions = pinned_equilibrium(cable, opts.fdm, opts.g, head, tail);
  state.velocities = Mat3X::Zero(3, n + 1);

  DrivenCableSim sim(cable, opts.fdm, opts.g);
  const HeadDriver driver = HeadDriver::pinned(head);
  const double dt = opts.fdm.time_step;

  double residual = 0.0;
  std::size_t frame = 0;
  double t = 0.0;
  const double t_end = recording.times.back();
  const auto steps = static_cast<long>(std::llround(t_end / dt));
  auto accumulate = [&](double now) {
    while (frame < recording.frames() && recording.times[frame] <= now + dt * 0.5) {
      for (int k = 1; k <= tapes; ++k)
        residual += (recording.markers[frame].col(k) - state.positions.col(k * stride)).norm();
      ++frame;
    }
  };
  accumulate(0.0);
  for (long k = 0; k < steps && frame < recording.frames(); ++k) {
    sim.rk4_step(state, driver, t, dt);
    t = (k + 1) * dt;
    if (!state.positions.allFinite() || state.positions.cwiseAbs().maxCoeff() > 1e6)
      throw NumericalBlowup(t);
    accumulate(t);
  }
  return residual;
}

struct SimplexPoint {
  VecX x;
  double f;
};

}  // namespace

double identification_residual(const PointCloudRecording& recording,
                               const CableParams& base, double cd, double young,
                               const IdentifyOptions& opts) {
  CableParams p = base;
  p.drag_coeff = cd;
  p.young_modulus = young;
  return rollout_residual(recording, p, opts);
}

IdentifyResult identify_params(const PointCloudRecording& recording,
                               const CableParams& base, double cd_guess, double e_guess,
                               const IdentifyOptions& opts) {
  recording.validate();
  if (recording.frames() < 2)
    throw InvalidRecording("recording too short for identification");

  // Search space: (c_d, log10 E); E spans orders of magnitude.
  auto objective = [&](const VecX& x) -> double {
    const double cd = x[0];
    const double young = std::pow(10.0, x[1]);
    if (cd < 0 || young <= 0) return std::numeric_limits<double>::infinity();
    try {
      return identification_residual(recording, base, cd, young, opts);
    } catch (const NumericalBlowup&) {
      return std::numeric_limits<double>::infinity();
    }
  };

  IdentifyResult result;
  int evals = 0;
  auto eval = [&](const VecX& x) {
    ++evals;
    return objective(x);
  };

  // Nelder-Mead with the standard reflection/expansion/contraction weights.
  std::vector<SimplexPoint> simplex(3);
  simplex[0].x = VecX(2);
  simplex[0].x << cd_guess, std::log10(e_guess);
  simplex[1].x = simplex[0].x + VecX::Unit(2, 0) * (cd_guess * opts.cd_step);
  simplex[2].x = simplex[0].x + VecX::Unit(2, 1) * opts.log_e_step;
  for (auto& p : simplex) p.f = eval(p.x);

  auto by_value = [](const SimplexPoint& a, const SimplexPoint& b) { return a.f < b.f; };
  for (int iter = 0; iter < opts.max_iterations; ++iter) {
    std::sort(simplex.begin(), simplex.end(), by_value);
    result.residual_trace.push_back(simplex[0].f);
    if (std::abs(simplex[2].f - simplex[0].f) < opts.f_tolerance &&
        (simplex[2].x - simplex[0].x).norm() < opts.x_tolerance)
      break;

    const VecX centroid = 0.5 * (simplex[0].x + simplex[1].x);
    const VecX reflect = centroid + (centroid - simplex[2].x);
    const double f_reflect = eval(reflect);
    if (f_reflect < simplex[0].f) {
      const VecX expand = centroid + 2.0 * (centroid - simplex[2].x);
      const double f_expand = eval(expand);
      if (f_expand < f_reflect)
        simplex[2] = {expand, f_expand};
      else
        simplex[2] = {reflect, f_reflect};
    } else if (f_reflect < simplex[1].f) {
      simplex[2] = {reflect, f_reflect};
    } else {
      const VecX contract = centroid + 0.5 * (simplex[2].x - centroid);
      const double f_contract = eval(contract);
      if (f_contract < simplex[2].f) {
        simplex[2] = {contract, f_contract};
      } else {
        // Shrink toward the best vertex.
        for (int i = 1; i < 3; ++i) {
          simplex[i].x = simplex[0].x + 0.5 * (simplex[i].x - simplex[0].x);
          simplex[i].f = eval(simplex[i].x);
        }
      }
    }
  }
  std::sort(simplex.begin(), simplex.end(), by_value);

  result.drag_coeff = simplex[0].x[0];
  result.young_modulus = std::pow(10.0, simplex[0].x[1]);
  result.residual = simplex[0].f;
  result.evaluations = evals;
  return result;
}

PointCloudRecording synthesize_recording(const CableParams& cable,
                                         const IdentifyOptions& opts,
                                         const Vec3& head, const Vec3& tail_start,
                                         double duration, double sample_period) {
  const int n = opts.fdm.segment_count;
  FdmState state;
  state.positions = pinned_equilibrium(cable, opts.fdm, opts.g, head, tail_start);
  state.velocities = Mat3X::Zero(3, n + 1);

  DrivenCableSim sim(cable, opts.fdm, opts.g);
  const HeadDriver driver = HeadDriver::pinned(head);
  const double dt = opts.fdm.time_step;
  const auto record_every = static_cast<int>(std::llround(sample_period / dt));
  const RunRecord run = simulate_driven(sim, state, driver, duration, record_every);

  PointCloudRecording rec;
  rec.marker_spacing = 0.1;
  const int tapes = static_cast<int>(std::llround(cable.length / rec.marker_spacing));
  const int stride = static_cast<int>(std::llround(rec.marker_spacing / (cable.length / n)));
  for (std::size_t f = 0; f < run.frames(); ++f) {
    Mat3X frame(3, tapes + 1);
    for (int k = 0; k <= tapes; ++k) frame.col(k) = run.positions[f].col(k * stride);
    rec.times.push_back(run.times[f]);
    rec.markers.push_back(std::move(frame));
  }
  return rec;
}

}  // namespace flexcable
