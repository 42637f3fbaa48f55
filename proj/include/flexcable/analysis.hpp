#pragma once

#include <vector>

#include "flexcable/fdm_sim.hpp"
#include "flexcable/pod_rom.hpp"

namespace flexcable {

// Time-averaged sum of pointwise distances between two sampled shape
// histories on matched grids (head excluded from the sum).
double metric_em(const std::vector<Mat3X>& reference_shapes,
                 const std::vector<Mat3X>& test_shapes);

// Instantaneous shape distance and its velocity counterpart.
struct ShapeError {
  double position = 0.0;  // E1 [m]
  double velocity = 0.0;  // E2 [m/s]
};
ShapeError metric_e1_e2(const Mat3X& ref_pos, const Mat3X& ref_vel, const Mat3X& pos,
                        const Mat3X& vel);

// Picks every (N/M)-th column so a full-grid shape matches a reduced grid.
Mat3X downsample_grid(const Mat3X& full, int target_intervals);

// Weighted quadratic instantaneous error between reduced states.
double metric_es(const VecX& state, const VecX& reference, const VecX& q_diag);
// Time average of per-sample metric_es values.
double metric_et(const std::vector<VecX>& states, const std::vector<VecX>& references,
                 const VecX& q_diag);

// Motion-capture style marker history; marker 0 is the head tip.
struct PointCloudRecording {
  std::vector<double> times;
  std::vector<Mat3X> markers;   // 3 x (marker count) per frame
  double marker_spacing = 0.1;  // h_exp [m]

  std::size_t frames() const { return times.size(); }
  int marker_count() const { return frames() ? static_cast<int>(markers[0].cols()) : 0; }
  void validate() const;
};

// Average marker-to-material-point distance per frame: (h_exp/L) * sum over
// the non-head markers. `model_shapes` are full-grid cable shapes at the
// recording timestamps.
std::vector<double> metric_exp(const PointCloudRecording& recording,
                               const std::vector<Mat3X>& model_shapes,
                               double cable_length);

struct IdentifyOptions {
  FdmConfig fdm{50, 5e-4};
  double g = 9.8;
  int max_iterations = 120;
  double f_tolerance = 1e-8;
  double x_tolerance = 1e-6;
  // Start simplex offsets, relative for c_d and in log10 units for E.
  double cd_step = 0.2;
  double log_e_step = 0.1;
};

struct IdentifyResult {
  double drag_coeff = 0.0;
  double young_modulus = 0.0;
  double residual = 0.0;
  int evaluations = 0;
  std::vector<double> residual_trace;
};

// Fits (c_d, E) by a derivative-free simplex search over head-pinned FDM
// rollouts started from the pinned-endpoint equilibrium of the first frame.
// E is searched in log scale. Rollouts that blow up score +infinity.
IdentifyResult identify_params(const PointCloudRecording& recording,
                               const CableParams& base, double cd_guess, double e_guess,
                               const IdentifyOptions& opts);

// Residual of one parameter pair under the identification rollout; exposed
// for oracle checks.
double identification_residual(const PointCloudRecording& recording,
                               const CableParams& base, double cd, double young,
                               const IdentifyOptions& opts);

// Synthesizes a marker recording from a head-pinned free-swing rollout; the
// tail starts at `tail_start` (lifted) via the pinned-endpoint equilibrium.
PointCloudRecording synthesize_recording(const CableParams& cable,
                                         const IdentifyOptions& opts,
                                         const Vec3& head, const Vec3& tail_start,
                                         double duration, double sample_period);

}  // namespace flexcable
