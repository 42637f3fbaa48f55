#pragma once

#include <vector>

#include "flexcable/core_model.hpp"
#include "flexcable/fdm_sim.hpp"

namespace flexcable {

// Sampled cable shape history: raw world-frame positions of M+1 points per
// time slice, spaced h_d apart along the arc, sampled every t_s seconds.
struct SnapshotTensor {
  std::vector<Mat3X> slices;  // each 3 x (M+1)
  double h_d = 0.0;
  double t_s = 0.0;

  int grid_intervals() const {
    return slices.empty() ? 0 : static_cast<int>(slices.front().cols()) - 1;
  }
  int time_intervals() const { return static_cast<int>(slices.size()) - 1; }
};

// Downsamples a recorded run onto M+1 arc points every t_s seconds.
SnapshotTensor collect_snapshots(const RunRecord& run, int grid_intervals,
                                 double sample_period, double cable_length);

// Head-centered mode-2 unfolding: row j holds point j's displacement history,
// three components per time slice.
MatX unfold_mode2(const SnapshotTensor& tensor);

// Rebuilds the (head-centered) tensor from its unfolding.
SnapshotTensor refold_mode2(const MatX& unfolded, double h_d, double t_s);

struct ModeBank {
  MatX modes;             // (M+1) x n_modes, one discrete mode per column
  VecX singular_values;   // non-increasing
  double h_d = 0.0;
  int truncation = 3;     // default K
  VecX mode_integrals;    // integral of phi_i over [0, L], rectangle rule

  int grid_points() const { return static_cast<int>(modes.rows()); }
  int mode_count() const { return static_cast<int>(modes.cols()); }
  // Value of the continuous mode i at arc point j*h_d.
  double phi(int i, int j) const { return modes(j, i) / std::sqrt(h_d); }
};

// Left singular vectors of the unfolding, sign-fixed (largest-magnitude entry
// positive) and orthonormality-checked.
ModeBank compute_modes(const MatX& unfolded, double h_d);

// Restricts a fine-grid bank onto a coarser grid (the fine interval count
// must be a multiple of the coarse one). The restricted columns are
// re-orthonormalized in energy order, so the smooth fine-grid shapes carry
// over to the reduced model's grid.
ModeBank restrict_bank(const ModeBank& fine, int coarse_intervals);

// sigma_i^2 / sum sigma^2; throws AllZeroSpectrum when there is no signal.
VecX energy_ratios(const VecX& sigma);

// Reduced state: K mode-coefficient triplets plus the head, and their rates.
struct RomState {
  MatX coeffs;        // 3 x K
  Vec3 head = Vec3::Zero();
  MatX coeff_rates;   // 3 x K
  Vec3 head_vel = Vec3::Zero();

  int order() const { return static_cast<int>(coeffs.cols()); }
  VecX to_vector() const;
  static RomState from_vector(const VecX& x, int order);
  static RomState zero(int order);
};

inline int rom_dim(int order) { return 6 * (order + 1); }

// Weighted inner products of the (head-centered) sampled shape with the
// modes; positions may live on the full FDM grid (any multiple of M).
RomState project(const Mat3X& positions, const Mat3X& velocities, const ModeBank& bank,
                 int order);

// Sampled shape on the reduced grid implied by a reduced state.
void reconstruct(const RomState& state, const ModeBank& bank, Mat3X& positions,
                 Mat3X& velocities);

// Galerkin reduced dynamics: dX/dt = B u + f(X), with the elastic term
// evaluated by the central stencil on the reconstructed shape and the tail
// closed by the ghost-node rule on the reduced grid.
class RomDynamics {
 public:
  RomDynamics(const ModeBank& bank, const CableParams& cable, double g, int order);

  int order() const { return order_; }
  int dim() const { return rom_dim(order_); }
  const MatX& input_matrix() const { return b_; }  // dim x 3, constant

  VecX rhs(const VecX& x, const Vec3& u) const;
  // Analytic d(rhs)/dX at x (the input enters linearly through B).
  MatX rhs_jacobian(const VecX& x) const;

  // One classical Runge-Kutta step with zero-order-hold input.
  VecX step(const VecX& x, const Vec3& u, double dt) const;
  // Step plus exact tangents of the discrete map.
  void step_with_sensitivity(const VecX& x, const Vec3& u, double dt, VecX& x_next,
                             MatX& d_dx, MatX& d_du) const;

  const ModeBank& bank() const { return bank_; }
  const CableParams& cable() const { return cable_; }
  double gravity() const { return g_; }

 private:
  void reconstruct_points(const VecX& x, Mat3X& pos, Mat3X& vel) const;

  ModeBank bank_;
  CableParams cable_;
  double g_;
  int order_;
  MatX b_;
  MatX weights_;  // (i,j) = phi_i^j * sqrt(h_d), j = 1..M
  mutable Mat3X pos_, vel_;
};

// The reduced model's own rest state: coefficients where the elastic and
// gravity terms balance (Newton iteration seeded by the projected steady
// shape), with the head placed at `head` and all rates zero.
RomState rom_equilibrium(const RomDynamics& dynamics, const RomState& seed);

}  // namespace flexcable
