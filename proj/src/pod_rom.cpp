#include "flexcable/pod_rom.hpp"

#include <Eigen/SVD>
#include <cmath>

namespace flexcable {

SnapshotTensor collect_snapshots(const RunRecord& run, int grid_intervals,
                                 double sample_period, double cable_length) {
  if (run.frames() < 2) throw InvalidRecording("run record holds fewer than two frames");
  const int n = static_cast<int>(run.positions.front().cols()) - 1;
  if (grid_intervals < 1 || n % grid_intervals != 0)
    throw GridMismatch("sampling grid " + std::to_string(grid_intervals) +
                       " does not divide the simulation grid " + std::to_string(n));
  const int stride = n / grid_intervals;

  const double record_period = run.times[1] - run.times[0];
  const double ratio = sample_period / record_period;
  const auto frame_stride = static_cast<long>(std::llround(ratio));
  if (frame_stride < 1 || std::abs(ratio - static_cast<double>(frame_stride)) > 1e-9)
    throw GridMismatch("sample period is not a multiple of the recording period");

  SnapshotTensor tensor;
  tensor.h_d = cable_length / grid_intervals;
  tensor.t_s = sample_period;
  for (std::size_t f = 0; f < run.frames(); f += frame_stride) {
    Mat3X slice(3, grid_intervals + 1);
    for (int j = 0; j <= grid_intervals; ++j)
      slice.col(j) = run.positions[f].col(j * stride);
    tensor.slices.push_back(std::move(slice));
  }
  return tensor;
}

MatX unfold_mode2(const SnapshotTensor& tensor) {
  const int points = tensor.grid_intervals() + 1;
  const int slices = static_cast<int>(tensor.slices.size());
  MatX out(points, 3 * slices);
  for (int k = 0; k < slices; ++k) {
    const Mat3X& slice = tensor.slices[k];
    const Vec3 head = slice.col(0);
    for (int j = 0; j < points; ++j)
      out.block<1, 3>(j, 3 * k) = (slice.col(j) - head).transpose();
  }
  return out;
}

SnapshotTensor refold_mode2(const MatX& unfolded, double h_d, double t_s) {
  SnapshotTensor tensor;
  tensor.h_d = h_d;
  tensor.t_s = t_s;
  const int points = static_cast<int>(unfolded.rows());
  const int slices = static_cast<int>(unfolded.cols()) / 3;
  for (int k = 0; k < slices; ++k) {
    Mat3X slice(3, points);
    for (int j = 0; j < points; ++j)
      slice.col(j) = unfolded.block<1, 3>(j, 3 * k).transpose();
    tensor.slices.push_back(std::move(slice));
  }
  return tensor;
}

ModeBank compute_modes(const MatX& unfolded, double h_d) {
  if (!unfolded.allFinite()) throw NoConvergence("snapshot matrix holds non-finite values");
  Eigen::BDCSVD<MatX> svd(unfolded, Eigen::ComputeThinU | Eigen::ComputeThinV);
  if (svd.info() != Eigen::Success) throw NoConvergence("singular value decomposition failed");

  ModeBank bank;
  bank.h_d = h_d;
  bank.modes = svd.matrixU();
  const int n_modes = static_cast<int>(bank.modes.cols());
  bank.singular_values = VecX::Zero(n_modes);
  bank.singular_values.head(svd.singularValues().size()) = svd.singularValues();

  // Deterministic sign: the largest-magnitude entry of each mode is positive.
  for (int i = 0; i < n_modes; ++i) {
    int arg = 0;
    bank.modes.col(i).cwiseAbs().maxCoeff(&arg);
    if (bank.modes(arg, i) < 0) bank.modes.col(i) = -bank.modes.col(i);
  }

  const int m = static_cast<int>(bank.modes.rows()) - 1;
  bank.mode_integrals = VecX::Zero(n_modes);
  for (int i = 0; i < n_modes; ++i) {
    double sum = 0.0;
    for (int j = 1; j <= m; ++j) sum += bank.modes(j, i);
    bank.mode_integrals[i] = sum * std::sqrt(h_d);
  }
  return bank;
}

ModeBank restrict_bank(const ModeBank& fine, int coarse_intervals) {
  const int fine_intervals = fine.grid_points() - 1;
  if (coarse_intervals < 2 || fine_intervals % coarse_intervals != 0)
    throw GridMismatch("coarse grid does not divide the fine mode grid");
  const int stride = fine_intervals / coarse_intervals;
  const double h_coarse = fine.h_d * stride;
  const int cols = std::min(fine.mode_count(), coarse_intervals + 1);

  // Sample the continuous shapes phi(s) = column/sqrt(h) on the coarse grid
  // and rescale to the coarse normalization.
  MatX sampled(coarse_intervals + 1, cols);
  const double scale = std::sqrt(static_cast<double>(stride));
  for (int i = 0; i < cols; ++i)
    for (int j = 0; j <= coarse_intervals; ++j)
      sampled(j, i) = fine.modes(j * stride, i) * scale;

  // Modified Gram-Schmidt in energy order keeps the leading shapes intact;
  // columns that collapse on the coarse grid (noise modes past the data
  // rank) are dropped.
  MatX kept(coarse_intervals + 1, cols);
  VecX kept_sigma(cols);
  int kept_count = 0;
  for (int i = 0; i < cols; ++i) {
    VecX v = sampled.col(i);
    for (int k = 0; k < kept_count; ++k) v -= kept.col(k).dot(v) * kept.col(k);
    const double norm = v.norm();
    if (norm < 1e-8) continue;
    kept.col(kept_count) = v / norm;
    kept_sigma[kept_count] = fine.singular_values[i];
    ++kept_count;
  }
  if (kept_count < 1) throw NoConvergence("no restricted modes survived");

  ModeBank coarse;
  coarse.modes = kept.leftCols(kept_count);
  coarse.h_d = h_coarse;
  coarse.truncation = std::min(fine.truncation, kept_count);
  coarse.singular_values = kept_sigma.head(kept_count);
  for (int i = 0; i < kept_count; ++i) {
    int arg = 0;
    coarse.modes.col(i).cwiseAbs().maxCoeff(&arg);
    if (coarse.modes(arg, i) < 0) coarse.modes.col(i) = -coarse.modes.col(i);
  }
  coarse.mode_integrals = VecX::Zero(kept_count);
  for (int i = 0; i < kept_count; ++i) {
    double sum = 0.0;
    for (int j = 1; j <= coarse_intervals; ++j) sum += coarse.modes(j, i);
    coarse.mode_integrals[i] = sum * std::sqrt(h_coarse);
  }
  return coarse;
}

VecX energy_ratios(const VecX& sigma) {
  const VecX sq = sigma.array().square();
  const double total = sq.sum();
  if (total <= 0.0) throw AllZeroSpectrum();
  return sq / total;
}

VecX RomState::to_vector() const {
  const int k = order();
  VecX x(rom_dim(k));
  for (int i = 0; i < k; ++i) x.segment<3>(3 * i) = coeffs.col(i);
  x.segment<3>(3 * k) = head;
  for (int i = 0; i < k; ++i) x.segment<3>(3 * k + 3 + 3 * i) = coeff_rates.col(i);
  x.segment<3>(6 * k + 3) = head_vel;
  return x;
}

RomState RomState::from_vector(const VecX& x, int order) {
  if (x.size() != rom_dim(order))
    throw DimensionMismatch("reduced state vector has wrong length");
  RomState s = zero(order);
  for (int i = 0; i < order; ++i) s.coeffs.col(i) = x.segment<3>(3 * i);
  s.head = x.segment<3>(3 * order);
  for (int i = 0; i < order; ++i)
    s.coeff_rates.col(i) = x.segment<3>(3 * order + 3 + 3 * i);
  s.head_vel = x.segment<3>(6 * order + 3);
  return s;
}

RomState RomState::zero(int order) {
  RomState s;
  s.coeffs.setZero(3, order);
  s.coeff_rates.setZero(3, order);
  return s;
}

RomState project(const Mat3X& positions, const Mat3X& velocities, const ModeBank& bank,
                 int order) {
  const int m = bank.grid_points() - 1;
  const int n = static_cast<int>(positions.cols()) - 1;
  if (n % m != 0)
    throw GridMismatch("reduced grid " + std::to_string(m) +
                       " does not divide the source grid " + std::to_string(n));
  if (order > bank.mode_count())
    throw DimensionMismatch("requested order exceeds the stored mode count");
  const int stride = n / m;
  const double root_h = std::sqrt(bank.h_d);

  RomState s = RomState::zero(order);
  s.head = positions.col(0);
  s.head_vel = velocities.col(0);
  for (int i = 0; i < order; ++i) {
    Vec3 a = Vec3::Zero(), da = Vec3::Zero();
    for (int k = 1; k <= m; ++k) {
      const double w = bank.modes(k, i) * root_h;
      a += (positions.col(k * stride) - positions.col(0)) * w;
      da += (velocities.col(k * stride) - velocities.col(0)) * w;
    }
    s.coeffs.col(i) = a;
    s.coeff_rates.col(i) = da;
  }
  return s;
}

void reconstruct(const RomState& state, const ModeBank& bank, Mat3X& positions,
                 Mat3X& velocities) {
  const int m = bank.grid_points() - 1;
  const int order = state.order();
  const double root_h = std::sqrt(bank.h_d);
  positions.resize(3, m + 1);
  velocities.resize(3, m + 1);
  for (int j = 0; j <= m; ++j) {
    Vec3 p = state.head, v = state.head_vel;
    for (int i = 0; i < order; ++i) {
      const double c = bank.modes(j, i) / root_h;
      p += state.coeffs.col(i) * c;
      v += state.coeff_rates.col(i) * c;
    }
    positions.col(j) = p;
    velocities.col(j) = v;
  }
}

RomDynamics::RomDynamics(const ModeBank& bank, const CableParams& cable, double g,
                         int order)
    : bank_(bank), cable_(cable), g_(g), order_(order) {
  if (order_ < 1 || order_ > bank_.mode_count())
    throw DimensionMismatch("reduced order outside the stored mode count");
  const int n = dim();
  const int m = bank_.grid_points() - 1;
  b_ = MatX::Zero(n, 3);
  for (int i = 0; i < order_; ++i)
    b_.block<3, 3>(3 * order_ + 3 + 3 * i, 0) = -bank_.mode_integrals[i] * Mat3::Identity();
  b_.block<3, 3>(6 * order_ + 3, 0) = Mat3::Identity();

  const double root_h = std::sqrt(bank_.h_d);
  weights_ = MatX::Zero(order_, m + 1);
  for (int i = 0; i < order_; ++i)
    for (int j = 1; j <= m; ++j) weights_(i, j) = bank_.modes(j, i) * root_h;

  pos_.setZero(3, m + 2);  // includes the ghost column
  vel_.setZero(3, m + 1);
}

void RomDynamics::reconstruct_points(const VecX& x, Mat3X& pos, Mat3X& vel) const {
  const int m = bank_.grid_points() - 1;
  const double root_h = std::sqrt(bank_.h_d);
  const auto head = x.segment<3>(3 * order_);
  const auto head_vel = x.segment<3>(6 * order_ + 3);
  for (int j = 0; j <= m; ++j) {
    Vec3 p = head, v = head_vel;
    for (int i = 0; i < order_; ++i) {
      const double c = bank_.modes(j, i) / root_h;
      p += x.segment<3>(3 * i) * c;
      v += x.segment<3>(3 * order_ + 3 + 3 * i) * c;
    }
    pos.col(j) = p;
    vel.col(j) = v;
  }
  pos.col(m + 1) = ghost_tail_node(pos.leftCols(m + 1), bank_.h_d);
}

VecX RomDynamics::rhs(const VecX& x, const Vec3& u) const {
  const int m = bank_.grid_points() - 1;
  const int n = dim();
  const double h = bank_.h_d;
  reconstruct_points(x, pos_, vel_);

  VecX dx(n);
  dx.head(3 * order_ + 3) = x.tail(3 * order_ + 3);

  const double inv_mu = 1.0 / cable_.linear_mass();
  const double drag_scale = cable_.air_density * cable_.drag_coeff * inv_mu;
  const double ea = cable_.axial_stiffness();
  for (int i = 0; i < order_; ++i) {
    Vec3 acc = -bank_.mode_integrals[i] * (u + Vec3(0, 0, g_));
    for (int j = 1; j <= m; ++j) {
      const Vec3 fwd = pos_.col(j + 1) - pos_.col(j);
      const Vec3 bwd = pos_.col(j) - pos_.col(j - 1);
      const double lf = fwd.norm(), lb = bwd.norm();
      if (lf < kMinSegmentLength || lb < kMinSegmentLength) throw DegenerateSegment(j);
      const Vec3 ns = ea * ((pos_.col(j + 1) - 2.0 * pos_.col(j) + pos_.col(j - 1)) / (h * h) -
                            fwd / (h * lf) + bwd / (h * lb));
      const Vec3 v = vel_.col(j);
      acc += weights_(i, j) * (inv_mu * ns - drag_scale * v.norm() * v);
    }
    dx.segment<3>(3 * order_ + 3 + 3 * i) = acc;
  }
  dx.segment<3>(6 * order_ + 3) = u;
  return dx;
}

namespace {

// d(unit(d))/dd = (I - uu^T)/|d|
Mat3 unit_vector_jacobian(const Vec3& d) {
  const double len = d.norm();
  const Vec3 u = d / len;
  return (Mat3::Identity() - u * u.transpose()) / len;
}

}  // namespace

MatX RomDynamics::rhs_jacobian(const VecX& x) const {
  const int m = bank_.grid_points() - 1;
  const int n = dim();
  const double h = bank_.h_d;
  const double root_h = std::sqrt(bank_.h_d);
  reconstruct_points(x, pos_, vel_);

  MatX jac = MatX::Zero(n, n);
  jac.topRightCorner(3 * order_ + 3, 3 * order_ + 3).setIdentity();

  const double inv_mu = 1.0 / cable_.linear_mass();
  const double drag_scale = cable_.air_density * cable_.drag_coeff * inv_mu;
  const double ea = cable_.axial_stiffness();

  // Ghost-node tangents (needed by the stencil at j = m).
  const Vec3 tail_diff = pos_.col(m) - pos_.col(m - 1);
  const Mat3 ghost_d = 2.0 * h * unit_vector_jacobian(tail_diff);
  const Mat3 ghost_wrt_m = ghost_d;                       // d ghost / d r_M
  const Mat3 ghost_wrt_m1 = Mat3::Identity() - ghost_d;   // d ghost / d r_{M-1}

  // Mode value of phi^k at grid point j (continuous normalization).
  auto cval = [&](int mode, int j) { return bank_.modes(j, mode) / root_h; };

  for (int j = 1; j <= m; ++j) {
    const Vec3 fwd = pos_.col(j + 1) - pos_.col(j);
    const Vec3 bwd = pos_.col(j) - pos_.col(j - 1);
    const Mat3 jf = unit_vector_jacobian(fwd);
    const Mat3 jb = unit_vector_jacobian(bwd);
    const Mat3 eye = Mat3::Identity();

    // d n_s(j) / d r_{j-1}, r_j, r_{j+1}
    Mat3 d_prev = ea * (eye / (h * h) - jb / h);
    Mat3 d_cur = ea * (-2.0 * eye / (h * h) + jf / h + jb / h);
    Mat3 d_next = ea * (eye / (h * h) - jf / h);
    if (j == m) {
      // r_{m+1} is the ghost; fold its tangents into r_m and r_{m-1}.
      d_cur += d_next * ghost_wrt_m;
      d_prev += d_next * ghost_wrt_m1;
      d_next.setZero();
    }

    const Vec3 v = vel_.col(j);
    const double vn = v.norm();
    const Mat3 g_drag =
        vn > 0 ? Mat3(vn * eye + v * v.transpose() / vn) : Mat3(Mat3::Zero());

    for (int i = 0; i < order_; ++i) {
      const double w = weights_(i, j);
      if (w == 0.0) continue;
      const int row = 3 * order_ + 3 + 3 * i;
      // Elastic blocks: positions enter through a_k only (head translation
      // cancels in the differences).
      for (int k = 0; k < order_; ++k) {
        Mat3 block = d_prev * cval(k, j - 1) + d_cur * cval(k, j);
        if (j < m) block += d_next * cval(k, j + 1);
        jac.block<3, 3>(row, 3 * k) += (w * inv_mu) * block;
      }
      // Drag blocks: velocities enter through da_k and the head velocity.
      for (int k = 0; k < order_; ++k)
        jac.block<3, 3>(row, 3 * order_ + 3 + 3 * k) -=
            (w * drag_scale * cval(k, j)) * g_drag;
      jac.block<3, 3>(row, 6 * order_ + 3) -= (w * drag_scale) * g_drag;
    }
  }
  return jac;
}

VecX RomDynamics::step(const VecX& x, const Vec3& u, double dt) const {
  const VecX k1 = rhs(x, u);
  const VecX k2 = rhs(x + 0.5 * dt * k1, u);
  const VecX k3 = rhs(x + 0.5 * dt * k2, u);
  const VecX k4 = rhs(x + dt * k3, u);
  return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

RomState rom_equilibrium(const RomDynamics& dynamics, const RomState& seed) {
  const int k = dynamics.order();
  RomState state = seed;
  state.coeff_rates.setZero();
  state.head_vel.setZero();

  // Newton on the coefficient block: solve accel(a) = 0 with the analytic
  // Jacobian restricted to the a-columns.
  for (int iter = 0; iter < 50; ++iter) {
    const VecX x = state.to_vector();
    const VecX dx = dynamics.rhs(x, Vec3::Zero());
    const VecX residual = dx.segment(3 * k + 3, 3 * k);
    if (residual.cwiseAbs().maxCoeff() < 1e-10) return state;
    const MatX jac = dynamics.rhs_jacobian(x);
    const MatX block = jac.block(3 * k + 3, 0, 3 * k, 3 * k);
    const VecX delta = block.partialPivLu().solve(residual);
    for (int i = 0; i < k; ++i) state.coeffs.col(i) -= delta.segment<3>(3 * i);
  }
  throw NoConvergence("reduced equilibrium search did not converge");
}

void RomDynamics::step_with_sensitivity(const VecX& x, const Vec3& u, double dt,
                                        VecX& x_next, MatX& d_dx, MatX& d_du) const {
  const int n = dim();
  const VecX k1 = rhs(x, u);
  const VecX x2 = x + 0.5 * dt * k1;
  const VecX k2 = rhs(x2, u);
  const VecX x3 = x + 0.5 * dt * k2;
  const VecX k3 = rhs(x3, u);
  const VecX x4 = x + dt * k3;
  const VecX k4 = rhs(x4, u);
  x_next = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);

  const MatX j1 = rhs_jacobian(x);
  const MatX j2 = rhs_jacobian(x2);
  const MatX j3 = rhs_jacobian(x3);
  const MatX j4 = rhs_jacobian(x4);
  const MatX eye = MatX::Identity(n, n);

  const MatX p1 = j1;
  const MatX p2 = j2 * (eye + 0.5 * dt * p1);
  const MatX p3 = j3 * (eye + 0.5 * dt * p2);
  const MatX p4 = j4 * (eye + dt * p3);
  d_dx = eye + (dt / 6.0) * (p1 + 2.0 * p2 + 2.0 * p3 + p4);

  const MatX q1 = b_;
  const MatX q2 = j2 * (0.5 * dt * q1) + b_;
  const MatX q3 = j3 * (0.5 * dt * q2) + b_;
  const MatX q4 = j4 * (dt * q3) + b_;
  d_du = (dt / 6.0) * (q1 + 2.0 * q2 + 2.0 * q3 + q4);
}

}  // namespace flexcable
