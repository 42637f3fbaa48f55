#include "flexcable/core_model.hpp"

#include <Eigen/Dense>
#include <cmath>

namespace flexcable {

void CableParams::validate() const {
  if (length <= 0) throw ConfigError("cable.length", "must be > 0");
  if (cross_section <= 0) throw ConfigError("cable.cross_section", "must be > 0");
  if (density <= 0) throw ConfigError("cable.density", "must be > 0");
  if (young_modulus <= 0) throw ConfigError("cable.young_modulus", "must be > 0");
  if (drag_coeff < 0) throw ConfigError("cable.drag_coeff", "must be >= 0");
  if (air_density < 0) throw ConfigError("cable.air_density", "must be >= 0");
}

void QuadParams::validate() const {
  if (mass <= 0) throw ConfigError("quad.mass", "must be > 0");
  if ((inertia.array() <= 0).any()) throw ConfigError("quad.inertia", "entries must be > 0");
  for (double c : thrust_coeffs)
    if (c <= 0) throw ConfigError("quad.thrust_coeffs", "entries must be > 0");
}

Mat3 rotation_from_attitude(const Attitude& att) {
  const double cx = std::cos(att.angles.x()), sx = std::sin(att.angles.x());
  const double cy = std::cos(att.angles.y()), sy = std::sin(att.angles.y());
  const double cz = std::cos(att.angles.z()), sz = std::sin(att.angles.z());
  Mat3 rz, ry, rx;
  rz << cz, -sz, 0, sz, cz, 0, 0, 0, 1;
  ry << cy, 0, sy, 0, 1, 0, -sy, 0, cy;
  rx << 1, 0, 0, 0, cx, -sx, 0, sx, cx;
  return rz * ry * rx;
}

void check_gimbal(const Attitude& att) {
  if (std::abs(std::abs(att.angles.y()) - M_PI / 2.0) < kGimbalGuard)
    throw GimbalLock(att.angles.y());
}

Mat3 euler_rate_matrix(const Attitude& att) {
  check_gimbal(att);
  const double cx = std::cos(att.angles.x()), sx = std::sin(att.angles.x());
  const double cy = std::cos(att.angles.y()), ty = std::tan(att.angles.y());
  Mat3 t;
  t << 1, sx * ty, cx * ty,
       0, cx, -sx,
       0, sx / cy, cx / cy;
  return t;
}

Mat3 euler_rate_matrix_inverse(const Attitude& att) {
  check_gimbal(att);
  const double cx = std::cos(att.angles.x()), sx = std::sin(att.angles.x());
  const double cy = std::cos(att.angles.y()), sy = std::sin(att.angles.y());
  Mat3 ti;
  ti << 1, 0, -sy,
        0, cx, sx * cy,
        0, -sx, cx * cy;
  return ti;
}

Mat3 euler_rate_matrix_dot(const Attitude& att) {
  check_gimbal(att);
  const double cx = std::cos(att.angles.x()), sx = std::sin(att.angles.x());
  const double cy = std::cos(att.angles.y()), sy = std::sin(att.angles.y());
  const double ty = sy / cy, sec2 = 1.0 / (cy * cy);
  const double dx = att.rates.x(), dy = att.rates.y();
  Mat3 td;
  td << 0, dx * cx * ty + dy * sx * sec2, -dx * sx * ty + dy * cx * sec2,
        0, -dx * sx, -dx * cx,
        0, (dx * cx * cy + dy * sx * sy) * sec2, (-dx * sx * cy + dy * cx * sy) * sec2;
  return td;
}

Vec3 body_rates_from_euler_rates(const Attitude& att) {
  return euler_rate_matrix_inverse(att) * att.rates;
}

double strain(const Vec3& r_s) {
  const double n = r_s.norm();
  if (n < kMinSegmentLength) throw DegenerateSegment(-1);
  return n - 1.0;
}

Vec3 internal_force(const Vec3& r_s, const CableParams& p) {
  const double n = r_s.norm();
  if (n < kMinSegmentLength) throw DegenerateSegment(-1);
  return p.axial_stiffness() * (n - 1.0) * (r_s / n);
}

Vec3 drag_load(const Vec3& r_t, const CableParams& p) {
  return -p.air_density * p.drag_coeff * r_t.norm() * r_t;
}

Vec3 gravity_load(const CableParams& p, double g) {
  return Vec3(0, 0, -p.linear_mass() * g);
}

RotorWrench rotor_wrench(const std::array<double, 4>& speeds, const QuadParams& p) {
  RotorWrench w{Vec3::Zero(), Vec3::Zero()};
  for (int i = 0; i < 4; ++i) {
    const double f = p.thrust_coeffs[i] * speeds[i] * speeds[i];
    const Vec3 f_vec(0, 0, f);
    w.thrust_body += f_vec;
    // Reaction torque alternates sign with rotor index (1-based parity).
    const double sign = (i % 2 == 0) ? -1.0 : 1.0;
    w.torque_body += p.rotor_positions[i].cross(f_vec) +
                     sign * p.drag_coeffs[i] * speeds[i] * speeds[i] * Vec3::UnitZ();
  }
  return w;
}

namespace {

Eigen::Matrix4d mixer_matrix(const QuadParams& p) {
  Eigen::Matrix4d m;
  for (int i = 0; i < 4; ++i) {
    const double sign = (i % 2 == 0) ? -1.0 : 1.0;
    const Vec3 arm = p.rotor_positions[i].cross(Vec3::UnitZ()) * p.thrust_coeffs[i];
    m(0, i) = p.thrust_coeffs[i];
    m(1, i) = arm.x();
    m(2, i) = arm.y();
    m(3, i) = arm.z() + sign * p.drag_coeffs[i];
  }
  return m;
}

Eigen::Vector4d solve_mixer(double thrust, const Vec3& torque_body, const QuadParams& p) {
  Eigen::Vector4d rhs;
  rhs << thrust, torque_body.x(), torque_body.y(), torque_body.z();
  return mixer_matrix(p).partialPivLu().solve(rhs);
}

}  // namespace

std::array<double, 4> allocate_rotors(double thrust, const Vec3& torque_body,
                                      const QuadParams& p) {
  const Eigen::Vector4d sq = solve_mixer(thrust, torque_body, p);
  std::array<double, 4> speeds{};
  const double tol = -1e-12 * std::max(1.0, sq.cwiseAbs().maxCoeff());
  for (int i = 0; i < 4; ++i) {
    if (sq[i] < tol) throw InfeasibleAllocation();
    speeds[i] = std::sqrt(std::max(0.0, sq[i]));
  }
  return speeds;
}

std::array<double, 4> allocate_rotors_saturating(double thrust, const Vec3& torque_body,
                                                 const QuadParams& p, bool* saturated) {
  const Eigen::Vector4d sq = solve_mixer(thrust, torque_body, p);
  std::array<double, 4> speeds{};
  bool clamped = false;
  for (int i = 0; i < 4; ++i) {
    if (sq[i] < 0) clamped = true;
    speeds[i] = std::sqrt(std::max(0.0, sq[i]));
  }
  if (saturated) *saturated = clamped;
  return speeds;
}

double steady_profile(const CableParams& p, double g, double s) {
  const double rge = p.density * g / p.young_modulus;
  return -(1.0 + rge * p.length) * s + 0.5 * rge * s * s;
}

CableParams table_cable_params() { return CableParams{}; }

QuadParams table_quad_params() { return QuadParams{}; }

CableParams experiment_cable_params() {
  CableParams p;
  p.length = 1.0;
  p.cross_section = 3.1416e-6;
  p.density = 3.0239e3;
  p.young_modulus = 1234623.7038;
  p.drag_coeff = 0.0013648;
  p.air_density = 1.293;
  return p;
}

}  // namespace flexcable
