#pragma once

#include <array>

#include "flexcable/types.hpp"

namespace flexcable {

// Physical constants of the cable continuum.
struct CableParams {
  double length = 1.0;            // L, rest arc length [m]
  double cross_section = 7.854e-5;  // A [m^2]
  double density = 1.2732e3;      // rho_c [kg m^-3]
  double young_modulus = 1.0e5;   // E [N m^-2]
  double drag_coeff = 0.01;       // c_d, aggregate per-length coefficient
  double air_density = 1.293;     // rho_a [kg m^-3]

  double axial_stiffness() const { return young_modulus * cross_section; }  // EA
  double linear_mass() const { return density * cross_section; }            // rho_c A
  double total_mass() const { return linear_mass() * length; }

  void validate() const;
};

// Rigid-body constants of the quadrotor.
struct QuadParams {
  double mass = 0.3;                         // m_B [kg]
  Vec3 inertia = Vec3(1e-6, 1e-6, 2e-6);     // diagonal of J_B [kg m^2]
  std::array<Vec3, 4> rotor_positions = {Vec3(0.15, 0, 0), Vec3(0, 0.15, 0),
                                         Vec3(-0.15, 0, 0), Vec3(0, -0.15, 0)};
  std::array<double, 4> thrust_coeffs = {4e-7, 4e-7, 4e-7, 4e-7};  // c_T [N s^2]
  std::array<double, 4> drag_coeffs = {3e-9, 3e-9, 3e-9, 3e-9};    // c_tau [N m s^2]
  double gravity = 9.8;                      // g [m s^-2]

  void validate() const;
};

// Tait-Bryan Z->Y->X angles and their rates.
struct Attitude {
  Vec3 angles = Vec3::Zero();  // (theta_x, theta_y, theta_z) [rad]
  Vec3 rates = Vec3::Zero();   // angle time derivatives [rad/s]
};

constexpr double kGimbalGuard = 1e-3;       // rad from |theta_y| = pi/2
constexpr double kMinSegmentLength = 1e-9;  // m

// Body-to-world rotation, composed Z then Y then X.
Mat3 rotation_from_attitude(const Attitude& att);

// Kinematic matrix mapping body rates to Tait-Bryan angle rates.
Mat3 euler_rate_matrix(const Attitude& att);
// Its inverse (body rates from angle rates), in closed form.
Mat3 euler_rate_matrix_inverse(const Attitude& att);
// Time derivative of euler_rate_matrix along the current rates.
Mat3 euler_rate_matrix_dot(const Attitude& att);

// omega_B in the body frame from the stored angle rates.
Vec3 body_rates_from_euler_rates(const Attitude& att);

// Throws GimbalLock when |theta_y| is within the guard band of pi/2.
void check_gimbal(const Attitude& att);

// Elongation strain of a spatial-derivative vector.
double strain(const Vec3& r_s);

// Tangential elastic force EA*eps*unit(r_s).
Vec3 internal_force(const Vec3& r_s, const CableParams& p);

// Quadratic aerodynamic drag per unit length; zero velocity maps to zero.
Vec3 drag_load(const Vec3& r_t, const CableParams& p);

// Constant gravity load per unit length.
Vec3 gravity_load(const CableParams& p, double g);

// Body-frame thrust sum and torque produced by the four rotors at speeds w.
struct RotorWrench {
  Vec3 thrust_body;  // sum of f_T^i, along e_z
  Vec3 torque_body;
};
RotorWrench rotor_wrench(const std::array<double, 4>& speeds, const QuadParams& p);

// Inverts the quadratic mixer: total thrust magnitude + body torque -> speeds.
// Throws InfeasibleAllocation when a squared speed would be negative.
std::array<double, 4> allocate_rotors(double thrust, const Vec3& torque_body,
                                      const QuadParams& p);

// Closed-loop variant used by scenario runners: clamps negative squared
// speeds to zero instead of throwing, and reports whether clamping occurred.
std::array<double, 4> allocate_rotors_saturating(double thrust, const Vec3& torque_body,
                                                 const QuadParams& p, bool* saturated);

// Vertical sag of the hanging cable below the head at rest: z offset as a
// function of arc coordinate s, pure closed form.
double steady_profile(const CableParams& p, double g, double s);

// Table-of-parameters presets.
CableParams table_cable_params();
QuadParams table_quad_params();
// Measured/identified cable of the hardware rig.
CableParams experiment_cable_params();

}  // namespace flexcable
