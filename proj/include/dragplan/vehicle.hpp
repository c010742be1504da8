#pragma once

#include <Eigen/Dense>

namespace dragplan {

/// Physical constants of the quadrotor. Defaults are Crazyflie-scale.
struct VehicleParams {
  double mass = 0.03;     // kg
  double gravity = 9.81;  // m/s^2
  Eigen::Matrix3d inertia = Eigen::Vector3d(1.43e-5, 1.43e-5, 2.89e-5).asDiagonal();
  // Diagonal of C (parasitic drag), N s^2 / m^2, body axes.
  Eigen::Vector3d parasitic_drag{0.30e-2, 0.30e-2, 0.50e-2};
  // Diagonal of K = (k_d, k_d, k_z) (rotor drag), N s / (m rad/s).
  Eigen::Vector3d rotor_drag{1.0e-7, 1.0e-7, 3.0e-7};
  double thrust_coeff = 2.3e-8;       // per-rotor thrust f = k * eta^2
  double arm_length = 0.043;          // m, hub to rotor
  double yaw_torque_coeff = 7.8e-10;  // per-rotor yaw torque = k_m * eta^2
  double rotor_speed_min = 0.0;       // rad/s
  double rotor_speed_max = 2500.0;    // rad/s
  Eigen::Vector3d aero_moment = Eigen::Vector3d::Zero();  // N m, body frame
  // When a command exceeds the rotor limits, desaturate by priority (roll and
  // pitch torque, collective thrust, yaw torque) instead of clipping rotors
  // independently.
  bool attitude_priority = true;

  /// Throws ConfigError when a physical invariant is violated.
  void validate() const;

  double hover_thrust() const { return mass * gravity; }
  double max_collective_thrust() const;
  double min_collective_thrust() const;
};

struct QuadState {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  Eigen::Vector3d velocity = Eigen::Vector3d::Zero();  // world frame
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();  // body -> world
  Eigen::Vector3d body_rates = Eigen::Vector3d::Zero();
  Eigen::Vector4d rotor_speeds = Eigen::Vector4d::Zero();

  /// Hovering at rest at `position` with heading `yaw`.
  static QuadState hover(const VehicleParams& params, const Eigen::Vector3d& position,
                         double yaw = 0.0);
};

struct ControlInput {
  double collective_thrust = 0.0;  // N
  Eigen::Vector3d torques = Eigen::Vector3d::Zero();  // N m, body frame

  Eigen::Vector4d as_vector() const {
    return {collective_thrust, torques.x(), torques.y(), torques.z()};
  }
  static ControlInput from_vector(const Eigen::Vector4d& u) {
    return {u[0], u.tail<3>()};
  }
};

struct RotorCommand {
  Eigen::Vector4d speeds;
  bool saturated = false;
};

/// Body-frame aerodynamic force: -C |v| R^T v - K eta_s R^T v.
Eigen::Vector3d aero_forces(const QuadState& state, const VehicleParams& params);

/// Maps per-rotor thrusts to (collective thrust, tau_x, tau_y, tau_z).
/// Quad-X layout: rotors at (+,+), (+,-), (-,-), (-,+) in body x/y, alternating spin.
Eigen::Matrix4d allocation_matrix(const VehicleParams& params);

/// Inverts the mixer and converts per-rotor thrust to speed, clamping to the
/// admissible speed range.
RotorCommand allocate_rotors(const ControlInput& u, const VehicleParams& params);

/// Forward mixer: the wrench produced by a set of rotor speeds.
ControlInput rotor_wrench(const Eigen::Vector4d& rotor_speeds, const VehicleParams& params);

struct StepResult {
  QuadState state;
  ControlInput applied;  // wrench after allocation clamping
  bool saturated = false;
};

inline constexpr double kMaxStep = 0.05;
inline constexpr double kDivergenceBound = 1e6;

/// One fixed step of the 5th-order Dormand-Prince scheme with zero-order-hold input.
/// Throws DivergenceError when the result is non-finite or exceeds kDivergenceBound.
StepResult advance(const QuadState& state, const ControlInput& u, double dt,
                   const VehicleParams& params);

inline QuadState step_dynamics(const QuadState& state, const ControlInput& u, double dt,
                               const VehicleParams& params) {
  return advance(state, u, dt, params).state;
}

/// Nearest rotation matrix in the Frobenius sense (polar factor).
Eigen::Matrix3d orthonormalize(const Eigen::Matrix3d& m);

Eigen::Matrix3d hat(const Eigen::Vector3d& w);
Eigen::Vector3d vee(const Eigen::Matrix3d& m);

}  // namespace dragplan
