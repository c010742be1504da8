#include "dragplan/control.hpp"

#include <cmath>

#include "dragplan/errors.hpp"

namespace dragplan {

namespace {

constexpr double kThrustEpsilon = 1e-6;

Eigen::Vector3d heading(double yaw) { return {std::cos(yaw), std::sin(yaw), 0.0}; }

// Component of `d` orthogonal to unit vector `u`, divided by `norm`: the
// derivative of x / |x| given x = norm * u and dx = d.
Eigen::Vector3d unit_derivative(const Eigen::Vector3d& u, const Eigen::Vector3d& d, double norm) {
  return (d - u * u.dot(d)) / norm;
}

}  // namespace

FlatState::Vector FlatState::to_vector() const {
  Vector z;
  z << position, velocity, acceleration, jerk, snap, yaw, yaw_rate;
  return z;
}

FlatState FlatState::from_vector(const Vector& z) {
  FlatState f;
  f.position = z.segment<3>(0);
  f.velocity = z.segment<3>(3);
  f.acceleration = z.segment<3>(6);
  f.jerk = z.segment<3>(9);
  f.snap = z.segment<3>(12);
  f.yaw = z[15];
  f.yaw_rate = z[16];
  return f;
}

void Se3Gains::validate() const {
  for (const auto* g : {&kp, &kv, &kr, &kw}) {
    if (!(g->array() > 0.0).all()) throw ConfigError("gains: all gains must be positive");
  }
}

Eigen::Matrix3d body_frame(const Eigen::Vector3d& thrust_vector, double yaw) {
  const double n = thrust_vector.norm();
  if (!(n >= kThrustEpsilon)) {
    throw SingularThrustError("thrust vector vanishes; attitude is undefined");
  }
  const Eigen::Vector3d b3 = thrust_vector / n;
  Eigen::Vector3d b2 = b3.cross(heading(yaw));
  if (b2.norm() < kThrustEpsilon) {
    // Body z along the heading: fall back to the lateral axis.
    b2 = Eigen::Vector3d(-std::sin(yaw), std::cos(yaw), 0.0);
    b2 -= b3 * b3.dot(b2);
  }
  b2.normalize();
  Eigen::Matrix3d r;
  r.col(0) = b2.cross(b3);
  r.col(1) = b2;
  r.col(2) = b3;
  return r;
}

AttitudeReference flat_to_reference(const FlatState& flat, const VehicleParams& params) {
  const Eigen::Vector3d accel = flat.acceleration + Eigen::Vector3d(0.0, 0.0, params.gravity);
  AttitudeReference ref;
  ref.rotation = body_frame(accel, flat.yaw);
  const double accel_norm = accel.norm();
  ref.thrust = params.mass * accel_norm;

  // Differentiate the frame construction in time and read off R^T dR/dt.
  const Eigen::Vector3d b3 = ref.rotation.col(2);
  const Eigen::Vector3d b3_dot = unit_derivative(b3, flat.jerk, accel_norm);
  const Eigen::Vector3d c1 = heading(flat.yaw);
  const Eigen::Vector3d c1_dot = flat.yaw_rate * Eigen::Vector3d(-std::sin(flat.yaw),
                                                                 std::cos(flat.yaw), 0.0);
  const Eigen::Vector3d w = b3.cross(c1);
  const double w_norm = w.norm();
  Eigen::Vector3d b2_dot = Eigen::Vector3d::Zero();
  if (w_norm >= kThrustEpsilon) {
    const Eigen::Vector3d w_dot = b3_dot.cross(c1) + b3.cross(c1_dot);
    b2_dot = unit_derivative(w / w_norm, w_dot, w_norm);
  }
  const Eigen::Vector3d b2 = ref.rotation.col(1);
  const Eigen::Vector3d b1_dot = b2_dot.cross(b3) + b2.cross(b3_dot);

  Eigen::Matrix3d rotation_dot;
  rotation_dot << b1_dot, b2_dot, b3_dot;
  const Eigen::Matrix3d omega_hat = ref.rotation.transpose() * rotation_dot;
  ref.body_rates = 0.5 * (vee(omega_hat) - vee(omega_hat.transpose()));
  return ref;
}

Eigen::Vector3d desired_force(const QuadState& state, const FlatState& reference,
                              const Se3Gains& gains, const VehicleParams& params) {
  const Eigen::Vector3d e_p = state.position - reference.position;
  const Eigen::Vector3d e_v = state.velocity - reference.velocity;
  return params.mass * (-gains.kp.cwiseProduct(e_p) - gains.kv.cwiseProduct(e_v) +
                        reference.acceleration + Eigen::Vector3d(0.0, 0.0, params.gravity));
}

ControlInput se3_control(const QuadState& state, const FlatState& reference,
                         const Se3Gains& gains, const VehicleParams& params) {
  const AttitudeReference ff = flat_to_reference(reference, params);

  const Eigen::Vector3d force = desired_force(state, reference, gains, params);

  const Eigen::Matrix3d& r = state.rotation;
  ControlInput u;
  u.collective_thrust = force.dot(r.col(2));

  const Eigen::Matrix3d r_des = body_frame(force, reference.yaw);
  const Eigen::Vector3d e_r = 0.5 * vee(r_des.transpose() * r - r.transpose() * r_des);
  const Eigen::Vector3d e_w = state.body_rates - r.transpose() * r_des * ff.body_rates;
  const Eigen::Vector3d& w = state.body_rates;
  u.torques = params.inertia * (-gains.kr.cwiseProduct(e_r) - gains.kw.cwiseProduct(e_w)) +
              w.cross(params.inertia * w);
  return u;
}

}  // namespace dragplan
