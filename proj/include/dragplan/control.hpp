#pragma once

#include <Eigen/Dense>

#include "dragplan/vehicle.hpp"

namespace dragplan {

/// Flat output of the quadrotor and its derivatives: 3 * 5 + 2 = 17 numbers.
struct FlatState {
  static constexpr int kDim = 17;
  using Vector = Eigen::Matrix<double, kDim, 1>;

  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  Eigen::Vector3d velocity = Eigen::Vector3d::Zero();
  Eigen::Vector3d acceleration = Eigen::Vector3d::Zero();
  Eigen::Vector3d jerk = Eigen::Vector3d::Zero();
  Eigen::Vector3d snap = Eigen::Vector3d::Zero();
  double yaw = 0.0;
  double yaw_rate = 0.0;

  /// Layout: position, velocity, acceleration, jerk, snap, yaw, yaw_rate.
  Vector to_vector() const;
  static FlatState from_vector(const Vector& z);

  static FlatState hover(const Eigen::Vector3d& position, double yaw = 0.0) {
    FlatState f;
    f.position = position;
    f.yaw = yaw;
    return f;
  }
};

/// Gains of the geometric controller, normalized by mass (position/velocity)
/// and by inertia (attitude/rate), so they read as 1/s^2 and 1/s.
struct Se3Gains {
  Eigen::Vector3d kp{49.0, 49.0, 49.0};
  Eigen::Vector3d kv{14.0, 14.0, 14.0};
  Eigen::Vector3d kr{400.0, 400.0, 150.0};
  Eigen::Vector3d kw{40.0, 40.0, 25.0};

  void validate() const;
};

struct AttitudeReference {
  Eigen::Matrix3d rotation;
  double thrust = 0.0;
  Eigen::Vector3d body_rates;
};

/// Thrust direction and heading to a body frame. The body x axis is the
/// heading (cos yaw, sin yaw, 0) projected onto the plane normal to body z.
/// Throws SingularThrustError when |thrust_vector| < 1e-6.
Eigen::Matrix3d body_frame(const Eigen::Vector3d& thrust_vector, double yaw);

/// Differential-flatness map from a flat state to attitude, thrust and body rates.
AttitudeReference flat_to_reference(const FlatState& flat, const VehicleParams& params);

/// m (-kp e_p - kv e_v + a_ref + g e3): the world-frame force the position loop asks for.
Eigen::Vector3d desired_force(const QuadState& state, const FlatState& reference,
                              const Se3Gains& gains, const VehicleParams& params);

/// Geometric SE(3) tracking law. Returns the unclamped command; rotor
/// allocation is responsible for saturation.
ControlInput se3_control(const QuadState& state, const FlatState& reference,
                         const Se3Gains& gains, const VehicleParams& params);

}  // namespace dragplan
