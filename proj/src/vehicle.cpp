#include "dragplan/vehicle.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dragplan/errors.hpp"

namespace dragplan {

namespace {

using Packed = Eigen::Matrix<double, 18, 1>;

Packed pack(const QuadState& s) {
  Packed x;
  x.segment<3>(0) = s.position;
  x.segment<3>(3) = s.velocity;
  x.segment<9>(6) = Eigen::Map<const Eigen::Matrix<double, 9, 1>>(s.rotation.data());
  x.segment<3>(15) = s.body_rates;
  return x;
}

QuadState unpack(const Packed& x, const Eigen::Vector4d& rotor_speeds) {
  QuadState s;
  s.position = x.segment<3>(0);
  s.velocity = x.segment<3>(3);
  s.rotation = Eigen::Map<const Eigen::Matrix3d>(x.data() + 6);
  s.body_rates = x.segment<3>(15);
  s.rotor_speeds = rotor_speeds;
  return s;
}

struct Wrench {
  double thrust;
  Eigen::Vector3d torques;
  double rotor_speed_sum;
};

Packed derivative(const Packed& x, const Wrench& w, const VehicleParams& params,
                  const Eigen::Matrix3d& inertia_inv) {
  const Eigen::Vector3d v = x.segment<3>(3);
  const Eigen::Map<const Eigen::Matrix3d> rotation(x.data() + 6);
  const Eigen::Vector3d omega = x.segment<3>(15);

  const Eigen::Vector3d v_body = rotation.transpose() * v;
  const Eigen::Vector3d f_aero = -params.parasitic_drag.cwiseProduct(v_body) * v.norm() -
                                 w.rotor_speed_sum * params.rotor_drag.cwiseProduct(v_body);
  const Eigen::Vector3d body_force = Eigen::Vector3d(0.0, 0.0, w.thrust) + f_aero;

  Packed dx;
  dx.segment<3>(0) = v;
  dx.segment<3>(3) = rotation * body_force / params.mass - Eigen::Vector3d(0, 0, params.gravity);
  const Eigen::Matrix3d rotation_dot = rotation * hat(omega);
  dx.segment<9>(6) = Eigen::Map<const Eigen::Matrix<double, 9, 1>>(rotation_dot.data());
  dx.segment<3>(15) = inertia_inv * (w.torques + params.aero_moment -
                                     omega.cross(params.inertia * omega));
  return dx;
}

// Dormand-Prince 5(4) coefficients; only the 5th-order solution is used.
constexpr double a21 = 1.0 / 5.0;
constexpr double a31 = 3.0 / 40.0, a32 = 9.0 / 40.0;
constexpr double a41 = 44.0 / 45.0, a42 = -56.0 / 15.0, a43 = 32.0 / 9.0;
constexpr double a51 = 19372.0 / 6561.0, a52 = -25360.0 / 2187.0, a53 = 64448.0 / 6561.0,
                 a54 = -212.0 / 729.0;
constexpr double a61 = 9017.0 / 3168.0, a62 = -355.0 / 33.0, a63 = 46732.0 / 5247.0,
                 a64 = 49.0 / 176.0, a65 = -5103.0 / 18656.0;
constexpr double b1 = 35.0 / 384.0, b3 = 500.0 / 1113.0, b4 = 125.0 / 192.0,
                 b5 = -2187.0 / 6784.0, b6 = 11.0 / 84.0;

bool diverged(const QuadState& s) {
  auto bad = [](const auto& m) {
    return !m.allFinite() || m.cwiseAbs().maxCoeff() > kDivergenceBound;
  };
  return bad(s.position) || bad(s.velocity) || bad(s.rotation) || bad(s.body_rates);
}

}  // namespace

void VehicleParams::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError("vehicle: " + what); };
  if (!(mass > 0.0)) fail("mass must be positive");
  if (!(gravity > 0.0)) fail("gravity must be positive");
  if (!inertia.isApprox(inertia.transpose(), 1e-12)) fail("inertia must be symmetric");
  if (Eigen::LLT<Eigen::Matrix3d>(inertia).info() != Eigen::Success) {
    fail("inertia must be positive definite");
  }
  if ((parasitic_drag.array() < 0.0).any() || (rotor_drag.array() < 0.0).any()) {
    fail("drag coefficients must be non-negative");
  }
  if (rotor_drag.x() != rotor_drag.y()) fail("rotor drag must have k_d on both x and y");
  if (!(thrust_coeff > 0.0)) fail("thrust_coeff must be positive");
  if (!(arm_length > 0.0)) fail("arm_length must be positive");
  if (!(yaw_torque_coeff > 0.0)) fail("yaw_torque_coeff must be positive");
  if (!(rotor_speed_min >= 0.0 && rotor_speed_min < rotor_speed_max)) {
    fail("need 0 <= rotor_speed_min < rotor_speed_max");
  }
  if (!aero_moment.allFinite()) fail("aero_moment must be finite");
}

double VehicleParams::max_collective_thrust() const {
  return 4.0 * thrust_coeff * rotor_speed_max * rotor_speed_max;
}

double VehicleParams::min_collective_thrust() const {
  return 4.0 * thrust_coeff * rotor_speed_min * rotor_speed_min;
}

QuadState QuadState::hover(const VehicleParams& params, const Eigen::Vector3d& position,
                           double yaw) {
  QuadState s;
  s.position = position;
  s.rotation = Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitZ()).toRotationMatrix();
  s.rotor_speeds.setConstant(std::sqrt(params.hover_thrust() / (4.0 * params.thrust_coeff)));
  return s;
}

Eigen::Matrix3d hat(const Eigen::Vector3d& w) {
  Eigen::Matrix3d m;
  m << 0.0, -w.z(), w.y(),
       w.z(), 0.0, -w.x(),
       -w.y(), w.x(), 0.0;
  return m;
}

Eigen::Vector3d vee(const Eigen::Matrix3d& m) { return {m(2, 1), m(0, 2), m(1, 0)}; }

Eigen::Matrix3d orthonormalize(const Eigen::Matrix3d& m) {
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d r = svd.matrixU() * svd.matrixV().transpose();
  if (r.determinant() < 0.0) {
    Eigen::Matrix3d u = svd.matrixU();
    u.col(2) *= -1.0;
    r = u * svd.matrixV().transpose();
  }
  return r;
}

Eigen::Vector3d aero_forces(const QuadState& state, const VehicleParams& params) {
  const Eigen::Vector3d v_body = state.rotation.transpose() * state.velocity;
  const double eta_sum = state.rotor_speeds.sum();
  return -params.parasitic_drag.cwiseProduct(v_body) * state.velocity.norm() -
         eta_sum * params.rotor_drag.cwiseProduct(v_body);
}

Eigen::Matrix4d allocation_matrix(const VehicleParams& params) {
  const double d = params.arm_length / std::sqrt(2.0);
  const double kappa = params.yaw_torque_coeff / params.thrust_coeff;
  const Eigen::Vector4d x(d, d, -d, -d);
  const Eigen::Vector4d y(d, -d, -d, d);
  const Eigen::Vector4d spin(1.0, -1.0, 1.0, -1.0);
  Eigen::Matrix4d m;
  m.row(0).setOnes();
  m.row(1) = y.transpose();
  m.row(2) = -x.transpose();
  m.row(3) = kappa * spin.transpose();
  return m;
}

RotorCommand allocate_rotors(const ControlInput& u, const VehicleParams& params) {
  const Eigen::Matrix4d inv = allocation_matrix(params).inverse();
  Eigen::Vector4d thrusts = inv * u.as_vector();
  RotorCommand cmd;
  const double f_min = params.thrust_coeff * params.rotor_speed_min * params.rotor_speed_min;
  const double f_max = params.thrust_coeff * params.rotor_speed_max * params.rotor_speed_max;
  if (params.attitude_priority && (thrusts.minCoeff() < f_min || thrusts.maxCoeff() > f_max)) {
    // Roll and pitch first, then collective thrust, then yaw.
    Eigen::Vector4d tilt = inv * Eigen::Vector4d(0.0, u.torques.x(), u.torques.y(), 0.0);
    const double spread = tilt.maxCoeff() - tilt.minCoeff();
    if (spread > f_max - f_min) tilt *= (f_max - f_min) / spread;
    const double lo = 4.0 * (f_min - tilt.minCoeff());
    const double hi = 4.0 * (f_max - tilt.maxCoeff());
    thrusts = tilt + Eigen::Vector4d::Constant(std::clamp(u.collective_thrust, lo, hi) / 4.0);
    const Eigen::Vector4d yaw = inv * Eigen::Vector4d(0.0, 0.0, 0.0, u.torques.z());
    double keep = 1.0;
    for (int i = 0; i < 4; ++i) {
      if (yaw[i] > 0.0) keep = std::min(keep, (f_max - thrusts[i]) / yaw[i]);
      else if (yaw[i] < 0.0) keep = std::min(keep, (f_min - thrusts[i]) / yaw[i]);
    }
    thrusts += std::max(keep, 0.0) * yaw;
    cmd.saturated = true;
  }
  for (int i = 0; i < 4; ++i) {
    double speed = thrusts[i] > 0.0 ? std::sqrt(thrusts[i] / params.thrust_coeff) : 0.0;
    if (thrusts[i] < 0.0 || speed < params.rotor_speed_min) {
      speed = params.rotor_speed_min;
      cmd.saturated = true;
    } else if (speed > params.rotor_speed_max) {
      speed = params.rotor_speed_max;
      cmd.saturated = true;
    }
    cmd.speeds[i] = speed;
  }
  return cmd;
}

ControlInput rotor_wrench(const Eigen::Vector4d& rotor_speeds, const VehicleParams& params) {
  const Eigen::Vector4d thrusts = params.thrust_coeff * rotor_speeds.cwiseAbs2();
  return ControlInput::from_vector(allocation_matrix(params) * thrusts);
}

StepResult advance(const QuadState& state, const ControlInput& u, double dt,
                   const VehicleParams& params) {
  if (!(dt > 0.0 && dt <= kMaxStep)) {
    throw std::invalid_argument("advance: dt must lie in (0, 0.05]");
  }
  const RotorCommand cmd = allocate_rotors(u, params);
  const ControlInput applied = rotor_wrench(cmd.speeds, params);
  const Wrench wrench{applied.collective_thrust, applied.torques, cmd.speeds.sum()};
  const Eigen::Matrix3d inertia_inv = params.inertia.inverse();

  const Packed x0 = pack(state);
  auto f = [&](const Packed& x) { return derivative(x, wrench, params, inertia_inv); };
  const Packed k1 = f(x0);
  const Packed k2 = f(x0 + dt * (a21 * k1));
  const Packed k3 = f(x0 + dt * (a31 * k1 + a32 * k2));
  const Packed k4 = f(x0 + dt * (a41 * k1 + a42 * k2 + a43 * k3));
  const Packed k5 = f(x0 + dt * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4));
  const Packed k6 = f(x0 + dt * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5));
  const Packed x1 = x0 + dt * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);

  StepResult out{unpack(x1, cmd.speeds), applied, cmd.saturated};
  if (diverged(out.state)) throw DivergenceError("simulation diverged");
  out.state.rotation = orthonormalize(out.state.rotation);
  return out;
}

}  // namespace dragplan
