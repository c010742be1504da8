#include <doctest.h>

#include <cmath>
#include <random>

#include "dragplan/control.hpp"
#include "dragplan/errors.hpp"
#include "scenarios.hpp"

using namespace dragplan;

namespace {

Eigen::Matrix3d yaw_rotation(double psi) {
  return Eigen::AngleAxisd(psi, Eigen::Vector3d::UnitZ()).toRotationMatrix();
}

FlatState random_flat(std::mt19937_64& gen) {
  std::normal_distribution<double> n(0.0, 1.0);
  FlatState f;
  f.position = {n(gen), n(gen), n(gen)};
  f.velocity = {n(gen), n(gen), n(gen)};
  f.acceleration = {2 * n(gen), 2 * n(gen), 2 * n(gen)};
  f.jerk = {3 * n(gen), 3 * n(gen), 3 * n(gen)};
  f.snap = {n(gen), n(gen), n(gen)};
  f.yaw = 0.5 * n(gen);
  f.yaw_rate = n(gen);
  return f;
}

}  // namespace

TEST_CASE("flat state packs into 17 numbers") {
  std::mt19937_64 gen(1);
  const FlatState f = random_flat(gen);
  const FlatState::Vector z = f.to_vector();
  CHECK(z.size() == 17);
  const FlatState g = FlatState::from_vector(z);
  CHECK(g.to_vector() == z);
  CHECK(z[15] == f.yaw);
  CHECK(z[16] == f.yaw_rate);
}

TEST_CASE("hover at the reference emits exactly the weight") {
  const VehicleParams p;
  const Se3Gains gains;
  const QuadState s = QuadState::hover(p, {1.0, 2.0, 3.0});
  const ControlInput u = se3_control(s, FlatState::hover({1.0, 2.0, 3.0}), gains, p);
  CHECK(u.collective_thrust == p.mass * p.gravity);
  CHECK(u.torques.x() == 0.0);
  CHECK(u.torques.y() == 0.0);
  CHECK(u.torques.z() == 0.0);
}

TEST_CASE("flatness map examples") {
  const VehicleParams p;
  FlatState f;
  f.acceleration = {0.0, 0.0, -p.gravity};
  CHECK_THROWS_AS(flat_to_reference(f, p), SingularThrustError);

  f.acceleration = {p.gravity, 0.0, 0.0};
  const AttitudeReference ref = flat_to_reference(f, p);
  const Eigen::Vector3d expected_z = Eigen::Vector3d(1.0, 0.0, 1.0).normalized();
  CHECK((ref.rotation.col(2) - expected_z).norm() <= 1e-12);
  CHECK(ref.thrust == doctest::Approx(p.mass * p.gravity * std::sqrt(2.0)).epsilon(1e-12));

  const AttitudeReference still = flat_to_reference(FlatState::hover(Eigen::Vector3d::Zero(), 0.3), p);
  CHECK((still.rotation - yaw_rotation(0.3)).norm() <= 1e-12);
  CHECK(still.body_rates.norm() <= 1e-12);
}

TEST_CASE("flatness body rates match the derivative of the attitude") {
  const VehicleParams p;
  std::mt19937_64 gen(5);
  for (int trial = 0; trial < 20; ++trial) {
    const FlatState f = random_flat(gen);
    auto at = [&](double h) {
      FlatState g = f;
      g.acceleration = f.acceleration + h * f.jerk + 0.5 * h * h * f.snap;
      g.yaw = f.yaw + h * f.yaw_rate;
      return flat_to_reference(g, p).rotation;
    };
    const double h = 1e-6;
    const Eigen::Matrix3d r_dot = (at(h) - at(-h)) / (2 * h);
    const Eigen::Matrix3d r = at(0.0);
    const Eigen::Vector3d numeric = vee(r.transpose() * r_dot);
    CHECK((flat_to_reference(f, p).body_rates - numeric).norm() <= 1e-5 * (1.0 + numeric.norm()));
  }
}

TEST_CASE("position loop force") {
  const VehicleParams p;
  const Se3Gains gains;
  QuadState s = QuadState::hover(p, {0.1, 0.0, 0.0});
  const Eigen::Vector3d force = desired_force(s, FlatState::hover(Eigen::Vector3d::Zero()), gains, p);
  CHECK(force.x() == doctest::Approx(-p.mass * gains.kp.x() * 0.1).epsilon(1e-14));
  CHECK(force.z() == doctest::Approx(p.mass * p.gravity).epsilon(1e-14));
}

TEST_CASE("controller is equivariant under a world yaw rotation") {
  const VehicleParams p;
  const Se3Gains gains;
  std::mt19937_64 gen(9);
  std::normal_distribution<double> n(0.0, 0.3);
  for (int trial = 0; trial < 20; ++trial) {
    FlatState ref = random_flat(gen);
    QuadState s;
    s.position = ref.position + Eigen::Vector3d(n(gen), n(gen), n(gen));
    s.velocity = ref.velocity + Eigen::Vector3d(n(gen), n(gen), n(gen));
    s.rotation = Eigen::AngleAxisd(0.3, Eigen::Vector3d(n(gen), n(gen), 1.0).normalized()).toRotationMatrix();
    s.body_rates = {n(gen), n(gen), n(gen)};

    const double psi = 0.9;
    const Eigen::Matrix3d rz = yaw_rotation(psi);
    QuadState s2 = s;
    s2.position = rz * s.position;
    s2.velocity = rz * s.velocity;
    s2.rotation = rz * s.rotation;
    FlatState ref2 = ref;
    ref2.position = rz * ref.position;
    ref2.velocity = rz * ref.velocity;
    ref2.acceleration = rz * ref.acceleration;
    ref2.jerk = rz * ref.jerk;
    ref2.snap = rz * ref.snap;
    ref2.yaw = ref.yaw + psi;

    const ControlInput u1 = se3_control(s, ref, gains, p);
    const ControlInput u2 = se3_control(s2, ref2, gains, p);
    const Eigen::Vector3d thrust1 = u1.collective_thrust * s.rotation.col(2);
    const Eigen::Vector3d thrust2 = u2.collective_thrust * s2.rotation.col(2);
    CHECK((rz * thrust1 - thrust2).norm() <= 1e-10 * (1.0 + thrust1.norm()));
    CHECK(std::abs(u1.torques.norm() - u2.torques.norm()) <= 1e-10 * (1.0 + u1.torques.norm()));
  }
}

TEST_CASE("zero gains leave only the feedforward") {
  VehicleParams p;
  p.parasitic_drag.setZero();
  p.rotor_drag.setZero();
  Se3Gains zero;
  zero.kp.setZero();
  zero.kv.setZero();
  zero.kr.setZero();
  zero.kw.setZero();
  CHECK_THROWS_AS(zero.validate(), ConfigError);

  FlatState ref = FlatState::hover({0.0, 0.0, 1.0});
  ref.acceleration = {1.0, 0.0, 0.0};
  QuadState s = QuadState::hover(p, {3.0, -1.0, 0.0});
  s.velocity = {0.5, 0.5, 0.0};
  s.rotation = flat_to_reference(ref, p).rotation;
  const ControlInput u = se3_control(s, ref, zero, p);
  CHECK(u.collective_thrust == doctest::Approx(p.mass * std::hypot(1.0, p.gravity)).epsilon(1e-12));
  CHECK(u.torques.norm() <= 1e-15);
}

TEST_CASE("controller is stateless") {
  const VehicleParams p;
  const Se3Gains gains;
  std::mt19937_64 gen(2);
  const FlatState ref = random_flat(gen);
  QuadState s = QuadState::hover(p, ref.position + Eigen::Vector3d(0.2, 0.0, -0.1));
  const ControlInput first = se3_control(s, ref, gains, p);
  for (int i = 0; i < 5; ++i) se3_control(s, random_flat(gen), gains, p);
  const ControlInput again = se3_control(s, ref, gains, p);
  CHECK(first.as_vector() == again.as_vector());
}

TEST_CASE("slow circle is tracked closely") {
  const double rms = scenario::slow_circle_rms();
  MESSAGE("slow circle RMS " << rms << " m");
  CHECK(rms <= 0.05);
}

TEST_CASE("gain validation") {
  Se3Gains g;
  CHECK_NOTHROW(g.validate());
  g.kr.z() = -1.0;
  CHECK_THROWS_AS(g.validate(), ConfigError);
}
