#pragma once

#include <Eigen/Dense>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dragplan/control.hpp"

namespace dragplan {

/// Piecewise polynomial in (x, y, z, yaw) over consecutive segments. Each
/// segment uses local time t in [0, T_i] and a monomial basis.
///
/// Coefficient layout is segment-major, then channel (x, y, z, yaw), then
/// ascending power: index = (segment * 4 + channel) * (order + 1) + power.
struct PolySpline {
  static constexpr int kChannels = 4;
  static constexpr int kYaw = 3;

  int order = 7;
  std::vector<double> durations;
  Eigen::VectorXd coefficients;

  int segments() const { return static_cast<int>(durations.size()); }
  int coeffs_per_channel() const { return order + 1; }
  int size() const { return kChannels * segments() * (order + 1); }
  Eigen::Index index(int segment, int channel, int power) const {
    return (static_cast<Eigen::Index>(segment) * kChannels + channel) * (order + 1) + power;
  }
  double total_duration() const;

  /// Throws std::invalid_argument on size mismatch or non-positive durations.
  void validate() const;

  struct Sample {
    FlatState flat;
    bool clamped = false;  // t was outside [0, total_duration]
  };

  /// Right-continuous at segment junctions; out-of-range t is clamped.
  Sample sample(double t) const;
  FlatState evaluate(double t) const { return sample(t).flat; }
};

/// d-th derivative of sum_k c_k t^k, evaluated with Horner's scheme.
double polynomial_derivative(std::span<const double> coeffs, int derivative, double t);

struct Keyframe {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  double yaw = 0.0;
};

struct WaypointSet {
  std::vector<Keyframe> keyframes;
  std::optional<std::vector<double>> times;  // cumulative, one per keyframe

  void validate() const;
};

/// Minimum allowed segment duration for time allocation.
inline constexpr double kMinSegmentDuration = 0.1;

/// Straight-line distance over average speed, floored at kMinSegmentDuration.
std::vector<double> allocate_times(const WaypointSet& waypoints, double avg_speed);

/// Segment durations from explicit keyframe times if present, else allocated.
std::vector<double> segment_durations(const WaypointSet& waypoints, double avg_speed);

/// Block-diagonal Gram matrix of the integrated squared snap (position) and
/// weighted squared yaw rate, so that c^T H c is the trajectory cost.
Eigen::MatrixXd build_snap_cost(int order, std::span<const double> durations,
                                double yaw_rate_weight);

struct LinearConstraints {
  Eigen::MatrixXd A;
  Eigen::VectorXd b;
};

/// Waypoint interpolation, rest boundary conditions (position up to jerk, yaw
/// rate) and interior continuity (position up to jerk, yaw up to yaw rate).
LinearConstraints build_constraints(const WaypointSet& waypoints,
                                    std::span<const double> durations, int order);

struct QpSystem {
  Eigen::MatrixXd H;
  Eigen::MatrixXd A;
  Eigen::VectorXd b;
};

QpSystem build_qp(const WaypointSet& waypoints, std::span<const double> durations, int order,
                  double yaw_rate_weight);

inline constexpr double kKktRegularization = 1e-9;

/// Solves min c^T H c s.t. A c = b through the saddle-point system
/// [2H A^T; A 0]. Falls back to H + 1e-9 I when that system is singular.
Eigen::VectorXd solve_minsnap(const Eigen::MatrixXd& H, const Eigen::MatrixXd& A,
                              const Eigen::VectorXd& b);

struct SplineSettings {
  int order = 7;
  double avg_speed = 2.0;
  double yaw_rate_weight = 1.0;
};

/// Allocate times, build the QP and solve it.
PolySpline plan_minsnap(const WaypointSet& waypoints, const SplineSettings& settings);

std::string spline_to_json(const PolySpline& spline);
PolySpline spline_from_json(const std::string& text);
void save_spline(const PolySpline& spline, const std::string& path);
PolySpline load_spline(const std::string& path);

/// Waypoint file: {"keyframes": [[x, y, z, yaw], ...], "times": [...]}; times optional.
WaypointSet waypoints_from_json(const std::string& text);
std::string waypoints_to_json(const WaypointSet& waypoints);
WaypointSet load_waypoints(const std::string& path);

}  // namespace dragplan
