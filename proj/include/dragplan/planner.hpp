#pragma once

#include <Eigen/Dense>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dragplan/model.hpp"
#include "dragplan/spline.hpp"

namespace dragplan {

struct PgdConfig {
  int max_iters = 30;
  double step_size = 1.0;  // initial step; adapted by the line search
  bool backtracking = true;
  double shrink = 0.5;
  double step_growth = 2.0;  // trial step multiplier after an accepted step
  double min_step = 1e-8;
  double tolerance = 1e-6;  // on the norm of the projected gradient
  double armijo = 1e-4;
  std::optional<double> snap_weight;  // overrides the checkpoint's weight

  void validate() const;
};

inline constexpr double kMaxProjectionCondition = 1e12;

/// Euclidean projection onto {c : A c = b}. Rows are normalized before
/// factoring; this leaves the affine set, and so the projection, unchanged.
class AffineProjector {
 public:
  /// Throws NumericError when cond(A A^T) of the normalized rows exceeds
  /// kMaxProjectionCondition.
  AffineProjector(const Eigen::MatrixXd& A, const Eigen::VectorXd& b);

  /// c - A^T (A A^T)^{-1} (A c - b).
  Eigen::VectorXd project(const Eigen::VectorXd& c) const;
  /// Component of v in the null space of A.
  Eigen::VectorXd tangent(const Eigen::VectorXd& v) const;
  /// ||A c - b||_inf against the original rows.
  double residual(const Eigen::VectorXd& c) const;
  double condition() const { return condition_; }

 private:
  Eigen::MatrixXd A_;
  Eigen::VectorXd b_;
  Eigen::VectorXd row_scale_;
  Eigen::MatrixXd q_;  // n x r orthonormal basis of range(A^T)
  Eigen::MatrixXd r_;  // r x r upper triangular
  double condition_ = 0.0;
};

Eigen::VectorXd project_affine(const Eigen::VectorXd& c, const Eigen::MatrixXd& A,
                               const Eigen::VectorXd& b);

struct ObjectiveValue {
  double value = 0.0;
  Eigen::VectorXd gradient;
};

/// snap_weight * c^T H c + g_net(c, durations), with g_net in label space.
/// Durations are held fixed, so only the coefficient gradient is returned.
ObjectiveValue total_cost_and_grad(const Eigen::VectorXd& c, std::span<const double> durations,
                                   const Eigen::MatrixXd& H, const MlpModel& model,
                                   double snap_weight);

struct PgdIterate {
  int iteration = 0;
  double objective = 0.0;
  double step = 0.0;
  double residual = 0.0;
  double projected_gradient_norm = 0.0;
};

struct PlanResult {
  PolySpline spline;   // best iterate
  PolySpline minsnap;  // initialization
  std::vector<PgdIterate> log;
  double snap_weight = 0.0;
  int best_iteration = 0;
  bool warning = false;  // objective not finite at the minsnap start
  std::string stop_reason;
};

/// Projected gradient descent on the drag-aware objective, started from the
/// minimum-snap solution. Returns the best iterate seen.
PlanResult plan_drag_aware(const WaypointSet& waypoints, const MlpModel& model,
                           const PgdConfig& cfg, const SplineSettings& spline_settings);

void write_iteration_log(const PlanResult& result, const std::string& path);

}  // namespace dragplan
