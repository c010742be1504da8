#include "dragplan/planner.hpp"

#include <cmath>
#include <fstream>

#include "dragplan/errors.hpp"

namespace dragplan {

void PgdConfig::validate() const {
  if (max_iters < 1) throw ConfigError("pgd: max_iters must be >= 1");
  if (!(step_size > 0.0)) throw ConfigError("pgd: step_size must be > 0");
  if (!(shrink > 0.0 && shrink < 1.0)) throw ConfigError("pgd: shrink must lie in (0, 1)");
  if (!(step_growth >= 1.0)) throw ConfigError("pgd: step_growth must be >= 1");
  if (!(min_step > 0.0)) throw ConfigError("pgd: min_step must be > 0");
  if (!(tolerance >= 0.0)) throw ConfigError("pgd: tolerance must be >= 0");
  if (!(armijo > 0.0 && armijo < 1.0)) throw ConfigError("pgd: armijo must lie in (0, 1)");
  if (snap_weight && !(*snap_weight >= 0.0)) throw ConfigError("pgd: snap_weight must be >= 0");
}

AffineProjector::AffineProjector(const Eigen::MatrixXd& A, const Eigen::VectorXd& b)
    : A_(A), b_(b) {
  if (A.rows() != b.size() || A.rows() > A.cols()) {
    throw std::invalid_argument("AffineProjector: A must be wide with one b entry per row");
  }
  row_scale_ = A.rowwise().norm().cwiseInverse();
  if (!row_scale_.allFinite()) throw NumericError("AffineProjector: A has a zero row");
  const Eigen::MatrixXd scaled_t = (row_scale_.asDiagonal() * A).transpose();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(scaled_t);
  const Eigen::Index n = A.cols();
  const Eigen::Index r = A.rows();
  q_ = qr.householderQ() * Eigen::MatrixXd::Identity(n, r);
  r_ = qr.matrixQR().topLeftCorner(r, r).triangularView<Eigen::Upper>();
  const Eigen::VectorXd sv = Eigen::JacobiSVD<Eigen::MatrixXd>(r_).singularValues();
  const double ratio = sv.minCoeff() > 0.0 ? sv.maxCoeff() / sv.minCoeff()
                                           : std::numeric_limits<double>::infinity();
  condition_ = ratio * ratio;
  if (!(condition_ <= kMaxProjectionCondition)) {
    throw NumericError("AffineProjector: cond(A A^T) = " + std::to_string(condition_) +
                       " is too large; rescale or remove near-dependent constraints");
  }
}

Eigen::VectorXd AffineProjector::project(const Eigen::VectorXd& c) const {
  Eigen::VectorXd out = c;
  // Second pass is iterative refinement of the first.
  for (int pass = 0; pass < 2; ++pass) {
    const Eigen::VectorXd residual = row_scale_.cwiseProduct(A_ * out - b_);
    const Eigen::VectorXd y =
        r_.transpose().triangularView<Eigen::Lower>().solve(residual);
    out -= q_ * y;
  }
  return out;
}

Eigen::VectorXd AffineProjector::tangent(const Eigen::VectorXd& v) const {
  return v - q_ * (q_.transpose() * v);
}

double AffineProjector::residual(const Eigen::VectorXd& c) const {
  return (A_ * c - b_).cwiseAbs().maxCoeff();
}

Eigen::VectorXd project_affine(const Eigen::VectorXd& c, const Eigen::MatrixXd& A,
                               const Eigen::VectorXd& b) {
  return AffineProjector(A, b).project(c);
}

ObjectiveValue total_cost_and_grad(const Eigen::VectorXd& c, std::span<const double> durations,
                                   const Eigen::MatrixXd& H, const MlpModel& model,
                                   double snap_weight) {
  const Eigen::VectorXd x = featurize(c, durations);
  if (x.size() != model.input_dim()) {
    throw std::invalid_argument("total_cost_and_grad: model expects " +
                                std::to_string(model.input_dim()) + " features, got " +
                                std::to_string(x.size()));
  }
  const Eigen::VectorXd hc = H * c;
  const double raw = model.forward(x);
  const double slope = model.label_slope(raw);
  ObjectiveValue out;
  out.value = snap_weight * c.dot(hc) + model.to_label(raw);
  out.gradient = 2.0 * snap_weight * hc + slope * model.input_gradient(x).head(c.size());
  return out;
}

PlanResult plan_drag_aware(const WaypointSet& waypoints, const MlpModel& model,
                           const PgdConfig& cfg, const SplineSettings& spline_settings) {
  cfg.validate();
  PlanResult result;
  result.minsnap = plan_minsnap(waypoints, spline_settings);
  result.spline = result.minsnap;
  result.snap_weight = cfg.snap_weight.value_or(model.snap_weight);

  const auto& durations = result.minsnap.durations;
  const QpSystem qp = build_qp(waypoints, durations, spline_settings.order,
                               spline_settings.yaw_rate_weight);
  const AffineProjector projector(qp.A, qp.b);
  auto objective = [&](const Eigen::VectorXd& c) {
    return total_cost_and_grad(c, durations, qp.H, model, result.snap_weight);
  };

  Eigen::VectorXd c = result.minsnap.coefficients;
  ObjectiveValue f = objective(c);
  Eigen::VectorXd pg = projector.tangent(f.gradient);
  result.log.push_back({0, f.value, 0.0, projector.residual(c), pg.norm()});
  if (!std::isfinite(f.value) || !f.gradient.allFinite()) {
    result.warning = true;
    result.stop_reason = "non-finite objective at minsnap start";
    return result;
  }

  double best = f.value;
  double step = cfg.step_size;
  result.stop_reason = "max_iters";
  for (int it = 1; it <= cfg.max_iters; ++it) {
    if (pg.norm() < cfg.tolerance) {
      result.stop_reason = "stationary";
      break;
    }
    Eigen::VectorXd candidate;
    ObjectiveValue f_new;
    bool accepted = false;
    while (true) {
      candidate = projector.project(c - step * f.gradient);
      f_new = objective(candidate);
      const double decrease = f.gradient.dot(candidate - c);
      if (!cfg.backtracking ||
          (std::isfinite(f_new.value) && f_new.value <= f.value + cfg.armijo * decrease)) {
        accepted = std::isfinite(f_new.value) && f_new.gradient.allFinite();
        break;
      }
      step *= cfg.shrink;
      if (step < cfg.min_step) break;
    }
    if (!accepted) {
      result.stop_reason = "line search failed";
      break;
    }
    c = candidate;
    f = std::move(f_new);
    pg = projector.tangent(f.gradient);
    result.log.push_back({it, f.value, step, projector.residual(c), pg.norm()});
    if (f.value < best) {
      best = f.value;
      result.best_iteration = it;
      result.spline.coefficients = c;
    }
    if (cfg.backtracking) step *= cfg.step_growth;
  }
  return result;
}

void write_iteration_log(const PlanResult& result, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out.precision(17);
  out << "iteration,objective,step,residual,projected_gradient_norm\n";
  for (const auto& it : result.log) {
    out << it.iteration << "," << it.objective << "," << it.step << "," << it.residual << ","
        << it.projected_gradient_norm << "\n";
  }
}

}  // namespace dragplan
