#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "dragplan/model.hpp"
#include "dragplan/planner.hpp"
#include "dragplan/rollout.hpp"
#include "oracles.hpp"

namespace gradcheck {

inline constexpr double kStep = 1e-5;

/// Production-shaped network with random biases and the input statistics of
/// a handful of minsnap splines, so features land in a realistic range.
inline dragplan::MlpModel realistic_model(std::uint64_t seed) {
  std::vector<int> sizes{99};
  sizes.insert(sizes.end(), dragplan::kHiddenLayers.begin(), dragplan::kHiddenLayers.end());
  sizes.push_back(1);
  dragplan::MlpModel m = dragplan::MlpModel::initialize(sizes, seed);
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> n(0.0, 0.1);
  for (auto& layer : m.layers) layer.bias = Eigen::VectorXd::NullaryExpr(layer.bias.size(), [&] { return n(gen); });

  Eigen::MatrixXd x(99, 32);
  for (int i = 0; i < 32; ++i) {
    const dragplan::PolySpline s = dragplan::plan_minsnap(dragplan::sample_waypoints(1000 + i), {});
    x.col(i) = dragplan::featurize(s.coefficients, s.durations);
  }
  m.input_mean = x.rowwise().mean();
  m.input_std = (x.colwise() - m.input_mean).array().square().rowwise().mean().sqrt();
  for (Eigen::Index i = 0; i < m.input_std.size(); ++i)
    if (!(m.input_std[i] > 1e-12)) m.input_std[i] = 1.0;
  m.label_scale = 0.01;
  return m;
}

/// Batch loss gradients against central differences over every weight and bias.
inline double parameter_error(const dragplan::MlpModel& model, const Eigen::MatrixXd& x,
                              const Eigen::VectorXd& y) {
  const dragplan::BackwardResult exact = dragplan::backward(model, x, y);
  std::vector<double> analytic, numeric;
  dragplan::MlpModel probe = model;
  // Forward passes only, so the oracle shares no code with backward.
  auto loss = [&] {
    double sum = 0.0;
    for (Eigen::Index j = 0; j < x.cols(); ++j) sum += std::pow(probe.forward(x.col(j)) - y[j], 2);
    return sum / static_cast<double>(x.cols());
  };
  auto visit = [&](double& p, double g) {
    const double keep = p;
    p = keep + kStep;
    const double up = loss();
    p = keep - kStep;
    const double down = loss();
    p = keep;
    analytic.push_back(g);
    numeric.push_back((up - down) / (2 * kStep));
  };
  for (std::size_t l = 0; l < probe.layers.size(); ++l) {
    auto& w = probe.layers[l].weight;
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      for (Eigen::Index j = 0; j < w.cols(); ++j) visit(w(i, j), exact.params.weights[l](i, j));
    auto& b = probe.layers[l].bias;
    for (Eigen::Index i = 0; i < b.size(); ++i) visit(b[i], exact.params.biases[l][i]);
  }
  return oracle::max_relative_error(Eigen::Map<Eigen::VectorXd>(analytic.data(), analytic.size()),
                                    Eigen::Map<Eigen::VectorXd>(numeric.data(), numeric.size()));
}

/// Standardized-coordinate gradient by central differences: step h * std_i
/// along input i, result multiplied by std_i.
inline Eigen::VectorXd scaled_central_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                                               const Eigen::VectorXd& x, const Eigen::VectorXd& std_dev) {
  Eigen::VectorXd g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double h = kStep * std_dev[i];
    Eigen::VectorXd up = x, down = x;
    up[i] += h;
    down[i] -= h;
    g[i] = (f(up) - f(down)) / (2 * kStep);
  }
  return g;
}

/// d loss / d input from backward, and d forward / d input, against central
/// differences, compared in standardized coordinates.
inline double input_error(const dragplan::MlpModel& model, const Eigen::VectorXd& x, double target) {
  const Eigen::VectorXd y = Eigen::VectorXd::Constant(1, target);
  const Eigen::VectorXd& sd = model.input_std;
  const Eigen::VectorXd loss_grad = dragplan::backward(model, x, y).inputs.col(0).cwiseProduct(sd);
  const Eigen::VectorXd loss_fd = scaled_central_gradient(
      [&](const Eigen::VectorXd& v) { return dragplan::backward(model, v, y).loss; }, x, sd);
  const Eigen::VectorXd out_fd =
      scaled_central_gradient([&](const Eigen::VectorXd& v) { return model.forward(v); }, x, sd);
  return std::max(oracle::max_relative_error(loss_grad, loss_fd),
                  oracle::max_relative_error(model.input_gradient(x).cwiseProduct(sd), out_fd));
}

/// The planner objective lambda c^T H c + g(c) against central differences
/// in c, at a random point near the minsnap solution of sampled waypoints.
inline double objective_error(const dragplan::MlpModel& model, std::uint64_t seed, double snap_weight) {
  const dragplan::PolySpline s = dragplan::plan_minsnap(dragplan::sample_waypoints(seed), {});
  const Eigen::MatrixXd H = dragplan::build_snap_cost(s.order, s.durations, 1.0);
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> n(0.0, 0.05);
  Eigen::VectorXd c = s.coefficients;
  for (Eigen::Index i = 0; i < c.size(); ++i) c[i] += n(gen) * model.input_std[i];

  const Eigen::VectorXd sd = model.input_std.head(c.size());
  const dragplan::ObjectiveValue exact = dragplan::total_cost_and_grad(c, s.durations, H, model, snap_weight);
  const Eigen::VectorXd numeric = scaled_central_gradient(
      [&](const Eigen::VectorXd& v) { return dragplan::total_cost_and_grad(v, s.durations, H, model, snap_weight).value; },
      c, sd);
  return oracle::max_relative_error(exact.gradient.cwiseProduct(sd), numeric);
}

}  // namespace gradcheck
