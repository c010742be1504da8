#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <optional>
#include <string>
#include <vector>

#include "dragplan/rollout.hpp"

namespace dragplan {

enum class LabelTransform { kIdentity, kLog1p };

LabelTransform parse_label_transform(const std::string& name);
std::string to_string(LabelTransform t);

/// Label -> regression target.
double transform_label(LabelTransform t, double label);
/// Regression output -> label.
double inverse_transform(LabelTransform t, double raw);
/// d(label)/d(raw) at `raw`.
double inverse_transform_slope(LabelTransform t, double raw);

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;
};

/// ReLU perceptron predicting the tracking penalty from spline features.
/// Inputs are standardized internally; the output lives in the transformed
/// label space (see LabelTransform).
struct MlpModel {
  static constexpr const char* kVersion = "dragplan.mlp/1";

  std::vector<int> layer_sizes;
  std::vector<DenseLayer> layers;
  Eigen::VectorXd input_mean;
  Eigen::VectorXd input_std;
  LabelTransform label_transform = LabelTransform::kLog1p;
  double label_scale = 1.0;  // labels are divided by this before the transform
  double snap_weight = 1.0;  // planner weight on c^T H c, fitted at training time
  double rho_bar = 0.0;
  std::string version = kVersion;

  /// He-uniform weights, zero biases, identity normalization.
  static MlpModel initialize(std::vector<int> layer_sizes, std::uint64_t seed);

  int input_dim() const { return layer_sizes.front(); }
  void validate() const;

  /// Raw (transformed-space) output.
  double forward(const Eigen::VectorXd& input) const;
  /// Output mapped back to label space.
  double predict(const Eigen::VectorXd& input) const;
  /// Raw output -> label, and d(label)/d(raw).
  double to_label(double raw) const;
  double label_slope(double raw) const;
  /// d forward / d input.
  Eigen::VectorXd input_gradient(const Eigen::VectorXd& input) const;

  Eigen::VectorXd normalize(const Eigen::VectorXd& input) const;
  std::size_t parameter_count() const;
};

inline const std::vector<int> kHiddenLayers{100, 100, 20};

/// Model input: spline coefficients followed by segment durations.
Eigen::VectorXd featurize(const Eigen::VectorXd& coefficients, std::span<const double> durations);

struct MlpGradients {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;
};

struct BackwardResult {
  double loss = 0.0;  // mean squared error
  MlpGradients params;
  Eigen::MatrixXd inputs;  // d loss / d input, one column per sample
};

/// Mean squared error of a batch (one sample per column) and its exact
/// gradients. ReLU'(0) is taken as 0. Throws NumericError on a non-finite loss.
BackwardResult backward(const MlpModel& model, const Eigen::MatrixXd& inputs,
                        const Eigen::VectorXd& targets);

struct TrainConfig {
  std::size_t batch_size = 256;
  double learning_rate = 1e-3;
  double momentum = 0.9;
  int epochs = 1000;
  double split = 0.8;
  std::uint64_t seed = 0;
  LabelTransform label_transform = LabelTransform::kLog1p;
  std::vector<int> hidden = kHiddenLayers;
  std::optional<double> label_scale;  // unset: median training label
  double yaw_rate_weight = 1.0;  // used to fit the planner's snap weight

  void validate() const;
};

struct TrainResult {
  MlpModel model;  // parameters of the best validation epoch
  std::vector<double> train_loss;
  std::vector<double> validation_loss;
  int best_epoch = -1;
};

/// Supervised regression on (features, labels): seeded 80/20 split, z-score
/// statistics from the training split, minibatch SGD with momentum.
TrainResult train(const Eigen::MatrixXd& features, const Eigen::VectorXd& labels,
                  const TrainConfig& cfg);
TrainResult train(const std::vector<DatasetRecord>& records, const TrainConfig& cfg);
TrainResult train(const std::string& dataset_path, const TrainConfig& cfg);

void write_loss_csv(const TrainResult& result, const std::string& path);

std::string model_to_json(const MlpModel& model);
MlpModel model_from_json(const std::string& text);
void save_model(const MlpModel& model, const std::string& path);
MlpModel load_model(const std::string& path);

}  // namespace dragplan
