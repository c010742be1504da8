#include "dragplan/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "dragplan/errors.hpp"
#include "dragplan/random.hpp"

namespace dragplan {

using nlohmann::json;

LabelTransform parse_label_transform(const std::string& name) {
  if (name == "identity") return LabelTransform::kIdentity;
  if (name == "log1p") return LabelTransform::kLog1p;
  throw ConfigError("unknown label transform '" + name + "' (identity|log1p)");
}

std::string to_string(LabelTransform t) {
  return t == LabelTransform::kIdentity ? "identity" : "log1p";
}

double transform_label(LabelTransform t, double label) {
  return t == LabelTransform::kLog1p ? std::log1p(label) : label;
}

double inverse_transform(LabelTransform t, double raw) {
  return t == LabelTransform::kLog1p ? std::expm1(raw) : raw;
}

double inverse_transform_slope(LabelTransform t, double raw) {
  return t == LabelTransform::kLog1p ? std::exp(raw) : 1.0;
}

MlpModel MlpModel::initialize(std::vector<int> layer_sizes, std::uint64_t seed) {
  if (layer_sizes.size() < 2 || layer_sizes.back() != 1) {
    throw ConfigError("model: layer sizes must end in a single output");
  }
  MlpModel m;
  m.layer_sizes = std::move(layer_sizes);
  Rng rng(stream_seed(seed, 0, 0x1417));
  for (std::size_t l = 0; l + 1 < m.layer_sizes.size(); ++l) {
    const int in = m.layer_sizes[l];
    const int out = m.layer_sizes[l + 1];
    const double bound = std::sqrt(6.0 / in);
    DenseLayer layer{Eigen::MatrixXd(out, in), Eigen::VectorXd::Zero(out)};
    for (int i = 0; i < out; ++i) {
      for (int j = 0; j < in; ++j) layer.weight(i, j) = rng.uniform(-bound, bound);
    }
    m.layers.push_back(std::move(layer));
  }
  m.input_mean = Eigen::VectorXd::Zero(m.layer_sizes.front());
  m.input_std = Eigen::VectorXd::Ones(m.layer_sizes.front());
  return m;
}

void MlpModel::validate() const {
  if (layer_sizes.size() < 2 || layers.size() + 1 != layer_sizes.size()) {
    throw ConfigError("model: layer count does not match layer sizes");
  }
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& layer = layers[l];
    if (layer.weight.cols() != layer_sizes[l] || layer.weight.rows() != layer_sizes[l + 1] ||
        layer.bias.size() != layer_sizes[l + 1]) {
      throw ConfigError("model: layer " + std::to_string(l) + " has wrong shape");
    }
    if (!layer.weight.allFinite() || !layer.bias.allFinite()) {
      throw ConfigError("model: non-finite parameters");
    }
  }
  if (layer_sizes.back() != 1) throw ConfigError("model: output must be scalar");
  if (input_mean.size() != input_dim() || input_std.size() != input_dim()) {
    throw ConfigError("model: normalization statistics have wrong size");
  }
  if (!(input_std.array() > 0.0).all() || !input_mean.allFinite() || !input_std.allFinite()) {
    throw ConfigError("model: input_std must be positive and finite");
  }
  if (!std::isfinite(snap_weight) || snap_weight < 0.0) {
    throw ConfigError("model: snap_weight must be finite and >= 0");
  }
  if (!std::isfinite(label_scale) || label_scale <= 0.0) {
    throw ConfigError("model: label_scale must be finite and > 0");
  }
}

Eigen::VectorXd MlpModel::normalize(const Eigen::VectorXd& input) const {
  if (input.size() != input_dim()) {
    throw std::invalid_argument("model: expected input of size " + std::to_string(input_dim()) +
                                ", got " + std::to_string(input.size()));
  }
  return (input - input_mean).cwiseQuotient(input_std);
}

double MlpModel::forward(const Eigen::VectorXd& input) const {
  Eigen::VectorXd a = normalize(input);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    Eigen::VectorXd z = layers[l].weight * a + layers[l].bias;
    a = l + 1 < layers.size() ? Eigen::VectorXd(z.cwiseMax(0.0)) : z;
  }
  return a[0];
}

double MlpModel::predict(const Eigen::VectorXd& input) const {
  return to_label(forward(input));
}

double MlpModel::to_label(double raw) const {
  return label_scale * inverse_transform(label_transform, raw);
}

double MlpModel::label_slope(double raw) const {
  return label_scale * inverse_transform_slope(label_transform, raw);
}

Eigen::VectorXd MlpModel::input_gradient(const Eigen::VectorXd& input) const {
  std::vector<Eigen::VectorXd> pre;
  Eigen::VectorXd a = normalize(input);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    pre.push_back(layers[l].weight * a + layers[l].bias);
    a = pre.back().cwiseMax(0.0);
  }
  Eigen::VectorXd delta = Eigen::VectorXd::Ones(1);
  for (std::size_t l = layers.size(); l-- > 0;) {
    if (l + 1 < layers.size()) delta = delta.cwiseProduct((pre[l].array() > 0.0).cast<double>().matrix());
    delta = layers[l].weight.transpose() * delta;
  }
  return delta.cwiseQuotient(input_std);
}

std::size_t MlpModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

Eigen::VectorXd featurize(const Eigen::VectorXd& coefficients, std::span<const double> durations) {
  Eigen::VectorXd x(coefficients.size() + static_cast<Eigen::Index>(durations.size()));
  x.head(coefficients.size()) = coefficients;
  for (std::size_t i = 0; i < durations.size(); ++i) {
    x[coefficients.size() + static_cast<Eigen::Index>(i)] = durations[i];
  }
  return x;
}

BackwardResult backward(const MlpModel& model, const Eigen::MatrixXd& inputs,
                        const Eigen::VectorXd& targets) {
  const Eigen::Index batch = inputs.cols();
  if (inputs.rows() != model.input_dim() || targets.size() != batch || batch == 0) {
    throw std::invalid_argument("backward: inconsistent batch shapes");
  }
  const std::size_t depth = model.layers.size();

  // activations[0] is the normalized input; pre[l] feeds activations[l + 1].
  std::vector<Eigen::MatrixXd> activations{
      (inputs.colwise() - model.input_mean).array().colwise() / model.input_std.array()};
  std::vector<Eigen::MatrixXd> pre;
  for (std::size_t l = 0; l < depth; ++l) {
    Eigen::MatrixXd z = model.layers[l].weight * activations.back();
    z.colwise() += model.layers[l].bias;
    pre.push_back(z);
    activations.push_back(l + 1 < depth ? Eigen::MatrixXd(z.cwiseMax(0.0)) : z);
  }

  const Eigen::RowVectorXd residual = activations.back().row(0) - targets.transpose();
  BackwardResult out;
  out.loss = residual.squaredNorm() / static_cast<double>(batch);
  if (!std::isfinite(out.loss)) {
    throw NumericError("backward: non-finite loss (max |residual| = " +
                       std::to_string(residual.cwiseAbs().maxCoeff()) + ", batch " +
                       std::to_string(batch) + ")");
  }

  out.params.weights.resize(depth);
  out.params.biases.resize(depth);
  Eigen::MatrixXd delta = (2.0 / static_cast<double>(batch)) * residual;
  for (std::size_t l = depth; l-- > 0;) {
    if (l + 1 < depth) delta.array() *= (pre[l].array() > 0.0).cast<double>();
    out.params.weights[l] = delta * activations[l].transpose();
    out.params.biases[l] = delta.rowwise().sum();
    delta = model.layers[l].weight.transpose() * delta;
  }
  out.inputs = delta.array().colwise() / model.input_std.array();
  return out;
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (!(split > 0.0 && split < 1.0)) throw ConfigError("train: split must lie in (0, 1)");
  if (!(learning_rate > 0.0)) throw ConfigError("train: learning_rate must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("train: momentum must lie in [0, 1)");
  if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
  for (int h : hidden) {
    if (h < 1) throw ConfigError("train: hidden layer sizes must be >= 1");
  }
  if (label_scale && !(std::isfinite(*label_scale) && *label_scale > 0.0)) {
    throw ConfigError("train: label_scale must be > 0");
  }
}

namespace {

void shuffle(std::vector<Eigen::Index>& idx, Rng& rng) {
  for (std::size_t i = idx.size(); i > 1; --i) {
    std::swap(idx[i - 1], idx[rng.below(i)]);
  }
}

double mean_squared_error(const MlpModel& model, const Eigen::MatrixXd& x,
                          const Eigen::VectorXd& y) {
  if (x.cols() == 0) return 0.0;
  Eigen::MatrixXd a = (x.colwise() - model.input_mean).array().colwise() / model.input_std.array();
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    Eigen::MatrixXd z = model.layers[l].weight * a;
    z.colwise() += model.layers[l].bias;
    a = l + 1 < model.layers.size() ? Eigen::MatrixXd(z.cwiseMax(0.0)) : z;
  }
  return (a.row(0).transpose() - y).squaredNorm() / static_cast<double>(x.cols());
}

Eigen::MatrixXd gather(const Eigen::MatrixXd& x, std::span<const Eigen::Index> cols) {
  Eigen::MatrixXd out(x.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t i = 0; i < cols.size(); ++i) out.col(static_cast<Eigen::Index>(i)) = x.col(cols[i]);
  return out;
}

Eigen::VectorXd gather(const Eigen::VectorXd& y, std::span<const Eigen::Index> idx) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) out[static_cast<Eigen::Index>(i)] = y[idx[i]];
  return out;
}

}  // namespace

TrainResult train(const Eigen::MatrixXd& features, const Eigen::VectorXd& labels,
                  const TrainConfig& cfg) {
  cfg.validate();
  const Eigen::Index n = features.cols();
  if (labels.size() != n) throw std::invalid_argument("train: features/labels size mismatch");
  if (n < 2) throw ConfigError("train: need at least 2 samples");

  Rng split_rng(stream_seed(cfg.seed, 0, 0x5b11));
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  shuffle(order, split_rng);
  const auto n_train = std::clamp<Eigen::Index>(
      static_cast<Eigen::Index>(std::llround(cfg.split * static_cast<double>(n))), 1, n - 1);
  const std::span<const Eigen::Index> all(order);
  const Eigen::MatrixXd x_train = gather(features, all.first(static_cast<std::size_t>(n_train)));
  const Eigen::MatrixXd x_val = gather(features, all.subspan(static_cast<std::size_t>(n_train)));
  double scale = 1.0;
  if (cfg.label_scale) {
    scale = *cfg.label_scale;
  } else {
    const double median = quantile(std::vector<double>(labels.begin(), labels.end()), 0.5);
    if (median > 0.0) scale = median;
  }
  Eigen::VectorXd y_all = labels.unaryExpr(
      [&](double v) { return transform_label(cfg.label_transform, v / scale); });
  const Eigen::VectorXd y_train = gather(y_all, all.first(static_cast<std::size_t>(n_train)));
  const Eigen::VectorXd y_val = gather(y_all, all.subspan(static_cast<std::size_t>(n_train)));

  std::vector<int> sizes{static_cast<int>(features.rows())};
  sizes.insert(sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
  sizes.push_back(1);
  MlpModel model = MlpModel::initialize(sizes, cfg.seed);
  model.label_transform = cfg.label_transform;
  model.label_scale = scale;
  model.input_mean = x_train.rowwise().mean();
  model.input_std =
      ((x_train.colwise() - model.input_mean).array().square().rowwise().mean().sqrt()).matrix();
  for (Eigen::Index i = 0; i < model.input_std.size(); ++i) {
    if (!(model.input_std[i] > 1e-12)) model.input_std[i] = 1.0;
  }

  MlpGradients velocity;
  for (const auto& layer : model.layers) {
    velocity.weights.push_back(Eigen::MatrixXd::Zero(layer.weight.rows(), layer.weight.cols()));
    velocity.biases.push_back(Eigen::VectorXd::Zero(layer.bias.size()));
  }

  TrainResult result;
  double best = std::numeric_limits<double>::infinity();
  std::vector<Eigen::Index> batch_order(static_cast<std::size_t>(n_train));
  std::iota(batch_order.begin(), batch_order.end(), Eigen::Index{0});
  const std::span<const Eigen::Index> batches(batch_order);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng epoch_rng(stream_seed(cfg.seed, static_cast<std::uint64_t>(epoch), 0xe90c));
    shuffle(batch_order, epoch_rng);
    double loss_sum = 0.0;
    for (std::size_t begin = 0; begin < batch_order.size(); begin += cfg.batch_size) {
      const auto idx = batches.subspan(begin, std::min(cfg.batch_size, batch_order.size() - begin));
      const BackwardResult g = backward(model, gather(x_train, idx), gather(y_train, idx));
      loss_sum += g.loss * static_cast<double>(idx.size());
      for (std::size_t l = 0; l < model.layers.size(); ++l) {
        velocity.weights[l] = cfg.momentum * velocity.weights[l] + g.params.weights[l];
        velocity.biases[l] = cfg.momentum * velocity.biases[l] + g.params.biases[l];
        model.layers[l].weight -= cfg.learning_rate * velocity.weights[l];
        model.layers[l].bias -= cfg.learning_rate * velocity.biases[l];
      }
    }
    result.train_loss.push_back(loss_sum / static_cast<double>(n_train));
    const double val = mean_squared_error(model, x_val, y_val);
    result.validation_loss.push_back(val);
    if (val < best || result.best_epoch < 0) {
      best = val;
      result.best_epoch = epoch;
      result.model = model;
    }
  }
  return result;
}

TrainResult train(const std::vector<DatasetRecord>& records, const TrainConfig& cfg) {
  if (records.size() < 100) {
    throw ConfigError("train: dataset has " + std::to_string(records.size()) +
                      " records, need at least 100");
  }
  const Eigen::Index dim = records.front().coefficients.size() +
                           static_cast<Eigen::Index>(records.front().durations.size());
  Eigen::MatrixXd x(dim, static_cast<Eigen::Index>(records.size()));
  Eigen::VectorXd y(static_cast<Eigen::Index>(records.size()));
  std::vector<double> snap, label;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    const Eigen::VectorXd f = featurize(r.coefficients, r.durations);
    if (f.size() != dim) throw ConfigError("train: records have inconsistent sizes");
    x.col(static_cast<Eigen::Index>(i)) = f;
    y[static_cast<Eigen::Index>(i)] = r.label;

    const int per = static_cast<int>(r.coefficients.size() /
                                     (PolySpline::kChannels * static_cast<Eigen::Index>(r.durations.size())));
    const Eigen::MatrixXd h = build_snap_cost(per - 1, r.durations, cfg.yaw_rate_weight);
    snap.push_back(r.coefficients.dot(h * r.coefficients));
    label.push_back(r.label);
  }
  TrainResult result = train(x, y, cfg);
  // Balance c^T H c against the learned penalty at their typical magnitudes.
  const double snap_median = quantile(snap, 0.5);
  result.model.snap_weight = snap_median > 0.0 ? quantile(label, 0.5) / snap_median : 1.0;
  return result;
}

TrainResult train(const std::string& dataset_path, const TrainConfig& cfg) {
  TrainResult result = train(load_dataset(dataset_path), cfg);
  std::ifstream in(dataset_path);
  std::string header;
  std::getline(in, header);
  result.model.rho_bar = nlohmann::json::parse(header).value("rho_bar", 0.0);
  return result;
}

void write_loss_csv(const TrainResult& result, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out.precision(17);
  out << "epoch,train_mse,validation_mse\n";
  for (std::size_t e = 0; e < result.train_loss.size(); ++e) {
    out << e << "," << result.train_loss[e] << "," << result.validation_loss[e] << "\n";
  }
}

std::string model_to_json(const MlpModel& model) {
  json j;
  j["version"] = model.version;
  j["layer_sizes"] = model.layer_sizes;
  j["label_transform"] = to_string(model.label_transform);
  j["label_scale"] = model.label_scale;
  j["snap_weight"] = model.snap_weight;
  j["rho_bar"] = model.rho_bar;
  auto vec = [](const Eigen::VectorXd& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
  };
  j["input_mean"] = vec(model.input_mean);
  j["input_std"] = vec(model.input_std);
  j["layers"] = json::array();
  for (const auto& layer : model.layers) {
    // Row-major weights.
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> w = layer.weight;
    j["layers"].push_back({{"weight", std::vector<double>(w.data(), w.data() + w.size())},
                           {"bias", vec(layer.bias)}});
  }
  return j.dump();
}

MlpModel model_from_json(const std::string& text) {
  MlpModel m;
  try {
    const json j = json::parse(text);
    m.version = j.at("version").get<std::string>();
    if (m.version != MlpModel::kVersion) {
      throw ConfigError("model: unsupported checkpoint version '" + m.version + "'");
    }
    m.layer_sizes = j.at("layer_sizes").get<std::vector<int>>();
    m.label_transform = parse_label_transform(j.at("label_transform").get<std::string>());
    m.label_scale = j.at("label_scale").get<double>();
    m.snap_weight = j.at("snap_weight").get<double>();
    m.rho_bar = j.at("rho_bar").get<double>();
    auto vec = [](const json& a) {
      const auto v = a.get<std::vector<double>>();
      return Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
    };
    m.input_mean = vec(j.at("input_mean"));
    m.input_std = vec(j.at("input_std"));
    const auto& layers = j.at("layers");
    if (layers.size() + 1 != m.layer_sizes.size()) {
      throw ConfigError("model: layer count does not match layer sizes");
    }
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const auto w = layers[l].at("weight").get<std::vector<double>>();
      const int rows = m.layer_sizes[l + 1];
      const int cols = m.layer_sizes[l];
      if (static_cast<int>(w.size()) != rows * cols) {
        throw ConfigError("model: layer " + std::to_string(l) + " weight has wrong size");
      }
      DenseLayer layer;
      layer.weight = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                                   Eigen::RowMajor>>(w.data(), rows, cols);
      layer.bias = vec(layers[l].at("bias"));
      m.layers.push_back(std::move(layer));
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("model: ") + e.what());
  }
  m.validate();
  return m;
}

void save_model(const MlpModel& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << model_to_json(model) << "\n";
  if (!out) throw IoError("write failed: " + path);
}

MlpModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open checkpoint " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return model_from_json(ss.str());
}

}  // namespace dragplan
