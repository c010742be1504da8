#include "dragplan/spline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "dragplan/errors.hpp"

namespace dragplan {

using nlohmann::json;

namespace {

constexpr const char* kSplineSchema = "dragplan.spline/1";

// k! / (k - d)!
double falling_factorial(int k, int d) {
  double f = 1.0;
  for (int i = 0; i < d; ++i) f *= k - i;
  return f;
}

// Row vector r such that r . c is the d-th derivative of (segment, channel) at local time t.
void fill_derivative_row(Eigen::Ref<Eigen::RowVectorXd> row, const PolySpline& layout,
                         int segment, int channel, int derivative, double t, double sign) {
  double power_of_t = 1.0;
  for (int k = derivative; k <= layout.order; ++k) {
    row[layout.index(segment, channel, k)] += sign * falling_factorial(k, derivative) * power_of_t;
    power_of_t *= t;
  }
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << text;
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace

double polynomial_derivative(std::span<const double> coeffs, int derivative, double t) {
  const int n = static_cast<int>(coeffs.size()) - 1;
  double acc = 0.0;
  for (int k = n; k >= derivative; --k) {
    acc = acc * t + falling_factorial(k, derivative) * coeffs[k];
  }
  return acc;
}

double PolySpline::total_duration() const {
  return std::accumulate(durations.begin(), durations.end(), 0.0);
}

void PolySpline::validate() const {
  if (order < 1) throw std::invalid_argument("spline: order must be >= 1");
  if (durations.empty()) throw std::invalid_argument("spline: needs at least one segment");
  for (double d : durations) {
    if (!(d > 0.0) || !std::isfinite(d)) {
      throw std::invalid_argument("spline: durations must be positive and finite");
    }
  }
  if (coefficients.size() != size()) {
    throw std::invalid_argument("spline: expected " + std::to_string(size()) +
                                " coefficients, got " + std::to_string(coefficients.size()));
  }
}

PolySpline::Sample PolySpline::sample(double t) const {
  Sample out;
  const double total = total_duration();
  if (t < 0.0 || t > total) {
    out.clamped = true;
    t = std::clamp(t, 0.0, total);
  }
  int seg = 0;
  double local = t;
  while (seg + 1 < segments() && local >= durations[seg]) {
    local -= durations[seg];
    ++seg;
  }
  local = std::min(local, durations[seg]);

  auto channel = [&](int ch) {
    return std::span<const double>(coefficients.data() + index(seg, ch, 0), order + 1);
  };
  FlatState& f = out.flat;
  for (int axis = 0; axis < 3; ++axis) {
    const auto c = channel(axis);
    f.position[axis] = polynomial_derivative(c, 0, local);
    f.velocity[axis] = polynomial_derivative(c, 1, local);
    f.acceleration[axis] = polynomial_derivative(c, 2, local);
    f.jerk[axis] = polynomial_derivative(c, 3, local);
    f.snap[axis] = polynomial_derivative(c, 4, local);
  }
  f.yaw = polynomial_derivative(channel(kYaw), 0, local);
  f.yaw_rate = polynomial_derivative(channel(kYaw), 1, local);
  return out;
}

void WaypointSet::validate() const {
  if (keyframes.size() < 2) throw std::invalid_argument("waypoints: need at least 2 keyframes");
  for (const auto& k : keyframes) {
    if (!k.position.allFinite() || !std::isfinite(k.yaw)) {
      throw std::invalid_argument("waypoints: non-finite keyframe");
    }
  }
  if (times) {
    if (times->size() != keyframes.size()) {
      throw std::invalid_argument("waypoints: times must have one entry per keyframe");
    }
    for (std::size_t i = 1; i < times->size(); ++i) {
      if (!((*times)[i] > (*times)[i - 1])) {
        throw std::invalid_argument("waypoints: times must be strictly increasing");
      }
    }
  }
}

std::vector<double> allocate_times(const WaypointSet& waypoints, double avg_speed) {
  if (!(avg_speed > 0.0)) throw std::invalid_argument("allocate_times: avg_speed must be > 0");
  waypoints.validate();
  std::vector<double> durations;
  for (std::size_t i = 0; i + 1 < waypoints.keyframes.size(); ++i) {
    const double dist =
        (waypoints.keyframes[i + 1].position - waypoints.keyframes[i].position).norm();
    durations.push_back(std::max(dist / avg_speed, kMinSegmentDuration));
  }
  return durations;
}

std::vector<double> segment_durations(const WaypointSet& waypoints, double avg_speed) {
  if (!waypoints.times) return allocate_times(waypoints, avg_speed);
  waypoints.validate();
  std::vector<double> durations;
  const auto& t = *waypoints.times;
  for (std::size_t i = 0; i + 1 < t.size(); ++i) durations.push_back(t[i + 1] - t[i]);
  return durations;
}

Eigen::MatrixXd build_snap_cost(int order, std::span<const double> durations,
                                double yaw_rate_weight) {
  if (order < 4) throw std::invalid_argument("build_snap_cost: order must be >= 4");
  const int per = order + 1;
  const int m = static_cast<int>(durations.size());
  const int n = PolySpline::kChannels * m * per;
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(n, n);

  // Gram block of the d-th derivative over [0, T].
  auto block = [&](int d, double T) {
    Eigen::MatrixXd b = Eigen::MatrixXd::Zero(per, per);
    for (int k = d; k <= order; ++k) {
      for (int l = d; l <= order; ++l) {
        const int p = k + l - 2 * d + 1;
        b(k, l) = falling_factorial(k, d) * falling_factorial(l, d) * std::pow(T, p) / p;
      }
    }
    return b;
  };

  for (int s = 0; s < m; ++s) {
    const Eigen::MatrixXd snap = block(4, durations[s]);
    const Eigen::MatrixXd yaw = yaw_rate_weight * block(1, durations[s]);
    for (int ch = 0; ch < PolySpline::kChannels; ++ch) {
      const int offset = (s * PolySpline::kChannels + ch) * per;
      h.block(offset, offset, per, per) = ch == PolySpline::kYaw ? yaw : snap;
    }
  }
  return h;
}

LinearConstraints build_constraints(const WaypointSet& waypoints,
                                    std::span<const double> durations, int order) {
  waypoints.validate();
  const int m = static_cast<int>(durations.size());
  if (static_cast<int>(waypoints.keyframes.size()) != m + 1) {
    throw std::invalid_argument("build_constraints: need one more keyframe than segments");
  }
  PolySpline layout;
  layout.order = order;
  layout.durations.assign(durations.begin(), durations.end());
  const int n = layout.size();

  std::vector<Eigen::RowVectorXd> rows;
  std::vector<double> rhs;
  auto add = [&](auto&& fill, double value) {
    Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(n);
    fill(row);
    rows.push_back(std::move(row));
    rhs.push_back(value);
  };

  for (int ch = 0; ch < PolySpline::kChannels; ++ch) {
    const int max_derivative = ch == PolySpline::kYaw ? 1 : 3;
    auto value_at = [&](int k) {
      const auto& kf = waypoints.keyframes[k];
      return ch == PolySpline::kYaw ? kf.yaw : kf.position[ch];
    };
    auto at = [&](int seg, int d, double t, double sign = 1.0) {
      return [=, &layout](Eigen::Ref<Eigen::RowVectorXd> row) {
        fill_derivative_row(row, layout, seg, ch, d, t, sign);
      };
    };

    // Start at rest.
    add(at(0, 0, 0.0), value_at(0));
    for (int d = 1; d <= max_derivative; ++d) add(at(0, d, 0.0), 0.0);

    // Interior junctions: interpolate on both sides, continuity of derivatives.
    for (int j = 1; j < m; ++j) {
      const double t_end = durations[j - 1];
      add(at(j - 1, 0, t_end), value_at(j));
      add(at(j, 0, 0.0), value_at(j));
      for (int d = 1; d <= max_derivative; ++d) {
        add([&, j, d, t_end](Eigen::Ref<Eigen::RowVectorXd> row) {
              fill_derivative_row(row, layout, j - 1, ch, d, t_end, 1.0);
              fill_derivative_row(row, layout, j, ch, d, 0.0, -1.0);
            },
            0.0);
      }
    }

    // End at rest.
    const double t_last = durations[m - 1];
    add(at(m - 1, 0, t_last), value_at(m));
    for (int d = 1; d <= max_derivative; ++d) add(at(m - 1, d, t_last), 0.0);
  }

  LinearConstraints out;
  out.A.resize(static_cast<Eigen::Index>(rows.size()), n);
  out.b.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.A.row(static_cast<Eigen::Index>(i)) = rows[i];
    out.b[static_cast<Eigen::Index>(i)] = rhs[i];
  }

  // The row set above is minimal; a rank drop means the layout logic is broken.
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(out.A.transpose());
  if (qr.rank() != out.A.rows()) {
    throw NumericError("build_constraints: internal error, constraint rows are dependent");
  }
  return out;
}

QpSystem build_qp(const WaypointSet& waypoints, std::span<const double> durations, int order,
                  double yaw_rate_weight) {
  auto [A, b] = build_constraints(waypoints, durations, order);
  return {build_snap_cost(order, durations, yaw_rate_weight), std::move(A), std::move(b)};
}

Eigen::VectorXd solve_minsnap(const Eigen::MatrixXd& H, const Eigen::MatrixXd& A,
                              const Eigen::VectorXd& b) {
  const Eigen::Index n = H.rows();
  const Eigen::Index r = A.rows();
  if (H.cols() != n || A.cols() != n || b.size() != r) {
    throw std::invalid_argument("solve_minsnap: inconsistent dimensions");
  }

  auto attempt = [&](double regularization) -> std::optional<Eigen::VectorXd> {
    Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(n + r, n + r);
    kkt.topLeftCorner(n, n) = 2.0 * H;
    kkt.topLeftCorner(n, n).diagonal().array() += 2.0 * regularization;
    kkt.topRightCorner(n, r) = A.transpose();
    kkt.bottomLeftCorner(r, n) = A;
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + r);
    rhs.tail(r) = b;

    // Symmetric equilibration keeps the pivoting meaningful across the wide
    // range of magnitudes produced by high monomial powers.
    Eigen::VectorXd scale(n + r);
    for (Eigen::Index i = 0; i < n + r; ++i) {
      const double row_max = kkt.row(i).cwiseAbs().maxCoeff();
      if (row_max == 0.0) return std::nullopt;
      scale[i] = 1.0 / std::sqrt(row_max);
    }
    const Eigen::MatrixXd scaled = scale.asDiagonal() * kkt * scale.asDiagonal();
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(scaled);
    if (!(lu.rcond() > 1e-14)) return std::nullopt;
    const Eigen::VectorXd srhs = scale.asDiagonal() * rhs;
    Eigen::VectorXd y = lu.solve(srhs);
    y += lu.solve(srhs - scaled * y);
    Eigen::VectorXd c = (scale.asDiagonal() * y).head(n);
    if (!c.allFinite()) return std::nullopt;
    return c;
  };

  if (auto c = attempt(0.0)) return *c;
  if (auto c = attempt(kKktRegularization)) return *c;
  throw SingularSystemError("solve_minsnap: KKT system is singular");
}

PolySpline plan_minsnap(const WaypointSet& waypoints, const SplineSettings& settings) {
  PolySpline spline;
  spline.order = settings.order;
  spline.durations = segment_durations(waypoints, settings.avg_speed);
  const QpSystem qp =
      build_qp(waypoints, spline.durations, settings.order, settings.yaw_rate_weight);
  spline.coefficients = solve_minsnap(qp.H, qp.A, qp.b);
  return spline;
}

std::string spline_to_json(const PolySpline& spline) {
  json j;
  j["schema"] = kSplineSchema;
  j["order"] = spline.order;
  j["segments"] = spline.segments();
  j["durations"] = spline.durations;
  j["coefficients"] = std::vector<double>(spline.coefficients.data(),
                                          spline.coefficients.data() + spline.coefficients.size());
  return j.dump(2);
}

PolySpline spline_from_json(const std::string& text) {
  PolySpline s;
  try {
    const json j = json::parse(text);
    if (j.contains("schema") && j.at("schema") != kSplineSchema) {
      throw ConfigError("spline: unsupported schema " + j.at("schema").dump());
    }
    s.order = j.at("order").get<int>();
    s.durations = j.at("durations").get<std::vector<double>>();
    const auto c = j.at("coefficients").get<std::vector<double>>();
    s.coefficients = Eigen::Map<const Eigen::VectorXd>(c.data(), static_cast<Eigen::Index>(c.size()));
    if (j.at("segments").get<int>() != s.segments()) {
      throw ConfigError("spline: 'segments' disagrees with durations");
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("spline: ") + e.what());
  }
  try {
    s.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return s;
}

void save_spline(const PolySpline& spline, const std::string& path) {
  write_file(path, spline_to_json(spline) + "\n");
}

PolySpline load_spline(const std::string& path) { return spline_from_json(read_file(path)); }

WaypointSet waypoints_from_json(const std::string& text) {
  WaypointSet w;
  try {
    const json j = json::parse(text);
    for (const auto& k : j.at("keyframes")) {
      const auto v = k.get<std::vector<double>>();
      if (v.size() != 4) throw ConfigError("waypoints: keyframes are [x, y, z, yaw]");
      w.keyframes.push_back({Eigen::Vector3d(v[0], v[1], v[2]), v[3]});
    }
    if (j.contains("times") && !j.at("times").is_null()) {
      w.times = j.at("times").get<std::vector<double>>();
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("waypoints: ") + e.what());
  }
  try {
    w.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return w;
}

std::string waypoints_to_json(const WaypointSet& waypoints) {
  json j;
  j["keyframes"] = json::array();
  for (const auto& k : waypoints.keyframes) {
    j["keyframes"].push_back({k.position.x(), k.position.y(), k.position.z(), k.yaw});
  }
  if (waypoints.times) j["times"] = *waypoints.times;
  return j.dump(2);
}

WaypointSet load_waypoints(const std::string& path) { return waypoints_from_json(read_file(path)); }

}  // namespace dragplan
