#include "dragplan/rollout.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "dragplan/errors.hpp"
#include "dragplan/parallel.hpp"
#include "dragplan/planner.hpp"
#include "dragplan/random.hpp"

namespace dragplan {

using nlohmann::json;

void TrackingCostConfig::validate() const {
  if (!(rho_bar >= 0.0)) throw ConfigError("cost: rho_bar must be >= 0");
  if (!(position_weight >= 0.0 && velocity_weight >= 0.0)) {
    throw ConfigError("cost: error weights must be >= 0");
  }
  if (!(dt > 0.0 && dt <= kMaxStep)) throw ConfigError("cost: dt must lie in (0, 0.05]");
  if (!(cost_cap > 0.0)) throw ConfigError("cost: cost_cap must be > 0");
  if (!(crash_distance > 0.0)) throw ConfigError("cost: crash_distance must be > 0");
}

int horizon_steps(double total_duration, double dt) {
  return static_cast<int>(std::floor(total_duration / dt + 1e-9));
}

bool rollout(const PolySpline& spline, double dt, double crash_distance, const Se3Gains& gains,
             const VehicleParams& params, const std::function<void(const RolloutSample&)>& visit) {
  spline.validate();
  const int steps = horizon_steps(spline.total_duration(), dt);
  const FlatState start = spline.evaluate(0.0);
  QuadState state = QuadState::hover(params, start.position, start.yaw);

  for (int k = 0; k <= steps; ++k) {
    RolloutSample sample;
    sample.time = k * dt;
    sample.reference = spline.evaluate(sample.time);
    sample.state = state;
    if (!((state.position - sample.reference.position).norm() <= crash_distance)) return true;
    try {
      sample.command = se3_control(state, sample.reference, gains, params);
      if (k == steps) {
        const RotorCommand cmd = allocate_rotors(sample.command, params);
        sample.applied = rotor_wrench(cmd.speeds, params);
        sample.saturated = cmd.saturated;
      } else {
        const StepResult next = advance(state, sample.command, dt, params);
        sample.applied = next.applied;
        sample.saturated = next.saturated;
        state = next.state;
      }
    } catch (const SingularThrustError&) {
      return true;
    } catch (const DivergenceError&) {
      return true;
    }
    visit(sample);
  }
  return false;
}

TrackingResult tracking_cost(const PolySpline& spline, const TrackingCostConfig& cfg,
                             const Se3Gains& gains, const VehicleParams& params) {
  cfg.validate();
  const int steps = horizon_steps(spline.total_duration(), cfg.dt);
  TrackingResult result;
  int k = 0;
  result.crashed = rollout(spline, cfg.dt, cfg.crash_distance, gains, params,
                           [&](const RolloutSample& s) {
    const double e_p = (s.state.position - s.reference.position).squaredNorm();
    const double e_v = (s.state.velocity - s.reference.velocity).squaredNorm();
    const double error = cfg.position_weight * e_p + cfg.velocity_weight * e_v;
    if (k < steps) {
      result.tracking_sum += cfg.dt * error;
      result.effort_sum += cfg.dt * s.applied.as_vector().squaredNorm();
    } else {
      result.tracking_sum += error;
    }
    result.saturated = result.saturated || s.saturated;
    result.error_series.push_back(std::sqrt(e_p));
    ++k;
  });
  result.cost = tracking_label(result, cfg.rho_bar, cfg.cost_cap);
  return result;
}

double tracking_label(const TrackingResult& result, double rho_bar, double cost_cap) {
  if (result.crashed) return cost_cap;
  const double cost = result.tracking_sum + rho_bar * result.effort_sum;
  return std::isfinite(cost) ? std::min(cost, cost_cap) : cost_cap;
}

WaypointSet sample_waypoints(std::uint64_t seed) {
  Rng rng(seed);
  WaypointSet w;
  Keyframe first;
  for (int a = 0; a < 3; ++a) first.position[a] = rng.uniform(-kWaypointBox, kWaypointBox);
  first.yaw = rng.uniform(-std::numbers::pi / 2, std::numbers::pi / 2);
  w.keyframes.push_back(first);

  for (int k = 1; k < kSampledKeyframes; ++k) {
    const Eigen::Vector3d prev = w.keyframes.back().position;
    // Uniform over the cube around the previous keyframe, clipped to the box,
    // then rejected on distance: the accepted draw is uniform on the
    // admissible region, same as rejecting from the whole box.
    Eigen::Vector3d lo, hi;
    for (int a = 0; a < 3; ++a) {
      lo[a] = std::max(-kWaypointBox, prev[a] - kMaxKeyframeGap);
      hi[a] = std::min(kWaypointBox, prev[a] + kMaxKeyframeGap);
    }
    bool accepted = false;
    Keyframe next;
    for (int attempt = 0; attempt < kMaxRejections && !accepted; ++attempt) {
      for (int a = 0; a < 3; ++a) next.position[a] = rng.uniform(lo[a], hi[a]);
      const double gap = (next.position - prev).norm();
      accepted = gap >= kMinKeyframeGap && gap <= kMaxKeyframeGap;
    }
    if (!accepted) throw NumericError("sample_waypoints: rejection sampler exhausted");
    next.yaw = rng.uniform(-std::numbers::pi / 2, std::numbers::pi / 2);
    w.keyframes.push_back(next);
  }
  return w;
}

double DatasetSummary::crash_rate() const {
  const std::size_t evaluated = written + dropped_crash;
  return evaluated == 0 ? 0.0 : static_cast<double>(crashed) / static_cast<double>(evaluated);
}

void PerturbationSettings::validate() const {
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw ConfigError("data: perturb_fraction must lie in [0, 1]");
  if (!(snap_growth >= 0.0 && std::isfinite(snap_growth))) {
    throw ConfigError("data: perturb_snap_growth must be >= 0");
  }
}

namespace {

Eigen::VectorXd perturb(const WaypointSet& w, const PolySpline& spline, const SplineSettings& settings,
                        double growth, Rng& rng) {
  const QpSystem qp = build_qp(w, spline.durations, settings.order, settings.yaw_rate_weight);
  Eigen::VectorXd z(spline.coefficients.size());
  for (Eigen::Index i = 0; i < z.size(); i += 2) {
    // Box-Muller on the portable uniform stream.
    const double r = std::sqrt(-2.0 * std::log(1.0 - rng.uniform()));
    const double theta = 2.0 * std::numbers::pi * rng.uniform();
    z[i] = r * std::cos(theta);
    if (i + 1 < z.size()) z[i + 1] = r * std::sin(theta);
  }
  const Eigen::VectorXd dir = AffineProjector(qp.A, qp.b).tangent(z);
  const double dir_snap = dir.dot(qp.H * dir);
  const double base_snap = spline.coefficients.dot(qp.H * spline.coefficients);
  if (!(dir_snap > 0.0)) return spline.coefficients;
  // Minsnap is optimal, so H c is orthogonal to feasible directions and the
  // snap cost grows by exactly s^2 dir^T H dir.
  const double s = std::sqrt(growth * rng.uniform() * base_snap / dir_snap);
  return spline.coefficients + s * dir;
}

}  // namespace

std::optional<DatasetRecord> make_record(const DatasetSettings& settings, std::uint64_t index,
                                         bool* solver_failed) {
  if (solver_failed) *solver_failed = false;
  DatasetRecord rec;
  rec.index = index;
  rec.seed = stream_seed(settings.seed, index);
  const WaypointSet w = sample_waypoints(rec.seed);
  PolySpline spline;
  try {
    spline = plan_minsnap(w, settings.spline);
  } catch (const NumericError& e) {
    std::cerr << "record " << index << ": minsnap failed: " << e.what() << "\n";
    if (solver_failed) *solver_failed = true;
    return std::nullopt;
  }
  Rng rng(stream_seed(rec.seed, 0, 0x9e27));
  if (settings.perturbation.fraction > 0.0 && rng.uniform() < settings.perturbation.fraction) {
    spline.coefficients = perturb(w, spline, settings.spline, settings.perturbation.snap_growth, rng);
    rec.perturbed = true;
  }
  const TrackingResult r = tracking_cost(spline, settings.cost, settings.gains, settings.vehicle);
  rec.coefficients = spline.coefficients;
  rec.durations = spline.durations;
  rec.label = r.cost;
  rec.crashed = r.crashed;
  if (r.crashed && settings.cost.crash_policy == CrashPolicy::kDrop) return std::nullopt;
  return rec;
}

std::string record_to_json_line(const DatasetRecord& record) {
  json j;
  j["index"] = record.index;
  j["seed"] = record.seed;
  j["durations"] = record.durations;
  j["coefficients"] = std::vector<double>(record.coefficients.data(),
                                          record.coefficients.data() + record.coefficients.size());
  j["label"] = record.label;
  j["crashed"] = record.crashed;
  if (record.perturbed) j["perturbed"] = true;
  return j.dump();
}

DatasetSummary generate_dataset(const DatasetSettings& settings, const std::string& out_path) {
  if (settings.count < 1) throw ConfigError("gen-data: count must be >= 1");
  settings.cost.validate();
  settings.vehicle.validate();
  settings.perturbation.validate();
  std::ofstream out(out_path);
  if (!out) throw IoError("cannot write " + out_path);

  json header;
  header["schema"] = kDatasetSchema;
  header["count"] = settings.count;
  header["seed"] = settings.seed;
  header["order"] = settings.spline.order;
  header["segments"] = kSampledKeyframes - 1;
  header["avg_speed"] = settings.spline.avg_speed;
  header["rho_bar"] = settings.cost.rho_bar;
  header["dt"] = settings.cost.dt;
  header["cost_cap"] = settings.cost.cost_cap;
  header["perturb_fraction"] = settings.perturbation.fraction;
  header["perturb_snap_growth"] = settings.perturbation.snap_growth;
  out << header.dump() << "\n";

  DatasetSummary summary;
  summary.requested = settings.count;
  std::vector<double> labels;
  constexpr std::size_t kBlock = 256;
  for (std::size_t begin = 0; begin < settings.count; begin += kBlock) {
    const std::size_t end = std::min(settings.count, begin + kBlock);
    std::vector<std::optional<DatasetRecord>> block(end - begin);
    std::vector<char> failed(end - begin, 0);
    parallel_for(begin, end, settings.workers, [&](std::size_t i) {
      bool solver_failed = false;
      block[i - begin] = make_record(settings, i, &solver_failed);
      failed[i - begin] = solver_failed;
    });
    for (std::size_t i = 0; i < block.size(); ++i) {
      if (block[i]) {
        out << record_to_json_line(*block[i]) << "\n";
        ++summary.written;
        if (block[i]->crashed) ++summary.crashed;
        labels.push_back(block[i]->label);
      } else if (failed[i]) {
        ++summary.dropped_solver;
      } else {
        ++summary.dropped_crash;
        ++summary.crashed;
      }
    }
  }
  if (!out) throw IoError("write failed: " + out_path);
  if (!labels.empty()) {
    for (double q : {0.0, 0.05, 0.25, 0.5, 0.75, 0.95, 1.0}) {
      summary.label_quantiles.emplace_back(q, quantile(labels, q));
    }
  }
  return summary;
}

std::vector<DatasetRecord> load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<DatasetRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      if (line_no == 1) {
        if (j.value("schema", "") != kDatasetSchema) {
          throw ConfigError("unsupported dataset schema");
        }
        continue;
      }
      DatasetRecord r;
      r.index = j.at("index").get<std::uint64_t>();
      r.seed = j.at("seed").get<std::uint64_t>();
      r.durations = j.at("durations").get<std::vector<double>>();
      const auto c = j.at("coefficients").get<std::vector<double>>();
      r.coefficients =
          Eigen::Map<const Eigen::VectorXd>(c.data(), static_cast<Eigen::Index>(c.size()));
      r.label = j.at("label").get<double>();
      r.crashed = j.at("crashed").get<bool>();
      r.perturbed = j.value("perturbed", false);
      if (!r.coefficients.allFinite() || !std::isfinite(r.label)) {
        throw ConfigError("non-finite values");
      }
      records.push_back(std::move(r));
    } catch (const std::exception& e) {
      throw ConfigError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return records;
}

void write_summary_csv(const DatasetSummary& summary, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out.precision(17);
  out << "quantity,value\n";
  out << "requested," << summary.requested << "\n";
  out << "written," << summary.written << "\n";
  out << "crashed," << summary.crashed << "\n";
  out << "dropped_crash," << summary.dropped_crash << "\n";
  out << "dropped_solver," << summary.dropped_solver << "\n";
  out << "crash_rate," << summary.crash_rate() << "\n";
  for (const auto& [q, v] : summary.label_quantiles) out << "label_q" << q << "," << v << "\n";
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw std::invalid_argument("quantile: empty sample");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

}  // namespace dragplan
