#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dragplan/control.hpp"
#include "dragplan/spline.hpp"
#include "dragplan/vehicle.hpp"

namespace dragplan {

enum class CrashPolicy { kCap, kDrop };

/// Weights and discretization of the closed-loop tracking penalty
///   dt * sum_t (rho_bar |u_t|^2 + w_p |p_t - r_t|^2 + w_v |v_t - rdot_t|^2)
///   + w_p |p_N - r_N|^2 + w_v |v_N - rdot_N|^2.
struct TrackingCostConfig {
  double rho_bar = 0.0;
  double position_weight = 1.0;
  double velocity_weight = 0.1;
  double dt = 0.01;
  double cost_cap = 1e4;
  CrashPolicy crash_policy = CrashPolicy::kCap;
  // Position error (m) beyond which the vehicle is considered lost.
  double crash_distance = 5.0;

  void validate() const;
};

struct RolloutSample {
  double time = 0.0;
  FlatState reference;
  QuadState state;
  ControlInput command;  // controller output, before allocation
  ControlInput applied;  // wrench actually produced by the rotors
  bool saturated = false;
};

struct TrackingResult {
  double cost = 0.0;  // capped label value
  bool crashed = false;
  bool saturated = false;  // allocation clamped on at least one step
  double tracking_sum = 0.0;  // weighted error part, uncapped
  double effort_sum = 0.0;    // dt * sum |u|^2, uncapped
  std::vector<double> error_series;  // |p_t - r_t| per sample, up to a crash
};

/// Number of control steps for a horizon: floor(total / dt) (+1 samples).
int horizon_steps(double total_duration, double dt);

/// Closed-loop rollout from hover at the spline's start. Calls `visit` for
/// every sample (N + 1 of them) unless a crash stops the run; returns
/// whether it crashed.
bool rollout(const PolySpline& spline, double dt, double crash_distance, const Se3Gains& gains,
             const VehicleParams& params, const std::function<void(const RolloutSample&)>& visit);

TrackingResult tracking_cost(const PolySpline& spline, const TrackingCostConfig& cfg,
                             const Se3Gains& gains, const VehicleParams& params);

/// Label for a given rho_bar from the two cost components of a finished
/// rollout; the policy does not depend on rho_bar, so one rollout serves all.
double tracking_label(const TrackingResult& result, double rho_bar, double cost_cap);

inline constexpr double kWaypointBox = 10.0;
inline constexpr double kMinKeyframeGap = 1.0;
inline constexpr double kMaxKeyframeGap = 3.0;
inline constexpr int kSampledKeyframes = 4;
inline constexpr int kMaxRejections = 10000;

/// Four keyframes in [-10, 10]^3, consecutive gaps in [1, 3] m, yaw in
/// [-pi/2, pi/2]. Deterministic per seed.
WaypointSet sample_waypoints(std::uint64_t seed);

struct DatasetRecord {
  std::uint64_t index = 0;
  std::uint64_t seed = 0;
  Eigen::VectorXd coefficients;
  std::vector<double> durations;
  double label = 0.0;
  bool crashed = false;
  bool perturbed = false;
};

/// Off-minsnap samples: a fraction of records move the minsnap
/// coefficients along a random feasible direction (A dc = 0), sized so the
/// snap cost grows by a factor 1 + u, u ~ U(0, snap_growth).
struct PerturbationSettings {
  double fraction = 0.5;
  double snap_growth = 1.0;

  void validate() const;
};

struct DatasetSettings {
  std::size_t count = 1;
  std::uint64_t seed = 0;
  unsigned workers = 1;
  SplineSettings spline;
  TrackingCostConfig cost;
  Se3Gains gains;
  VehicleParams vehicle;
  PerturbationSettings perturbation;
};

struct DatasetSummary {
  std::size_t requested = 0;
  std::size_t written = 0;
  std::size_t crashed = 0;
  std::size_t dropped_crash = 0;
  std::size_t dropped_solver = 0;
  std::vector<std::pair<double, double>> label_quantiles;  // (q, value)

  double crash_rate() const;
};

inline constexpr const char* kDatasetSchema = "dragplan.dataset/1";

/// Computes record `index` (nullopt when the solver fails or the crash policy drops it).
std::optional<DatasetRecord> make_record(const DatasetSettings& settings, std::uint64_t index,
                                         bool* solver_failed = nullptr);

/// Samples, solves, rolls out and streams JSON Lines to `out_path` in index
/// order. Output depends only on (seed, count, settings), not on workers.
DatasetSummary generate_dataset(const DatasetSettings& settings, const std::string& out_path);

std::string record_to_json_line(const DatasetRecord& record);
std::vector<DatasetRecord> load_dataset(const std::string& path);

/// Quantile summary CSV ("quantity,value").
void write_summary_csv(const DatasetSummary& summary, const std::string& path);

/// Linear-interpolated empirical quantile of an unsorted sample.
double quantile(std::vector<double> values, double q);

}  // namespace dragplan
