#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dragplan/config.hpp"
#include "dragplan/model.hpp"
#include "dragplan/spline.hpp"

namespace dragplan {

inline constexpr const char* kEvalSchema = "dragplan.eval/1";

struct EvalRow {
  std::size_t id = 0;
  std::uint64_t seed = 0;
  double minsnap_cost = 0.0;    // true rollout cost, capped
  double dragaware_cost = 0.0;  // true rollout cost, capped
  double ratio = 1.0;           // dragaware / minsnap
  bool minsnap_crashed = false;
  bool dragaware_crashed = false;
  int pgd_iterations = 0;
};

struct EvalAggregates {
  std::size_t rows = 0;
  double median_ratio = 0.0;
  double mean_ratio = 0.0;
  double q1_ratio = 0.0;
  double q3_ratio = 0.0;
  double min_ratio = 0.0;
  double max_ratio = 0.0;
  // Mean of (1 - ratio) over the ceil(rows / 10) rows with the highest minsnap cost.
  double top_decile_reduction = 0.0;
  std::size_t top_decile_rows = 0;
  std::size_t minsnap_crashes = 0;
  std::size_t dragaware_crashes = 0;
};

/// Pure function of the rows, so a report can be re-aggregated from its CSV.
EvalAggregates aggregate(const std::vector<EvalRow>& rows);

struct EvalReport {
  std::vector<EvalRow> rows;
  EvalAggregates aggregates;
  // Cumulative position error (integral of |p - r| dt) for the hardest case.
  std::size_t worst_id = 0;
  std::vector<double> worst_time;
  std::vector<double> worst_minsnap_error;
  std::vector<double> worst_dragaware_error;
};

struct EvalSettings {
  std::size_t count = 50;
  std::uint64_t seed = 0;
  unsigned workers = 1;
  Settings settings;
};

inline constexpr std::uint64_t kEvalSalt = 0xe7a1;

/// Same sampler as the dataset, on its own seed stream, with every yaw set to 0.
WaypointSet sample_eval_waypoints(std::uint64_t seed, std::size_t index);

EvalReport run_eval(const EvalSettings& settings, const MlpModel& model);

/// Writes <prefix>_rows.csv, <prefix>_summary.csv, <prefix>_worst.csv and
/// <prefix>_boxplot.csv.
void write_eval_report(const EvalReport& report, const std::string& prefix);
std::vector<EvalRow> load_eval_rows(const std::string& path);

}  // namespace dragplan
