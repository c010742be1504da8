#include "dragplan/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "dragplan/errors.hpp"
#include "dragplan/parallel.hpp"
#include "dragplan/planner.hpp"
#include "dragplan/random.hpp"
#include "dragplan/rollout.hpp"

namespace dragplan {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<double> cumulative(const std::vector<double>& errors, double dt) {
  std::vector<double> out(errors.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < errors.size(); ++i) {
    acc += errors[i] * dt;
    out[i] = acc;
  }
  return out;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  return out;
}

}  // namespace

EvalAggregates aggregate(const std::vector<EvalRow>& rows) {
  if (rows.empty()) throw ConfigError("eval report needs at least one row");
  EvalAggregates a;
  a.rows = rows.size();
  std::vector<double> ratios;
  for (const auto& r : rows) {
    ratios.push_back(r.ratio);
    a.minsnap_crashes += r.minsnap_crashed;
    a.dragaware_crashes += r.dragaware_crashed;
  }
  a.median_ratio = quantile(ratios, 0.5);
  a.q1_ratio = quantile(ratios, 0.25);
  a.q3_ratio = quantile(ratios, 0.75);
  a.min_ratio = *std::min_element(ratios.begin(), ratios.end());
  a.max_ratio = *std::max_element(ratios.begin(), ratios.end());
  a.mean_ratio = std::accumulate(ratios.begin(), ratios.end(), 0.0) / ratios.size();

  std::vector<std::size_t> order(rows.size());
  std::iota(order.begin(), order.end(), 0);
  // Ties broken by id so the decile is well defined.
  std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
    if (rows[i].minsnap_cost != rows[j].minsnap_cost) return rows[i].minsnap_cost > rows[j].minsnap_cost;
    return rows[i].id < rows[j].id;
  });
  a.top_decile_rows = (rows.size() + 9) / 10;
  double reduction = 0.0;
  for (std::size_t k = 0; k < a.top_decile_rows; ++k) reduction += 1.0 - rows[order[k]].ratio;
  a.top_decile_reduction = reduction / a.top_decile_rows;
  return a;
}

WaypointSet sample_eval_waypoints(std::uint64_t seed, std::size_t index) {
  WaypointSet w = sample_waypoints(stream_seed(seed, index, kEvalSalt));
  for (auto& k : w.keyframes) k.yaw = 0.0;
  return w;
}

EvalReport run_eval(const EvalSettings& es, const MlpModel& model) {
  if (es.count == 0) throw ConfigError("eval: --count must be >= 1");
  model.validate();
  const Settings& s = es.settings;

  struct Outcome {
    EvalRow row;
    std::vector<double> minsnap_errors;
    std::vector<double> dragaware_errors;
  };
  std::vector<Outcome> outcomes(es.count);

  parallel_for(0, es.count, es.workers, [&](std::size_t i) {
    Outcome& o = outcomes[i];
    o.row.id = i;
    o.row.seed = stream_seed(es.seed, i, kEvalSalt);
    const WaypointSet w = sample_eval_waypoints(es.seed, i);
    const PlanResult plan = plan_drag_aware(w, model, s.pgd, s.spline);
    const TrackingResult ms = tracking_cost(plan.minsnap, s.cost, s.gains, s.vehicle);
    const TrackingResult da = tracking_cost(plan.spline, s.cost, s.gains, s.vehicle);
    o.row.minsnap_cost = ms.cost;
    o.row.dragaware_cost = da.cost;
    o.row.minsnap_crashed = ms.crashed;
    o.row.dragaware_crashed = da.crashed;
    o.row.pgd_iterations = static_cast<int>(plan.log.size()) - 1;
    if (!(ms.cost > 0.0)) throw NumericError("eval: minsnap cost is zero for trajectory " + std::to_string(i));
    o.row.ratio = da.cost / ms.cost;
    o.minsnap_errors = ms.error_series;
    o.dragaware_errors = da.error_series;
  });

  EvalReport report;
  for (const auto& o : outcomes) report.rows.push_back(o.row);
  report.aggregates = aggregate(report.rows);

  std::size_t worst = 0;
  for (std::size_t i = 1; i < report.rows.size(); ++i) {
    if (report.rows[i].minsnap_cost > report.rows[worst].minsnap_cost) worst = i;
  }
  report.worst_id = worst;
  const double dt = s.cost.dt;
  report.worst_minsnap_error = cumulative(outcomes[worst].minsnap_errors, dt);
  report.worst_dragaware_error = cumulative(outcomes[worst].dragaware_errors, dt);
  const std::size_t n = std::max(report.worst_minsnap_error.size(), report.worst_dragaware_error.size());
  for (std::size_t k = 0; k < n; ++k) report.worst_time.push_back(k * dt);
  return report;
}

void write_eval_report(const EvalReport& report, const std::string& prefix) {
  {
    auto out = open_out(prefix + "_rows.csv");
    out << "# " << kEvalSchema << "\n";
    out << "id,seed,minsnap_cost,dragaware_cost,ratio,minsnap_crashed,dragaware_crashed,pgd_iterations\n";
    for (const auto& r : report.rows) {
      out << r.id << ',' << r.seed << ',' << fmt(r.minsnap_cost) << ',' << fmt(r.dragaware_cost) << ','
          << fmt(r.ratio) << ',' << r.minsnap_crashed << ',' << r.dragaware_crashed << ','
          << r.pgd_iterations << '\n';
    }
  }
  {
    const auto& a = report.aggregates;
    auto out = open_out(prefix + "_summary.csv");
    out << "# " << kEvalSchema << "\n";
    out << "metric,value\n";
    out << "rows," << a.rows << '\n';
    out << "median_ratio," << fmt(a.median_ratio) << '\n';
    out << "mean_ratio," << fmt(a.mean_ratio) << '\n';
    out << "q1_ratio," << fmt(a.q1_ratio) << '\n';
    out << "q3_ratio," << fmt(a.q3_ratio) << '\n';
    out << "min_ratio," << fmt(a.min_ratio) << '\n';
    out << "max_ratio," << fmt(a.max_ratio) << '\n';
    out << "top_decile_rows," << a.top_decile_rows << '\n';
    out << "top_decile_reduction," << fmt(a.top_decile_reduction) << '\n';
    out << "minsnap_crashes," << a.minsnap_crashes << '\n';
    out << "dragaware_crashes," << a.dragaware_crashes << '\n';
  }
  {
    auto out = open_out(prefix + "_worst.csv");
    out << "# " << kEvalSchema << " id=" << report.worst_id << "\n";
    out << "time,minsnap_cumulative_error,dragaware_cumulative_error\n";
    auto at = [](const std::vector<double>& v, std::size_t k) {
      return k < v.size() ? fmt(v[k]) : std::string();
    };
    for (std::size_t k = 0; k < report.worst_time.size(); ++k) {
      out << fmt(report.worst_time[k]) << ',' << at(report.worst_minsnap_error, k) << ','
          << at(report.worst_dragaware_error, k) << '\n';
    }
  }
  {
    const auto& a = report.aggregates;
    auto out = open_out(prefix + "_boxplot.csv");
    out << "# " << kEvalSchema << "\n";
    out << "series,min,q1,median,q3,max,mean\n";
    out << "ratio," << fmt(a.min_ratio) << ',' << fmt(a.q1_ratio) << ',' << fmt(a.median_ratio) << ','
        << fmt(a.q3_ratio) << ',' << fmt(a.max_ratio) << ',' << fmt(a.mean_ratio) << '\n';
  }
}

std::vector<EvalRow> load_eval_rows(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<EvalRow> rows;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#' || line.rfind("id,", 0) == 0) continue;
    std::stringstream ss(line);
    std::string f[8];
    for (auto& field : f) std::getline(ss, field, ',');
    try {
      EvalRow r;
      r.id = std::stoull(f[0]);
      r.seed = std::stoull(f[1]);
      r.minsnap_cost = std::stod(f[2]);
      r.dragaware_cost = std::stod(f[3]);
      r.ratio = std::stod(f[4]);
      r.minsnap_crashed = f[5] == "1";
      r.dragaware_crashed = f[6] == "1";
      r.pgd_iterations = std::stoi(f[7]);
      rows.push_back(r);
    } catch (const std::exception&) {
      throw IoError(path + ":" + std::to_string(line_no) + ": malformed eval row");
    }
  }
  return rows;
}

}  // namespace dragplan
