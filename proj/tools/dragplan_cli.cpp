// dragplan command-line driver.
#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "dragplan/config.hpp"
#include "dragplan/errors.hpp"
#include "dragplan/evaluation.hpp"
#include "dragplan/model.hpp"
#include "dragplan/parallel.hpp"
#include "dragplan/planner.hpp"
#include "dragplan/rollout.hpp"
#include "dragplan/spline.hpp"

using namespace dragplan;

namespace {

struct Common {
  std::uint64_t seed = 0;
  std::string config_path;
  std::vector<std::string> sets;
};

void add_common(CLI::App* cmd, Common& common) {
  cmd->add_option("--seed", common.seed, "base random seed")->capture_default_str();
  cmd->add_option("--config", common.config_path, "key = value config file")->check(CLI::ExistingFile);
  cmd->add_option("--set", common.sets, "override one config key (key=value); repeatable");
}

Settings resolve(const Common& common, KeyValues flags = {}) {
  KeyValues file;
  if (!common.config_path.empty()) file = load_key_values(common.config_path);
  KeyValues overrides;
  for (const auto& s : common.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value, got '" + s + "'");
    overrides[s.substr(0, eq)] = s.substr(eq + 1);
  }
  // Dedicated flags win over --set.
  for (auto& [k, v] : flags) overrides[k] = v;
  Settings settings = resolve_settings(file, overrides);
  std::cout << "config hash " << hash_hex(config_hash(settings)) << " seed " << common.seed << "\n";
  return settings;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_simulation(const PolySpline& spline, const Settings& s, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << "time,ref_x,ref_y,ref_z,ref_vx,ref_vy,ref_vz,ref_yaw,"
         "x,y,z,vx,vy,vz,qw,qx,qy,qz,wx,wy,wz,"
         "thrust,tau_x,tau_y,tau_z,applied_thrust,applied_tau_x,applied_tau_y,applied_tau_z,saturated\n";
  std::size_t rows = 0;
  const bool crashed = rollout(spline, s.cost.dt, s.cost.crash_distance, s.gains, s.vehicle,
                               [&](const RolloutSample& r) {
                                 const Eigen::Quaterniond q(r.state.rotation);
                                 std::string line = num(r.time);
                                 auto put = [&](double v) { line += ',' + num(v); };
                                 for (int i = 0; i < 3; ++i) put(r.reference.position[i]);
                                 for (int i = 0; i < 3; ++i) put(r.reference.velocity[i]);
                                 put(r.reference.yaw);
                                 for (int i = 0; i < 3; ++i) put(r.state.position[i]);
                                 for (int i = 0; i < 3; ++i) put(r.state.velocity[i]);
                                 put(q.w()), put(q.x()), put(q.y()), put(q.z());
                                 for (int i = 0; i < 3; ++i) put(r.state.body_rates[i]);
                                 for (int i = 0; i < 4; ++i) put(r.command.as_vector()[i]);
                                 for (int i = 0; i < 4; ++i) put(r.applied.as_vector()[i]);
                                 line += r.saturated ? ",1\n" : ",0\n";
                                 out << line;
                                 ++rows;
                               });
  std::cout << "wrote " << rows << " rows to " << path << (crashed ? " (crashed)" : "") << "\n";
}

int run(int argc, char** argv) {
  CLI::App app{"Drag-aware quadrotor trajectory planning pipeline"};
  app.require_subcommand(1);

  // simulate
  Common sim_c;
  std::string sim_spline, sim_out = "simulation.csv";
  auto* sim = app.add_subcommand("simulate", "roll out the SE(3) controller along a spline");
  add_common(sim, sim_c);
  sim->add_option("--spline", sim_spline, "spline JSON")->required();
  sim->add_option("--out", sim_out, "trajectory CSV")->capture_default_str();

  // minsnap
  Common ms_c;
  std::string ms_waypoints, ms_out = "minsnap.json";
  auto* ms = app.add_subcommand("minsnap", "solve the minimum-snap QP for a waypoint file");
  add_common(ms, ms_c);
  ms->add_option("--waypoints", ms_waypoints, "waypoint JSON")->required();
  ms->add_option("--out", ms_out, "spline JSON")->capture_default_str();

  // gen-data
  Common gd_c;
  std::size_t gd_count = 1000;
  std::optional<double> gd_rho;
  unsigned gd_workers = default_workers();
  std::string gd_out = "dataset.jsonl", gd_summary;
  auto* gd = app.add_subcommand("gen-data", "sample trajectories and label them by closed-loop rollout");
  add_common(gd, gd_c);
  gd->add_option("--count", gd_count, "trajectories to sample")->capture_default_str();
  gd->add_option("--rho-bar", gd_rho, "control-effort weight (cost.rho_bar)");
  gd->add_option("--workers", gd_workers, "worker threads; output does not depend on it")->capture_default_str();
  gd->add_option("--out", gd_out, "dataset JSON Lines")->capture_default_str();
  gd->add_option("--summary", gd_summary, "summary CSV (label quantiles, crash rate)");

  // train
  Common tr_c;
  std::string tr_data, tr_out = "model.json", tr_loss;
  std::optional<int> tr_epochs;
  auto* tr = app.add_subcommand("train", "fit the tracking-cost network");
  add_common(tr, tr_c);
  tr->add_option("--data", tr_data, "dataset JSON Lines")->required();
  tr->add_option("--out", tr_out, "checkpoint JSON")->capture_default_str();
  tr->add_option("--epochs", tr_epochs, "training epochs (train.epochs)");
  tr->add_option("--loss-csv", tr_loss, "per-epoch loss curve");

  // plan
  Common pl_c;
  std::string pl_model, pl_waypoints, pl_out = "plan.json", pl_log;
  auto* pl = app.add_subcommand("plan", "drag-aware planning by projected gradient descent");
  add_common(pl, pl_c);
  pl->add_option("--model", pl_model, "checkpoint JSON")->required();
  pl->add_option("--waypoints", pl_waypoints, "waypoint JSON")->required();
  pl->add_option("--out", pl_out, "planned spline JSON")->capture_default_str();
  pl->add_option("--log", pl_log, "iteration log CSV");

  // eval
  Common ev_c;
  std::string ev_model, ev_out = "eval";
  std::size_t ev_count = 50;
  unsigned ev_workers = default_workers();
  auto* ev = app.add_subcommand("eval", "compare minsnap and drag-aware plans on fresh zero-yaw trajectories");
  add_common(ev, ev_c);
  ev->add_option("--model", ev_model, "checkpoint JSON")->required();
  ev->add_option("--count", ev_count, "trajectories")->capture_default_str();
  ev->add_option("--workers", ev_workers, "worker threads; output does not depend on it")->capture_default_str();
  ev->add_option("--out", ev_out, "report prefix (<out>_rows.csv, _summary.csv, _worst.csv, _boxplot.csv)")
      ->capture_default_str();

  std::string keys_help = "\nConfig keys (file lines or --set key=value):\n";
  for (const auto& k : config_keys()) keys_help += "  " + k.name + "  " + k.help + "\n";
  app.footer(keys_help);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (sim->parsed()) {
    const Settings s = resolve(sim_c);
    write_simulation(load_spline(sim_spline), s, sim_out);
  } else if (ms->parsed()) {
    const Settings s = resolve(ms_c);
    const PolySpline spline = plan_minsnap(load_waypoints(ms_waypoints), s.spline);
    save_spline(spline, ms_out);
    std::cout << "wrote " << ms_out << " (" << spline.segments() << " segments, "
              << spline.total_duration() << " s)\n";
  } else if (gd->parsed()) {
    KeyValues flags;
    if (gd_rho) flags["cost.rho_bar"] = num(*gd_rho);
    const Settings s = resolve(gd_c, flags);
    DatasetSettings ds;
    ds.count = gd_count;
    ds.seed = gd_c.seed;
    ds.workers = gd_workers;
    ds.spline = s.spline;
    ds.cost = s.cost;
    ds.gains = s.gains;
    ds.vehicle = s.vehicle;
    ds.perturbation = s.data;
    const DatasetSummary summary = generate_dataset(ds, gd_out);
    if (!gd_summary.empty()) write_summary_csv(summary, gd_summary);
    std::cout << "wrote " << summary.written << " of " << summary.requested << " records to " << gd_out
              << " (crash rate " << summary.crash_rate() << ", dropped " << summary.dropped_crash << " crashed, "
              << summary.dropped_solver << " solver failures)\n";
  } else if (tr->parsed()) {
    KeyValues flags;
    if (tr_epochs) flags["train.epochs"] = std::to_string(*tr_epochs);
    const Settings s = resolve(tr_c, flags);
    TrainConfig cfg = s.train;
    cfg.seed = tr_c.seed;
    const TrainResult result = train(tr_data, cfg);
    save_model(result.model, tr_out);
    if (!tr_loss.empty()) write_loss_csv(result, tr_loss);
    std::cout << "wrote " << tr_out << " (best epoch " << result.best_epoch << ", validation mse "
              << result.validation_loss[static_cast<std::size_t>(result.best_epoch)] << ")\n";
  } else if (pl->parsed()) {
    const Settings s = resolve(pl_c);
    const MlpModel model = load_model(pl_model);
    const PlanResult result = plan_drag_aware(load_waypoints(pl_waypoints), model, s.pgd, s.spline);
    save_spline(result.spline, pl_out);
    if (!pl_log.empty()) write_iteration_log(result, pl_log);
    if (result.warning) std::cerr << "warning: objective not finite at the minsnap start\n";
    std::cout << "wrote " << pl_out << " (best iteration " << result.best_iteration << ", "
              << result.stop_reason << ")\n";
  } else if (ev->parsed()) {
    EvalSettings es;
    es.settings = resolve(ev_c);
    es.seed = ev_c.seed;
    es.count = ev_count;
    es.workers = ev_workers;
    const MlpModel model = load_model(ev_model);
    const EvalReport report = run_eval(es, model);
    write_eval_report(report, ev_out);
    const auto& a = report.aggregates;
    std::cout << "median ratio " << a.median_ratio << ", mean ratio " << a.mean_ratio
              << ", top-decile reduction " << a.top_decile_reduction << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 3;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
