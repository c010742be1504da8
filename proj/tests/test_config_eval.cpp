#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "dragplan/config.hpp"
#include "dragplan/errors.hpp"
#include "dragplan/evaluation.hpp"
#include "gradient_checks.hpp"

using namespace dragplan;

namespace {

std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "dragplan_test_config_eval";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("key-value parsing") {
  const KeyValues kv = parse_key_values("# comment\nschema = dragplan.config/1\n cost.dt = 0.02 \n\nspline.avg_speed=3 # trailing\n");
  CHECK(kv.at("cost.dt") == "0.02");
  CHECK(kv.at("spline.avg_speed") == "3");
  CHECK(kv.count("schema") == 0);
  CHECK_THROWS_AS(parse_key_values("cost.dt 0.02\n"), ConfigError);
  CHECK_THROWS_AS(parse_key_values("schema = other/9\n"), ConfigError);
  try {
    parse_key_values("a = 1\n\nbroken\n", "file.cfg");
    FAIL("expected a parse error");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("file.cfg:3") != std::string::npos);
  }
}

TEST_CASE("cli beats file beats defaults") {
  const Settings defaults = resolve_settings();
  CHECK(defaults.cost.dt == 0.01);
  CHECK(defaults.pgd.max_iters == 30);
  const Settings from_file = resolve_settings({{"cost.dt", "0.02"}, {"pgd.max_iters", "10"}});
  CHECK(from_file.cost.dt == 0.02);
  CHECK(from_file.pgd.max_iters == 10);
  const Settings overridden = resolve_settings({{"cost.dt", "0.02"}}, {{"cost.dt", "0.005"}});
  CHECK(overridden.cost.dt == 0.005);

  const Settings vec = resolve_settings({}, {{"gains.kp_x", "1"}, {"gains.kp_z", "3"}, {"train.hidden", "8,4"}});
  CHECK(vec.gains.kp == Eigen::Vector3d(1, 49, 3));
  CHECK(vec.train.hidden == std::vector<int>{8, 4});
  CHECK(resolve_settings({}, {{"pgd.snap_weight", "auto"}}).pgd.snap_weight == std::nullopt);
  CHECK(resolve_settings({}, {{"pgd.snap_weight", "2.5"}}).pgd.snap_weight == 2.5);
  CHECK_FALSE(resolve_settings({}, {{"vehicle.attitude_priority", "off"}}).vehicle.attitude_priority);
}

TEST_CASE("bad configuration is rejected") {
  CHECK_THROWS_AS(resolve_settings({{"cost.dtt", "0.02"}}), ConfigError);
  CHECK_THROWS_AS(resolve_settings({}, {{"cost.dt", "fast"}}), ConfigError);
  CHECK_THROWS_AS(resolve_settings({}, {{"cost.dt", "-1"}}), ConfigError);
  CHECK_THROWS_AS(resolve_settings({}, {{"vehicle.mass", "0"}}), ConfigError);
  CHECK_THROWS_AS(resolve_settings({}, {{"cost.crash_policy", "ignore"}}), ConfigError);
  CHECK_THROWS_AS(resolve_settings({}, {{"gains.kv", "1"}}), ConfigError);
  CHECK_THROWS_AS(resolve_settings({}, {{"train.hidden", "8,,4"}}), ConfigError);
}

TEST_CASE("config hash is stable and sensitive") {
  const Settings a = resolve_settings();
  const Settings b = resolve_settings(parse_key_values(canonical_config(a)));
  CHECK(canonical_config(a) == canonical_config(b));
  CHECK(config_hash(a) == config_hash(b));
  CHECK(config_hash(a) != config_hash(resolve_settings({}, {{"cost.rho_bar", "0.1"}})));
  CHECK(hash_hex(0x1234) == "0000000000001234");
  for (const auto& key : config_keys()) CHECK_FALSE(key.help.empty());
  CHECK(config_keys().size() > 40);
}

TEST_CASE("evaluation waypoints have zero yaw") {
  for (std::size_t i = 0; i < 50; ++i) {
    const WaypointSet w = sample_eval_waypoints(3, i);
    REQUIRE(w.keyframes.size() == 4);
    for (const auto& k : w.keyframes) CHECK(k.yaw == 0.0);
  }
  CHECK(sample_eval_waypoints(3, 0).keyframes[0].position != sample_waypoints(3).keyframes[0].position);
}

TEST_CASE("aggregates recompute from rows") {
  std::vector<EvalRow> rows;
  for (std::size_t i = 0; i < 23; ++i) {
    EvalRow r;
    r.id = i;
    r.minsnap_cost = 1.0 + static_cast<double>((i * 7) % 23);
    r.dragaware_cost = r.minsnap_cost * (0.5 + 0.05 * static_cast<double>(i % 5));
    r.ratio = r.dragaware_cost / r.minsnap_cost;
    rows.push_back(r);
  }
  const EvalAggregates a = aggregate(rows);
  CHECK(a.rows == 23);
  CHECK(a.top_decile_rows == 3);
  // Hardest three by minsnap cost are 23, 22, 21.
  double expected = 0.0;
  for (const auto& r : rows)
    if (r.minsnap_cost >= 21.0) expected += 1.0 - r.ratio;
  CHECK(a.top_decile_reduction == doctest::Approx(expected / 3.0));
  std::vector<double> ratios;
  double sum = 0.0;
  for (const auto& r : rows) ratios.push_back(r.ratio), sum += r.ratio;
  CHECK(a.mean_ratio == doctest::Approx(sum / 23.0));
  CHECK(a.median_ratio == quantile(ratios, 0.5));
  CHECK(a.min_ratio == 0.5);
  CHECK(a.max_ratio == 0.7);
}

TEST_CASE("evaluation of a constant network reports unit ratios") {
  MlpModel m = gradcheck::realistic_model(1);
  for (auto& layer : m.layers) {
    layer.weight.setZero();
    layer.bias.setZero();
  }
  EvalSettings es;
  es.count = 4;
  es.seed = 2;
  es.workers = 2;
  const EvalReport report = run_eval(es, m);
  REQUIRE(report.rows.size() == 4);
  for (const auto& r : report.rows) {
    CHECK(r.ratio == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(r.minsnap_cost > 0.0);
  }
  CHECK(report.worst_time.size() == report.worst_minsnap_error.size());
  CHECK(report.worst_time.size() == report.worst_dragaware_error.size());
  for (std::size_t k = 1; k < report.worst_minsnap_error.size(); ++k)
    CHECK(report.worst_minsnap_error[k] >= report.worst_minsnap_error[k - 1]);

  const std::string prefix = scratch("eval").string();
  write_eval_report(report, prefix);
  for (const char* suffix : {"_rows.csv", "_summary.csv", "_worst.csv", "_boxplot.csv"})
    CHECK(std::filesystem::exists(prefix + suffix));
  const std::vector<EvalRow> back = load_eval_rows(prefix + "_rows.csv");
  REQUIRE(back.size() == report.rows.size());
  const EvalAggregates again = aggregate(back);
  CHECK(again.mean_ratio == report.aggregates.mean_ratio);
  CHECK(again.median_ratio == report.aggregates.median_ratio);
  CHECK(again.top_decile_reduction == report.aggregates.top_decile_reduction);

  es.workers = 1;
  const EvalReport serial = run_eval(es, m);
  for (std::size_t i = 0; i < 4; ++i) CHECK(serial.rows[i].dragaware_cost == report.rows[i].dragaware_cost);
}
