#include "dragplan/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "dragplan/errors.hpp"

namespace dragplan {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || !std::isfinite(out)) {
    throw ConfigError("config: '" + key + "' expects a number, got '" + v + "'");
  }
  return out;
}

long long to_int(const std::string& key, const std::string& v) {
  long long out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError("config: '" + key + "' expects an integer, got '" + v + "'");
  }
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "on" || v == "true" || v == "1") return true;
  if (v == "off" || v == "false" || v == "0") return false;
  throw ConfigError("config: '" + key + "' expects on|off, got '" + v + "'");
}

struct Entry {
  ConfigKey key;
  std::function<std::string(const Settings&)> get;
  std::function<void(Settings&, const std::string&)> set;
};

Entry real(std::string name, std::string help, std::function<double&(Settings&)> field) {
  auto n = name;
  return {{std::move(name), std::move(help)},
          [field](const Settings& s) { return fmt(field(const_cast<Settings&>(s))); },
          [field, n](Settings& s, const std::string& v) { field(s) = to_double(n, v); }};
}

Entry integer(std::string name, std::string help, std::function<void(Settings&, long long)> set,
              std::function<long long(const Settings&)> get) {
  auto n = name;
  return {{std::move(name), std::move(help)},
          [get](const Settings& s) { return std::to_string(get(s)); },
          [set, n](Settings& s, const std::string& v) { set(s, to_int(n, v)); }};
}

void add_vector(std::vector<Entry>& out, const std::string& prefix, const std::string& help,
                std::function<Eigen::Vector3d&(Settings&)> field) {
  const char* axes[] = {"x", "y", "z"};
  for (int a = 0; a < 3; ++a) {
    out.push_back(real(prefix + "_" + axes[a], help + " (" + axes[a] + ")",
                       [field, a](Settings& s) -> double& { return field(s)[a]; }));
  }
}

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = [] {
    std::vector<Entry> t;
    // vehicle
    t.push_back(real("vehicle.mass", "mass, kg", [](Settings& s) -> double& { return s.vehicle.mass; }));
    t.push_back(real("vehicle.gravity", "gravity, m/s^2",
                     [](Settings& s) -> double& { return s.vehicle.gravity; }));
    const char* inertia_keys[3][3] = {{"xx", "xy", "xz"}, {"xy", "yy", "yz"}, {"xz", "yz", "zz"}};
    for (int i = 0; i < 3; ++i) {
      for (int j = i; j < 3; ++j) {
        t.push_back({{std::string("vehicle.inertia_") + inertia_keys[i][j],
                      "inertia tensor entry, kg m^2 (kept symmetric)"},
                     [i, j](const Settings& s) { return fmt(s.vehicle.inertia(i, j)); },
                     [i, j, name = std::string("vehicle.inertia_") + inertia_keys[i][j]](
                         Settings& s, const std::string& v) {
                       s.vehicle.inertia(i, j) = s.vehicle.inertia(j, i) = to_double(name, v);
                     }});
      }
    }
    add_vector(t, "vehicle.c_d", "parasitic drag C, N s^2/m^2",
               [](Settings& s) -> Eigen::Vector3d& { return s.vehicle.parasitic_drag; });
    t.push_back({{"vehicle.k_d", "rotor drag k_d (x and y), N s/(m rad/s)"},
                 [](const Settings& s) { return fmt(s.vehicle.rotor_drag.x()); },
                 [](Settings& s, const std::string& v) {
                   s.vehicle.rotor_drag.x() = s.vehicle.rotor_drag.y() = to_double("vehicle.k_d", v);
                 }});
    t.push_back(real("vehicle.k_z", "rotor drag k_z, N s/(m rad/s)",
                     [](Settings& s) -> double& { return s.vehicle.rotor_drag.z(); }));
    t.push_back(real("vehicle.thrust_coeff", "per-rotor thrust coefficient, N/(rad/s)^2",
                     [](Settings& s) -> double& { return s.vehicle.thrust_coeff; }));
    t.push_back(real("vehicle.arm_length", "hub-to-rotor distance, m",
                     [](Settings& s) -> double& { return s.vehicle.arm_length; }));
    t.push_back(real("vehicle.yaw_torque_coeff", "per-rotor yaw torque coefficient, N m/(rad/s)^2",
                     [](Settings& s) -> double& { return s.vehicle.yaw_torque_coeff; }));
    t.push_back(real("vehicle.rotor_speed_min", "rad/s",
                     [](Settings& s) -> double& { return s.vehicle.rotor_speed_min; }));
    t.push_back(real("vehicle.rotor_speed_max", "rad/s",
                     [](Settings& s) -> double& { return s.vehicle.rotor_speed_max; }));
    add_vector(t, "vehicle.aero_moment", "constant aerodynamic moment, N m",
               [](Settings& s) -> Eigen::Vector3d& { return s.vehicle.aero_moment; });
    t.push_back({{"vehicle.attitude_priority", "on: desaturate keeping roll/pitch torque first; off: clip rotors independently"},
                 [](const Settings& s) { return std::string(s.vehicle.attitude_priority ? "on" : "off"); },
                 [](Settings& s, const std::string& v) {
                   s.vehicle.attitude_priority = to_bool("vehicle.attitude_priority", v);
                 }});
    // gains
    add_vector(t, "gains.kp", "position gain, 1/s^2", [](Settings& s) -> Eigen::Vector3d& { return s.gains.kp; });
    add_vector(t, "gains.kv", "velocity gain, 1/s", [](Settings& s) -> Eigen::Vector3d& { return s.gains.kv; });
    add_vector(t, "gains.kr", "attitude gain, 1/s^2", [](Settings& s) -> Eigen::Vector3d& { return s.gains.kr; });
    add_vector(t, "gains.kw", "body-rate gain, 1/s", [](Settings& s) -> Eigen::Vector3d& { return s.gains.kw; });
    // cost
    t.push_back(real("cost.rho_bar", "control-effort weight",
                     [](Settings& s) -> double& { return s.cost.rho_bar; }));
    t.push_back(real("cost.position_weight", "weight of squared position error",
                     [](Settings& s) -> double& { return s.cost.position_weight; }));
    t.push_back(real("cost.velocity_weight", "weight of squared velocity error",
                     [](Settings& s) -> double& { return s.cost.velocity_weight; }));
    t.push_back(real("cost.dt", "simulation and control step, s",
                     [](Settings& s) -> double& { return s.cost.dt; }));
    t.push_back(real("cost.cost_cap", "label assigned to crashed rollouts and upper bound",
                     [](Settings& s) -> double& { return s.cost.cost_cap; }));
    t.push_back(real("cost.crash_distance", "position error treated as a crash, m",
                     [](Settings& s) -> double& { return s.cost.crash_distance; }));
    t.push_back({{"cost.crash_policy", "cap|drop crashed rollouts in datasets"},
                 [](const Settings& s) {
                   return std::string(s.cost.crash_policy == CrashPolicy::kCap ? "cap" : "drop");
                 },
                 [](Settings& s, const std::string& v) {
                   if (v == "cap") s.cost.crash_policy = CrashPolicy::kCap;
                   else if (v == "drop") s.cost.crash_policy = CrashPolicy::kDrop;
                   else throw ConfigError("config: 'cost.crash_policy' expects cap|drop");
                 }});
    // spline
    t.push_back(integer("spline.order", "polynomial order per segment",
                        [](Settings& s, long long v) { s.spline.order = static_cast<int>(v); },
                        [](const Settings& s) { return static_cast<long long>(s.spline.order); }));
    t.push_back(real("spline.avg_speed", "time allocation speed, m/s",
                     [](Settings& s) -> double& { return s.spline.avg_speed; }));
    t.push_back(real("spline.yaw_rate_weight", "weight of squared yaw rate in the snap cost",
                     [](Settings& s) -> double& { return s.spline.yaw_rate_weight; }));
    // train
    t.push_back(integer("train.batch_size", "minibatch size",
                        [](Settings& s, long long v) {
                          if (v < 1) throw ConfigError("config: train.batch_size must be >= 1");
                          s.train.batch_size = static_cast<std::size_t>(v);
                        },
                        [](const Settings& s) { return static_cast<long long>(s.train.batch_size); }));
    t.push_back(real("train.learning_rate", "SGD learning rate",
                     [](Settings& s) -> double& { return s.train.learning_rate; }));
    t.push_back(real("train.momentum", "SGD momentum",
                     [](Settings& s) -> double& { return s.train.momentum; }));
    t.push_back(integer("train.epochs", "training epochs",
                        [](Settings& s, long long v) { s.train.epochs = static_cast<int>(v); },
                        [](const Settings& s) { return static_cast<long long>(s.train.epochs); }));
    t.push_back(real("train.split", "training fraction", [](Settings& s) -> double& { return s.train.split; }));
    t.push_back({{"train.label_transform", "identity|log1p"},
                 [](const Settings& s) { return to_string(s.train.label_transform); },
                 [](Settings& s, const std::string& v) { s.train.label_transform = parse_label_transform(v); }});
    t.push_back({{"train.hidden", "comma-separated hidden layer widths"},
                 [](const Settings& s) {
                   std::string out;
                   for (std::size_t i = 0; i < s.train.hidden.size(); ++i) {
                     out += (i ? "," : "") + std::to_string(s.train.hidden[i]);
                   }
                   return out;
                 },
                 [](Settings& s, const std::string& v) {
                   std::vector<int> sizes;
                   std::stringstream ss(v);
                   std::string item;
                   while (std::getline(ss, item, ',')) {
                     sizes.push_back(static_cast<int>(to_int("train.hidden", trim(item))));
                   }
                   s.train.hidden = sizes;
                 }});
    t.push_back({{"train.label_scale", "labels are divided by this before the transform, or 'auto' (median label)"},
                 [](const Settings& s) { return s.train.label_scale ? fmt(*s.train.label_scale) : std::string("auto"); },
                 [](Settings& s, const std::string& v) {
                   if (v == "auto") s.train.label_scale.reset();
                   else s.train.label_scale = to_double("train.label_scale", v);
                 }});
    // data
    t.push_back(real("data.perturb_fraction", "fraction of records moved off minsnap along a feasible direction",
                     [](Settings& s) -> double& { return s.data.fraction; }));
    t.push_back(real("data.perturb_snap_growth", "largest relative snap-cost increase of a perturbed record",
                     [](Settings& s) -> double& { return s.data.snap_growth; }));
    // pgd
    t.push_back(integer("pgd.max_iters", "projected gradient iterations",
                        [](Settings& s, long long v) { s.pgd.max_iters = static_cast<int>(v); },
                        [](const Settings& s) { return static_cast<long long>(s.pgd.max_iters); }));
    t.push_back(real("pgd.step_size", "initial step", [](Settings& s) -> double& { return s.pgd.step_size; }));
    t.push_back({{"pgd.backtracking", "on|off"},
                 [](const Settings& s) { return std::string(s.pgd.backtracking ? "on" : "off"); },
                 [](Settings& s, const std::string& v) { s.pgd.backtracking = to_bool("pgd.backtracking", v); }});
    t.push_back(real("pgd.shrink", "backtracking factor", [](Settings& s) -> double& { return s.pgd.shrink; }));
    t.push_back(real("pgd.step_growth", "trial step multiplier after an accepted step",
                     [](Settings& s) -> double& { return s.pgd.step_growth; }));
    t.push_back(real("pgd.min_step", "smallest step before giving up",
                     [](Settings& s) -> double& { return s.pgd.min_step; }));
    t.push_back(real("pgd.tolerance", "projected-gradient stopping threshold",
                     [](Settings& s) -> double& { return s.pgd.tolerance; }));
    t.push_back(real("pgd.armijo", "sufficient decrease factor",
                     [](Settings& s) -> double& { return s.pgd.armijo; }));
    t.push_back({{"pgd.snap_weight", "weight on c^T H c, or 'auto' for the checkpoint value"},
                 [](const Settings& s) { return s.pgd.snap_weight ? fmt(*s.pgd.snap_weight) : std::string("auto"); },
                 [](Settings& s, const std::string& v) {
                   if (v == "auto") s.pgd.snap_weight.reset();
                   else s.pgd.snap_weight = to_double("pgd.snap_weight", v);
                 }});
    return t;
  }();
  return table;
}

}  // namespace

KeyValues parse_key_values(const std::string& text, const std::string& origin) {
  KeyValues out;
  std::stringstream ss(text);
  std::string line;
  int line_no = 0;
  while (std::getline(ss, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty()) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": empty key or value");
    }
    if (key == "schema") {
      if (value != kConfigSchema) {
        throw ConfigError(origin + ":" + std::to_string(line_no) + ": unsupported schema " + value);
      }
      continue;
    }
    out[key] = value;
  }
  return out;
}

KeyValues load_key_values(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_key_values(ss.str(), path);
}

Settings resolve_settings(const KeyValues& file, const KeyValues& overrides) {
  Settings s;
  auto apply = [&](const KeyValues& kv) {
    for (const auto& [key, value] : kv) {
      const auto& table = entries();
      const auto it = std::find_if(table.begin(), table.end(),
                                   [&](const Entry& e) { return e.key.name == key; });
      if (it == table.end()) throw ConfigError("config: unknown key '" + key + "'");
      it->set(s, value);
    }
  };
  apply(file);
  apply(overrides);
  s.train.yaw_rate_weight = s.spline.yaw_rate_weight;
  s.vehicle.validate();
  s.gains.validate();
  s.cost.validate();
  s.train.validate();
  s.pgd.validate();
  s.data.validate();
  if (s.spline.order < 4) throw ConfigError("config: spline.order must be >= 4");
  if (!(s.spline.avg_speed > 0.0)) throw ConfigError("config: spline.avg_speed must be > 0");
  if (!(s.spline.yaw_rate_weight >= 0.0)) throw ConfigError("config: spline.yaw_rate_weight must be >= 0");
  return s;
}

std::string canonical_config(const Settings& settings) {
  std::map<std::string, std::string> sorted;
  for (const auto& e : entries()) sorted[e.key.name] = e.get(settings);
  std::string out = std::string("schema = ") + kConfigSchema + "\n";
  for (const auto& [k, v] : sorted) out += k + " = " + v + "\n";
  return out;
}

std::uint64_t config_hash(const Settings& settings) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : canonical_config(settings)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hash_hex(std::uint64_t hash) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash));
  return buf;
}

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> k;
    for (const auto& e : entries()) k.push_back(e.key);
    return k;
  }();
  return keys;
}

}  // namespace dragplan
