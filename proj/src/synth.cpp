#include "nilmgp/synth.hpp"

#include "nilmgp/errors.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace nilmgp {

namespace {

std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

ApplianceModel make_model(std::string name, std::vector<ApplianceState> states,
                          std::vector<std::vector<double>> rows, double jitter) {
  ApplianceModel model;
  model.name = std::move(name);
  model.states = std::move(states);
  const auto n = static_cast<Eigen::Index>(rows.size());
  model.transition.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      model.transition(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    }
  }
  model.duty_jitter = jitter;
  return model;
}

std::vector<double> simulate(const ApplianceModel& model, int minutes, std::mt19937_64& rng) {
  std::vector<double> trace;
  trace.reserve(static_cast<std::size_t>(minutes));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  int state = 0;
  while (static_cast<int>(trace.size()) < minutes) {
    const auto& s = model.states[static_cast<std::size_t>(state)];
    const double scale = 1.0 + model.duty_jitter * (2.0 * unit(rng) - 1.0);
    const double mean_dwell = std::max(1.0, s.mean_dwell_minutes * scale);
    std::geometric_distribution<int> extra(1.0 / mean_dwell);
    const int dwell = 1 + extra(rng);
    for (int i = 0; i < dwell && static_cast<int>(trace.size()) < minutes; ++i) {
      trace.push_back(s.power_watts);
    }
    const double u = unit(rng);
    double acc = 0.0;
    int next = static_cast<int>(model.states.size()) - 1;
    for (Eigen::Index j = 0; j < model.transition.cols(); ++j) {
      acc += model.transition(state, j);
      if (u < acc) {
        next = static_cast<int>(j);
        break;
      }
    }
    state = next;
  }
  return trace;
}

}  // namespace

void ApplianceModel::validate() const {
  if (states.empty()) throw ConfigError("appliance '" + name + "' has no states");
  const auto n = static_cast<Eigen::Index>(states.size());
  if (transition.rows() != n || transition.cols() != n) {
    throw ConfigError("appliance '" + name + "' transition matrix has the wrong shape");
  }
  for (const auto& s : states) {
    if (!(s.power_watts >= 0.0)) throw ConfigError("appliance '" + name + "' has negative power");
    if (!(s.mean_dwell_minutes >= 1.0)) {
      throw ConfigError("appliance '" + name + "' dwell must be at least one minute");
    }
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    if ((transition.row(i).array() < 0.0).any() ||
        std::abs(transition.row(i).sum() - 1.0) > 1e-9) {
      throw ConfigError("appliance '" + name + "' transition rows must be stochastic");
    }
  }
  if (!(duty_jitter >= 0.0 && duty_jitter < 1.0)) {
    throw ConfigError("appliance '" + name + "' duty_jitter must lie in [0, 1)");
  }
}

void SynthConfig::validate() const {
  if (n_homes < 2) throw ConfigError("synthetic dataset needs at least two homes");
  if (minutes_per_home < 500) throw ConfigError("synthetic homes need at least 500 minutes");
  if (!(noise_std_watts >= 0.0)) throw ConfigError("noise_std_watts must be non-negative");
  if (start_epoch % 60 != 0) throw ConfigError("start_epoch must be minute aligned");
  for (const auto& m : appliance_models) m.validate();
  for (const auto& name : aggregate_appliances()) {
    const bool present = std::any_of(appliance_models.begin(), appliance_models.end(),
                                     [&](const auto& m) { return m.name == name; });
    if (!present) throw ConfigError("synthetic config lacks a '" + name + "' model");
  }
}

std::vector<ApplianceModel> default_appliance_models() {
  // Refrigerator compressor cycles of roughly half an hour with occasional
  // defrost. The dishwasher's pump draws what the fridge compressor does and
  // the microwave's low setting matches the defrost heater, so a single mains
  // reading is ambiguous and context has to resolve it. The dishwasher runs
  // often enough (pump about a fifth of the time) for that to matter.
  return {
      make_model(kRefrigerator,
                 {{"off", 0.0, 22.0}, {"on", 188.0, 18.0}, {"defrost", 300.0, 14.0}},
                 {{0.0, 1.0, 0.0}, {0.9, 0.0, 0.1}, {1.0, 0.0, 0.0}}, 0.2),
      make_model(kDishwasher,
                 {{"off", 0.0, 150.0}, {"pump", 188.0, 20.0}, {"heat", 1150.0, 16.0}},
                 {{0.0, 1.0, 0.0}, {0.5, 0.0, 0.5}, {0.0, 1.0, 0.0}}, 0.3),
      make_model(kMicrowave,
                 {{"off", 0.0, 180.0}, {"high", 1450.0, 3.0}, {"low", 300.0, 6.0}},
                 {{0.0, 0.6, 0.4}, {1.0, 0.0, 0.0}, {1.0, 0.0, 0.0}}, 0.3),
  };
}

SynthConfig default_synth_config() {
  SynthConfig cfg;
  cfg.appliance_models = default_appliance_models();
  return cfg;
}

Home generate_home(const SynthConfig& cfg, int home_index) {
  cfg.validate();
  if (home_index < 0) throw ConfigError("home index must be non-negative");
  Home home;
  home.home_id = "home_" + std::to_string(home_index + 1);
  std::vector<std::int64_t> timestamps(static_cast<std::size_t>(cfg.minutes_per_home));
  for (std::size_t i = 0; i < timestamps.size(); ++i) {
    timestamps[i] = cfg.start_epoch + 60 * static_cast<std::int64_t>(i);
  }
  std::vector<double> total(timestamps.size(), 0.0);
  const std::uint64_t home_seed = mix(mix(cfg.seed) ^ static_cast<std::uint64_t>(home_index));
  for (std::size_t a = 0; a < cfg.appliance_models.size(); ++a) {
    const auto& model = cfg.appliance_models[a];
    std::mt19937_64 rng(mix(home_seed + a));
    std::vector<double> trace = simulate(model, cfg.minutes_per_home, rng);
    if (cfg.noise_std_watts > 0.0) {
      std::normal_distribution<double> noise(0.0, cfg.noise_std_watts);
      for (double& w : trace) w = std::max(0.0, w + noise(rng));
    }
    for (std::size_t i = 0; i < trace.size(); ++i) total[i] += trace[i];
    home.appliances[model.name] = PowerSeries{timestamps, std::move(trace), model.name};
  }
  home.mains = PowerSeries{timestamps, std::move(total), kMains};
  return home;
}

std::vector<Home> generate_homes(const SynthConfig& cfg) {
  std::vector<Home> homes;
  for (int i = 0; i < cfg.n_homes; ++i) homes.push_back(generate_home(cfg, i));
  return homes;
}

std::filesystem::path write_synthetic_dataset(const std::filesystem::path& dir,
                                              const SynthConfig& cfg) {
  std::vector<std::filesystem::path> entries;
  for (const auto& home : generate_homes(cfg)) {
    write_home(dir / home.home_id, home);
    entries.emplace_back(home.home_id);
  }
  const auto manifest = dir / "manifest.txt";
  write_manifest(manifest, entries);
  return manifest;
}

}  // namespace nilmgp
