#pragma once

#include "nilmgp/data.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace nilmgp {

struct ApplianceState {
  std::string label;
  double power_watts = 0.0;
  double mean_dwell_minutes = 1.0;
};

/// Semi-Markov appliance: on entering a state it stays for a geometric number
/// of minutes with the state's mean dwell, then jumps according to the
/// transition row. duty_jitter scales each visit's mean dwell by a uniform
/// factor in [1 - jitter, 1 + jitter].
struct ApplianceModel {
  std::string name;
  std::vector<ApplianceState> states;
  Eigen::MatrixXd transition;  // row-stochastic, states x states
  double duty_jitter = 0.0;

  void validate() const;
};

struct SynthConfig {
  int n_homes = 3;
  int minutes_per_home = 5000;
  std::uint64_t seed = 7;
  std::vector<ApplianceModel> appliance_models;
  /// Standard deviation of optional Gaussian measurement noise on appliance
  /// channels (clamped at 0 W). Zero keeps every reading in the state set.
  double noise_std_watts = 0.0;
  std::int64_t start_epoch = 1303084800;  // minute aligned

  void validate() const;
};

/// Refrigerator (OFF 0 W / ON 188 W / DEFROST 300 W), dishwasher and microwave.
std::vector<ApplianceModel> default_appliance_models();
SynthConfig default_synth_config();

/// One home at minute resolution; mains is the exact sum of the appliances.
/// Deterministic per (seed, home_index).
Home generate_home(const SynthConfig& cfg, int home_index);
std::vector<Home> generate_homes(const SynthConfig& cfg);

/// Writes `home_<i>/` directories plus `manifest.txt` under `dir` and returns
/// the manifest path.
std::filesystem::path write_synthetic_dataset(const std::filesystem::path& dir,
                                              const SynthConfig& cfg);

}  // namespace nilmgp
