#pragma once

#include "nilmgp/data.hpp"
#include "nilmgp/features.hpp"
#include "nilmgp/metrics.hpp"
#include "nilmgp/model_io.hpp"
#include "nilmgp/synth.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace nilmgp {

struct GridSpec {
  std::vector<int> num_inducing{64, 128, 256};
  std::vector<double> learning_rate{1e-2, 1e-1};
  std::vector<int> epochs{100, 300};

  std::size_t size() const { return num_inducing.size() * learning_rate.size() * epochs.size(); }
  /// Cells in a fixed order: num_inducing outermost, epochs innermost.
  std::vector<TrainConfig> cells(std::uint64_t seed) const;
};

struct ExperimentConfig {
  std::filesystem::path manifest;  // empty: use the synthetic generator
  SynthConfig synth = default_synth_config();
  std::vector<ModelVariant> variants{ModelVariant::Point};
  int window_k = 49;
  std::vector<double> bias_watts{0.0};
  GridSpec grid;
  std::uint64_t seed = 0;
  std::filesystem::path output_dir = "nilmgp_out";
  std::string target = kRefrigerator;
  int workers = 1;
  bool clamp_negative = false;
  double validation_fraction = 0.2;

  void validate() const;
};

/// Flat `key = value` parsing; `#` starts a comment line. Later keys win.
std::map<std::string, std::string> parse_key_values(std::string_view text,
                                                    const std::string& source = "<memory>");
std::map<std::string, std::string> read_key_value_file(const std::filesystem::path& path);

/// Applies recognised keys (see README for the list); unknown keys are a
/// ConfigError so typos do not silently fall back to defaults.
void apply_config(ExperimentConfig& cfg, const std::map<std::string, std::string>& values);

/// Training rows for one variant: features on each home's (unbiased) mains,
/// targets from the target appliance at the same timestamps, homes stacked in
/// order.
struct TrainingSet {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
};

TrainingSet build_training_set(const std::vector<const Home*>& homes, ModelVariant variant,
                               const WindowConfig& window, const std::string& target);

struct GridSearchOutcome {
  TrainConfig best;
  std::vector<double> validation_mae;  // per cell, same order as GridSpec::cells
};

/// Fits every grid cell on the leading (1 - validation_fraction) of the rows
/// and scores it by MAE on the trailing slice. A single-cell grid is returned
/// without fitting.
GridSearchOutcome grid_search(const TrainingSet& data, const KernelSpec& spec, const GridSpec& grid,
                              std::uint64_t seed, double validation_fraction);

/// Grid search followed by a refit on all training rows.
TrainedModel train_variant(const std::vector<const Home*>& homes, ModelVariant variant,
                           const WindowConfig& window, const std::string& target,
                           const GridSpec& grid, std::uint64_t seed, double validation_fraction);

/// Predictions for one home's mains with an optional constant load added.
/// `truth` receives the target appliance readings at the predicted timestamps.
PredictiveDistribution predict_home(const TrainedModel& model, const Home& home,
                                    double bias_watts, std::vector<double>* truth,
                                    bool clamp_negative = false);

/// Predictions CSV: `timestamp,mean_watts,variance_watts2,truth_watts`.
void write_predictions_csv(const std::filesystem::path& path, const PredictiveDistribution& pred,
                           const std::vector<double>& truth);
PredictiveDistribution read_predictions_csv(const std::filesystem::path& path,
                                            std::vector<double>& truth);

struct RunRecord {
  ModelVariant variant = ModelVariant::Point;
  double bias_watts = 0.0;
  std::string fold;  // test home id, or "mean" for the fold average
  MetricsReport metrics;

  bool operator==(const RunRecord&) const;
};

/// Flat key=value metrics file with keys
/// mae, msll, ce95, ece, n_points, variant, bias_watts, fold.
void write_metrics_file(const std::filesystem::path& path, const RunRecord& record);
RunRecord read_metrics_file(const std::filesystem::path& path);

/// Machine-readable table of records (CSV with round-trip precision).
void write_report(const std::filesystem::path& path, const std::vector<RunRecord>& records);
std::vector<RunRecord> read_report(const std::filesystem::path& path);

/// Aligned text table: one row per variant, MAE / MSLL / CE(95%) / ECE per
/// bias condition. Only fold-average ("mean") records are tabulated when any
/// are present.
std::string emit_table(const std::vector<RunRecord>& records);

struct ExperimentResult {
  std::vector<RunRecord> fold_records;
  std::vector<RunRecord> mean_records;
  std::vector<std::string> model_json;  // per (variant, fold), in job order
  std::vector<std::filesystem::path> files;
};

/// Leave-one-home-out protocol over every configured variant and bias.
/// Training never sees the bias or the test home; each (variant, fold) model
/// is evaluated under every bias condition.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

/// Stable per-job seed derived from the experiment seed.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t salt);

std::string format_number(double value);

}  // namespace nilmgp
