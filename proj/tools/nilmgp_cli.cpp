// nilmgp command-line driver.
//
// Exit codes: 0 success, 1 unexpected failure, 2 bad configuration or usage,
// 3 unreadable or malformed data, 4 numerical failure.

#include "nilmgp/errors.hpp"
#include "nilmgp/experiment.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <map>
#include <optional>
#include <string>

namespace fs = std::filesystem;
using namespace nilmgp;

namespace {

// Flags that map onto experiment config keys. Values given on the command
// line replace the same key from --config.
struct ConfigFlags {
  std::string config_file;
  std::map<std::string, std::string> overrides;

  void add(CLI::App* cmd, const std::string& flag, const std::string& key, const std::string& help) {
    cmd->add_option_function<std::string>(
        flag, [this, key](const std::string& v) { overrides[key] = v; }, help);
  }

  void add_common(CLI::App* cmd) {
    cmd->add_option("--config", config_file, "key = value config file");
    add(cmd, "--manifest", "manifest", "manifest listing home directories (default: synthetic homes)");
    add(cmd, "--variant", "variant",
        "point, seq2point, seq2point_linear, features, features_linear (comma list for experiment)");
    add(cmd, "--window-k", "window_k", "window half width k (length 2k+1)");
    add(cmd, "--seed", "seed", "training seed");
    add(cmd, "--target", "target", "target appliance (default refrigerator)");
    add(cmd, "--grid-inducing", "grid_inducing", "comma list of inducing point counts");
    add(cmd, "--grid-learning-rate", "grid_learning_rate", "comma list of learning rates");
    add(cmd, "--grid-epochs", "grid_epochs", "comma list of epoch counts");
    add(cmd, "--validation-fraction", "validation_fraction", "grid-search validation tail fraction");
    add(cmd, "--synth-homes", "synth_homes", "synthetic homes when no manifest is given");
    add(cmd, "--synth-minutes", "synth_minutes", "synthetic minutes per home");
    add(cmd, "--synth-seed", "synth_seed", "synthetic generator seed");
  }

  ExperimentConfig resolve() const {
    std::map<std::string, std::string> kv;
    if (!config_file.empty()) kv = read_key_value_file(config_file);
    for (const auto& [k, v] : overrides) kv[k] = v;
    ExperimentConfig cfg;
    apply_config(cfg, kv);
    return cfg;
  }
};

std::vector<Home> prepared_homes(const ExperimentConfig& cfg) {
  std::vector<Home> raw = cfg.manifest.empty() ? generate_homes(cfg.synth) : load_homes(cfg.manifest);
  std::vector<Home> out;
  for (const auto& h : raw) out.push_back(prepare_home(h));
  return out;
}

const Home& find_home(const std::vector<Home>& homes, const std::string& id) {
  for (const auto& h : homes) {
    if (h.home_id == id) return h;
  }
  throw InputError("no home '" + id + "' in the data set");
}

std::vector<std::string> split_ids(const std::string& text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = text.find(',', start);
    const auto piece = text.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    if (!piece.empty()) out.push_back(piece);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

void print_metrics(const MetricsReport& m) {
  std::cout << "mae = " << format_number(m.mae) << "\nmsll = " << format_number(m.msll)
            << "\nce95 = " << format_number(m.ce95) << "\nece = " << format_number(m.ece)
            << "\nn_points = " << m.n_points << '\n';
}

int report_error(const std::exception& e, int code) {
  std::cerr << "nilmgp: error: " << e.what() << '\n';
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gaussian-process energy disaggregation toolkit"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "write synthetic homes and a manifest");
  fs::path synth_out;
  SynthConfig synth_cfg = default_synth_config();
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--homes", synth_cfg.n_homes, "number of homes")->capture_default_str();
  synth->add_option("--minutes", synth_cfg.minutes_per_home, "minutes per home")->capture_default_str();
  synth->add_option("--seed", synth_cfg.seed, "generator seed")->capture_default_str();
  synth->add_option("--noise-watts", synth_cfg.noise_std_watts, "Gaussian noise on appliance channels");

  // prepare
  auto* prepare = app.add_subcommand("prepare", "resample homes to minutes and rebuild mains");
  fs::path prepare_manifest;
  fs::path prepare_out;
  prepare->add_option("--manifest", prepare_manifest, "input manifest")->required();
  prepare->add_option("--out", prepare_out, "output directory")->required();

  // train
  auto* train = app.add_subcommand("train", "fit one variant on a set of homes");
  ConfigFlags train_flags;
  train_flags.add_common(train);
  std::string train_homes;
  fs::path train_out;
  train->add_option("--homes", train_homes, "comma list of training home ids (default: all)");
  train->add_option("--out", train_out, "model JSON path")->required();

  // predict
  auto* predict_cmd = app.add_subcommand("predict", "predict a home's target appliance");
  fs::path predict_model;
  fs::path predict_manifest;
  std::string predict_home_id;
  double predict_bias = 0.0;
  bool predict_clamp = false;
  fs::path predict_out;
  SynthConfig predict_synth = default_synth_config();
  predict_cmd->add_option("--model", predict_model, "model JSON")->required();
  predict_cmd->add_option("--manifest", predict_manifest, "manifest (default: synthetic homes)");
  predict_cmd->add_option("--synth-seed", predict_synth.seed, "synthetic generator seed");
  predict_cmd->add_option("--synth-homes", predict_synth.n_homes, "synthetic homes");
  predict_cmd->add_option("--synth-minutes", predict_synth.minutes_per_home, "synthetic minutes per home");
  predict_cmd->add_option("--home", predict_home_id, "home id")->required();
  predict_cmd->add_option("--bias-watts", predict_bias, "constant load added to the test mains");
  predict_cmd->add_flag("--clamp-negative", predict_clamp, "clamp predicted means at 0 W");
  predict_cmd->add_option("--out", predict_out, "predictions CSV")->required();

  // evaluate
  auto* evaluate_cmd = app.add_subcommand("evaluate", "metrics for a predictions CSV");
  fs::path evaluate_in;
  fs::path evaluate_out;
  std::string evaluate_variant = "point";
  double evaluate_bias = 0.0;
  std::string evaluate_fold = "-";
  evaluate_cmd->add_option("--predictions", evaluate_in, "predictions CSV")->required();
  evaluate_cmd->add_option("--out", evaluate_out, "metrics file");
  evaluate_cmd->add_option("--variant", evaluate_variant, "variant label for the metrics file");
  evaluate_cmd->add_option("--bias-watts", evaluate_bias, "bias label for the metrics file");
  evaluate_cmd->add_option("--fold", evaluate_fold, "fold label for the metrics file");

  // calibration
  auto* calibration = app.add_subcommand("calibration", "reliability curve for a predictions CSV");
  fs::path calibration_in;
  fs::path calibration_out;
  std::vector<double> calibration_levels = ece_levels();
  calibration->add_option("--predictions", calibration_in, "predictions CSV")->required();
  calibration->add_option("--out", calibration_out, "reliability CSV")->required();
  calibration->add_option("--levels", calibration_levels, "nominal levels in (0,1)")->delimiter(',');

  // experiment
  auto* experiment = app.add_subcommand("experiment", "leave-one-home-out protocol");
  ConfigFlags experiment_flags;
  experiment_flags.add_common(experiment);
  experiment_flags.add(experiment, "--bias-watts", "bias_watts", "comma list of test-mains biases");
  experiment_flags.add(experiment, "--out", "output_dir", "output directory");
  experiment_flags.add(experiment, "--workers", "workers", "concurrent jobs");
  experiment_flags.add(experiment, "--clamp-negative", "clamp_negative", "true/false");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*synth) {
      const auto manifest = write_synthetic_dataset(synth_out, synth_cfg);
      std::cout << manifest.string() << '\n';
    } else if (*prepare) {
      std::vector<fs::path> dirs;
      for (const auto& raw : load_homes(prepare_manifest)) {
        const Home home = prepare_home(raw);
        write_home(prepare_out / home.home_id, home);
        dirs.push_back(home.home_id);
      }
      write_manifest(prepare_out / "manifest.txt", dirs);
      std::cout << (prepare_out / "manifest.txt").string() << '\n';
    } else if (*train) {
      const ExperimentConfig cfg = train_flags.resolve();
      if (cfg.variants.size() != 1) throw ConfigError("train takes exactly one --variant");
      cfg.validate();
      const auto homes = prepared_homes(cfg);
      std::vector<const Home*> selected;
      if (train_homes.empty()) {
        for (const auto& h : homes) selected.push_back(&h);
      } else {
        for (const auto& id : split_ids(train_homes)) selected.push_back(&find_home(homes, id));
      }
      const TrainedModel model =
          train_variant(selected, cfg.variants.front(), WindowConfig{cfg.window_k}, cfg.target,
                        cfg.grid, cfg.seed, cfg.validation_fraction);
      save_model(train_out, model);
      std::cout << train_out.string() << '\n';
    } else if (*predict_cmd) {
      const TrainedModel model = load_model(predict_model);
      std::vector<Home> raw =
          predict_manifest.empty() ? generate_homes(predict_synth) : load_homes(predict_manifest);
      std::vector<Home> homes;
      for (const auto& h : raw) homes.push_back(prepare_home(h));
      std::vector<double> truth;
      const auto pred =
          predict_home(model, find_home(homes, predict_home_id), predict_bias, &truth, predict_clamp);
      write_predictions_csv(predict_out, pred, truth);
      std::cout << predict_out.string() << '\n';
    } else if (*evaluate_cmd) {
      std::vector<double> truth;
      const auto pred = read_predictions_csv(evaluate_in, truth);
      const RunRecord record{parse_variant(evaluate_variant), evaluate_bias, evaluate_fold,
                             evaluate(pred, truth)};
      if (!evaluate_out.empty()) write_metrics_file(evaluate_out, record);
      print_metrics(record.metrics);
    } else if (*calibration) {
      std::vector<double> truth;
      const auto pred = read_predictions_csv(calibration_in, truth);
      write_reliability_csv(calibration_out, reliability_curve(pred, truth, calibration_levels));
      std::cout << calibration_out.string() << '\n';
    } else if (*experiment) {
      const ExperimentConfig cfg = experiment_flags.resolve();
      const auto result = run_experiment(cfg);
      std::cout << emit_table(result.mean_records);
      std::cout << "report: " << (cfg.output_dir / "report.csv").string() << '\n';
    }
  } catch (const ConfigError& e) {
    return report_error(e, 2);
  } catch (const InputError& e) {
    return report_error(e, 3);
  } catch (const ParseError& e) {
    return report_error(e, 3);
  } catch (const DataError& e) {
    return report_error(e, 3);
  } catch (const NumericalError& e) {
    return report_error(e, 4);
  } catch (const std::exception& e) {
    return report_error(e, 1);
  }
  return 0;
}
