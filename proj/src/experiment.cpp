#include "nilmgp/experiment.hpp"

#include "nilmgp/errors.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <charconv>
#include <cmath>
#include <exception>
#include <fstream>
#include <iomanip>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

namespace nilmgp {

namespace fs = std::filesystem;

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split_list(std::string_view text) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto comma = text.find(',', pos);
    const auto item = trim(text.substr(pos, comma == std::string_view::npos ? text.npos : comma - pos));
    if (!item.empty()) out.emplace_back(item);
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return out;
}

double parse_real(const std::string& key, std::string_view text) {
  text = trim(text);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size() || !std::isfinite(value)) {
    throw ConfigError("config key '" + key + "': '" + std::string(text) + "' is not a number");
  }
  return value;
}

long long parse_integer(const std::string& key, std::string_view text) {
  text = trim(text);
  long long value = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw ConfigError("config key '" + key + "': '" + std::string(text) + "' is not an integer");
  }
  return value;
}

bool parse_bool(const std::string& key, std::string_view text) {
  text = trim(text);
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw ConfigError("config key '" + key + "': '" + std::string(text) + "' is not a boolean");
}

template <typename T, typename Parse>
std::vector<T> parse_list(const std::string& key, const std::string& text, Parse parse) {
  std::vector<T> out;
  for (const auto& item : split_list(text)) out.push_back(static_cast<T>(parse(key, item)));
  if (out.empty()) throw ConfigError("config key '" + key + "' needs at least one value");
  return out;
}

void write_atomic(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write '" + tmp.string() + "'");
    out << content;
    if (!out) throw InputError("write to '" + tmp.string() + "' failed");
  }
  fs::rename(tmp, path);
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read '" + path.string() + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

// Rethrows the active exception with context, keeping its category.
[[noreturn]] void rethrow_with_context(const std::string& context) {
  try {
    throw;
  } catch (const InputError& e) {
    throw InputError(context + ": " + e.what());
  } catch (const ConfigError& e) {
    throw ConfigError(context + ": " + e.what());
  } catch (const NumericalError& e) {
    throw NumericalError(context + ": " + e.what());
  } catch (const ParseError& e) {
    throw ParseError(context + ": " + e.what());
  } catch (const DataError& e) {
    throw DataError(context + ": " + e.what());
  } catch (const std::exception& e) {
    throw Error(context + ": " + e.what());
  }
}

std::string metrics_text(const RunRecord& r) {
  std::ostringstream out;
  out << "mae = " << format_number(r.metrics.mae) << '\n'
      << "msll = " << format_number(r.metrics.msll) << '\n'
      << "ce95 = " << format_number(r.metrics.ce95) << '\n'
      << "ece = " << format_number(r.metrics.ece) << '\n'
      << "n_points = " << r.metrics.n_points << '\n'
      << "variant = " << to_string(r.variant) << '\n'
      << "bias_watts = " << format_number(r.bias_watts) << '\n'
      << "fold = " << r.fold << '\n';
  return out.str();
}

const std::string& require_key(const std::map<std::string, std::string>& kv, const std::string& key,
                               const std::string& source) {
  const auto it = kv.find(key);
  if (it == kv.end()) throw ParseError(source + ": missing key '" + key + "'");
  return it->second;
}

}  // namespace

std::string format_number(double value) {
  std::array<char, 64> buf{};
  const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  return std::string(buf.data(), ptr);
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t salt) {
  std::uint64_t x = base ^ (salt * 0x9e3779b97f4a7c15ULL);
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::vector<TrainConfig> GridSpec::cells(std::uint64_t seed) const {
  std::vector<TrainConfig> out;
  for (int m : num_inducing) {
    for (double lr : learning_rate) {
      for (int e : epochs) out.push_back(TrainConfig{m, lr, e, seed});
    }
  }
  return out;
}

void ExperimentConfig::validate() const {
  if (variants.empty()) throw ConfigError("no model variants configured");
  if (bias_watts.empty()) throw ConfigError("no bias conditions configured");
  if (grid.size() == 0) throw ConfigError("grid lists must be non-empty");
  for (int m : grid.num_inducing) if (m < 1) throw ConfigError("grid num_inducing must be >= 1");
  for (double lr : grid.learning_rate) if (!(lr > 0.0)) throw ConfigError("grid learning_rate must be > 0");
  for (int e : grid.epochs) if (e < 1) throw ConfigError("grid epochs must be >= 1");
  if (window_k < 0) throw ConfigError("window_k must be non-negative");
  for (auto v : variants) {
    if ((v == ModelVariant::Seq2Point || v == ModelVariant::Seq2PointLinear) && window_k < 1) {
      throw ConfigError(to_string(v) + " requires window_k >= 1");
    }
  }
  if (workers < 1) throw ConfigError("workers must be >= 1");
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) {
    throw ConfigError("validation_fraction must lie in (0, 1)");
  }
  if (manifest.empty()) synth.validate();
}

std::map<std::string, std::string> parse_key_values(std::string_view text, const std::string& source) {
  std::map<std::string, std::string> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto eol = text.find('\n', pos);
    const auto line = trim(text.substr(pos, eol == std::string_view::npos ? text.npos : eol - pos));
    pos = eol == std::string_view::npos ? text.size() + 1 : eol + 1;
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ParseError(source + ":" + std::to_string(line_no) + ": expected 'key = value'");
    }
    const auto key = trim(line.substr(0, eq));
    if (key.empty()) throw ParseError(source + ":" + std::to_string(line_no) + ": empty key");
    out[std::string(key)] = std::string(trim(line.substr(eq + 1)));
  }
  return out;
}

std::map<std::string, std::string> read_key_value_file(const fs::path& path) {
  return parse_key_values(read_text(path), path.string());
}

void apply_config(ExperimentConfig& cfg, const std::map<std::string, std::string>& values) {
  for (const auto& [key, value] : values) {
    if (key == "manifest") {
      cfg.manifest = value;
    } else if (key == "synth_homes") {
      cfg.synth.n_homes = static_cast<int>(parse_integer(key, value));
    } else if (key == "synth_minutes") {
      cfg.synth.minutes_per_home = static_cast<int>(parse_integer(key, value));
    } else if (key == "synth_seed") {
      cfg.synth.seed = static_cast<std::uint64_t>(parse_integer(key, value));
    } else if (key == "synth_noise_watts") {
      cfg.synth.noise_std_watts = parse_real(key, value);
    } else if (key == "variant") {
      cfg.variants.clear();
      for (const auto& name : split_list(value)) cfg.variants.push_back(parse_variant(name));
    } else if (key == "window_k") {
      cfg.window_k = static_cast<int>(parse_integer(key, value));
    } else if (key == "bias_watts") {
      cfg.bias_watts = parse_list<double>(key, value, parse_real);
    } else if (key == "grid_inducing") {
      cfg.grid.num_inducing = parse_list<int>(key, value, parse_integer);
    } else if (key == "grid_learning_rate") {
      cfg.grid.learning_rate = parse_list<double>(key, value, parse_real);
    } else if (key == "grid_epochs") {
      cfg.grid.epochs = parse_list<int>(key, value, parse_integer);
    } else if (key == "seed") {
      cfg.seed = static_cast<std::uint64_t>(parse_integer(key, value));
    } else if (key == "out" || key == "output_dir") {
      cfg.output_dir = value;
    } else if (key == "target") {
      const auto canonical = canonical_channel_name(value);
      if (!canonical || *canonical == kMains) throw ConfigError("unknown target appliance '" + value + "'");
      cfg.target = *canonical;
    } else if (key == "workers") {
      cfg.workers = static_cast<int>(parse_integer(key, value));
    } else if (key == "clamp_negative") {
      cfg.clamp_negative = parse_bool(key, value);
    } else if (key == "validation_fraction") {
      cfg.validation_fraction = parse_real(key, value);
    } else {
      throw ConfigError("unknown config key '" + key + "'");
    }
  }
}

TrainingSet build_training_set(const std::vector<const Home*>& homes, ModelVariant variant,
                               const WindowConfig& window, const std::string& target) {
  std::vector<FeatureMatrix> blocks;
  std::vector<std::vector<double>> targets;
  Eigen::Index rows = 0;
  for (const Home* home : homes) {
    blocks.push_back(build_features(variant, home->mains, window));
    targets.push_back(align_to(home->appliance(target), blocks.back().timestamps).watts);
    rows += blocks.back().size();
  }
  if (blocks.empty()) throw ConfigError("no training homes");
  TrainingSet set;
  set.X.resize(rows, blocks.front().dim());
  set.y.resize(rows);
  Eigen::Index offset = 0;
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const auto n = blocks[b].size();
    set.X.middleRows(offset, n) = blocks[b].rows;
    set.y.segment(offset, n) =
        Eigen::Map<const Eigen::VectorXd>(targets[b].data(), static_cast<Eigen::Index>(targets[b].size()));
    offset += n;
  }
  return set;
}

GridSearchOutcome grid_search(const TrainingSet& data, const KernelSpec& spec, const GridSpec& grid,
                              std::uint64_t seed, double validation_fraction) {
  const auto cells = grid.cells(seed);
  if (cells.empty()) throw ConfigError("empty hyperparameter grid");
  GridSearchOutcome outcome;
  if (cells.size() == 1) {
    outcome.best = cells.front();
    outcome.validation_mae.push_back(std::numeric_limits<double>::quiet_NaN());
    return outcome;
  }
  const Eigen::Index n = data.X.rows();
  const auto n_val = static_cast<Eigen::Index>(std::floor(static_cast<double>(n) * validation_fraction));
  const Eigen::Index n_fit = n - n_val;
  if (n_val < 1 || n_fit < 1) throw ConfigError("training set too small for a validation split");
  const Eigen::MatrixXd X_fit = data.X.topRows(n_fit);
  const Eigen::VectorXd y_fit = data.y.head(n_fit);
  const Eigen::MatrixXd X_val = data.X.bottomRows(n_val);
  const Eigen::VectorXd y_val = data.y.tail(n_val);

  double best = std::numeric_limits<double>::infinity();
  for (const auto& cell : cells) {
    double score = std::numeric_limits<double>::infinity();
    if (cell.num_inducing <= n_fit) {
      const auto model = fit(X_fit, y_fit, spec, cell);
      const auto pred = predict(model, X_val);
      score = mae(pred, std::span<const double>(y_val.data(), static_cast<std::size_t>(y_val.size())));
    }
    outcome.validation_mae.push_back(score);
    if (score < best) {
      best = score;
      outcome.best = cell;
    }
  }
  if (!std::isfinite(best)) {
    throw ConfigError("no grid cell fits: every num_inducing exceeds the training rows");
  }
  return outcome;
}

TrainedModel train_variant(const std::vector<const Home*>& homes, ModelVariant variant,
                           const WindowConfig& window, const std::string& target,
                           const GridSpec& grid, std::uint64_t seed, double validation_fraction) {
  const TrainingSet data = build_training_set(homes, variant, window, target);
  const KernelSpec spec = kernel_for(variant, static_cast<int>(data.X.cols()));
  TrainedModel model;
  model.variant = variant;
  model.window = window;
  model.target = target;
  model.train_config = grid_search(data, spec, grid, seed, validation_fraction).best;
  model.gp = fit(data.X, data.y, spec, model.train_config);
  return model;
}

PredictiveDistribution predict_home(const TrainedModel& model, const Home& home, double bias_watts,
                                    std::vector<double>* truth, bool clamp_negative) {
  const PowerSeries mains = inject_bias(home.mains, bias_watts);
  const FeatureMatrix features = build_features(model.variant, mains, model.window);
  PredictiveDistribution pred = predict(model.gp, features.rows);
  pred.timestamps = features.timestamps;
  if (clamp_negative) {
    for (double& m : pred.mean) m = std::max(0.0, m);
  }
  if (truth) *truth = align_to(home.appliance(model.target), features.timestamps).watts;
  return pred;
}

void write_predictions_csv(const fs::path& path, const PredictiveDistribution& pred,
                           const std::vector<double>& truth) {
  if (pred.mean.size() != truth.size() || pred.variance.size() != truth.size() ||
      pred.timestamps.size() != truth.size()) {
    throw InputError("prediction columns differ in length");
  }
  std::ostringstream out;
  out << "timestamp,mean_watts,variance_watts2,truth_watts\n";
  for (std::size_t i = 0; i < truth.size(); ++i) {
    out << pred.timestamps[i] << ',' << format_number(pred.mean[i]) << ','
        << format_number(pred.variance[i]) << ',' << format_number(truth[i]) << '\n';
  }
  write_atomic(path, out.str());
}

PredictiveDistribution read_predictions_csv(const fs::path& path, std::vector<double>& truth) {
  const std::string text = read_text(path);
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || trim(line) != "timestamp,mean_watts,variance_watts2,truth_watts") {
    throw ParseError(path.string() + ":1: unexpected predictions header");
  }
  PredictiveDistribution pred;
  truth.clear();
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cols = split_list(line);
    const std::string where = path.string() + ":" + std::to_string(line_no);
    if (cols.size() != 4) throw ParseError(where + ": expected 4 columns");
    try {
      pred.timestamps.push_back(parse_integer("timestamp", cols[0]));
      pred.mean.push_back(parse_real("mean_watts", cols[1]));
      pred.variance.push_back(parse_real("variance_watts2", cols[2]));
      truth.push_back(parse_real("truth_watts", cols[3]));
    } catch (const ConfigError& e) {
      throw ParseError(where + ": " + e.what());
    }
  }
  return pred;
}

bool RunRecord::operator==(const RunRecord& o) const {
  return variant == o.variant && bias_watts == o.bias_watts && fold == o.fold &&
         metrics.mae == o.metrics.mae && metrics.msll == o.metrics.msll &&
         metrics.ce95 == o.metrics.ce95 && metrics.ece == o.metrics.ece &&
         metrics.n_points == o.metrics.n_points;
}

void write_metrics_file(const fs::path& path, const RunRecord& record) {
  write_atomic(path, metrics_text(record));
}

RunRecord read_metrics_file(const fs::path& path) {
  const auto kv = read_key_value_file(path);
  const std::string source = path.string();
  RunRecord r;
  try {
    r.metrics.mae = parse_real("mae", require_key(kv, "mae", source));
    r.metrics.msll = parse_real("msll", require_key(kv, "msll", source));
    r.metrics.ce95 = parse_real("ce95", require_key(kv, "ce95", source));
    r.metrics.ece = parse_real("ece", require_key(kv, "ece", source));
    r.metrics.n_points = static_cast<long>(parse_integer("n_points", require_key(kv, "n_points", source)));
    r.variant = parse_variant(require_key(kv, "variant", source));
    r.bias_watts = parse_real("bias_watts", require_key(kv, "bias_watts", source));
  } catch (const ConfigError& e) {
    throw ParseError(source + ": " + e.what());
  }
  r.fold = require_key(kv, "fold", source);
  return r;
}

void write_report(const fs::path& path, const std::vector<RunRecord>& records) {
  std::ostringstream out;
  out << "variant,bias_watts,fold,mae,msll,ce95,ece,n_points\n";
  for (const auto& r : records) {
    out << to_string(r.variant) << ',' << format_number(r.bias_watts) << ',' << r.fold << ','
        << format_number(r.metrics.mae) << ',' << format_number(r.metrics.msll) << ','
        << format_number(r.metrics.ce95) << ',' << format_number(r.metrics.ece) << ','
        << r.metrics.n_points << '\n';
  }
  write_atomic(path, out.str());
}

std::vector<RunRecord> read_report(const fs::path& path) {
  const std::string text = read_text(path);
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || trim(line) != "variant,bias_watts,fold,mae,msll,ce95,ece,n_points") {
    throw ParseError(path.string() + ":1: unexpected report header");
  }
  std::vector<RunRecord> records;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cols = split_list(line);
    const std::string where = path.string() + ":" + std::to_string(line_no);
    if (cols.size() != 8) throw ParseError(where + ": expected 8 columns");
    RunRecord r;
    try {
      r.variant = parse_variant(cols[0]);
      r.bias_watts = parse_real("bias_watts", cols[1]);
      r.fold = cols[2];
      r.metrics.mae = parse_real("mae", cols[3]);
      r.metrics.msll = parse_real("msll", cols[4]);
      r.metrics.ce95 = parse_real("ce95", cols[5]);
      r.metrics.ece = parse_real("ece", cols[6]);
      r.metrics.n_points = static_cast<long>(parse_integer("n_points", cols[7]));
    } catch (const ConfigError& e) {
      throw ParseError(where + ": " + e.what());
    }
    records.push_back(std::move(r));
  }
  return records;
}

std::string emit_table(const std::vector<RunRecord>& records) {
  if (records.empty()) return {};
  const bool has_mean = std::any_of(records.begin(), records.end(),
                                    [](const auto& r) { return r.fold == "mean"; });
  std::vector<const RunRecord*> rows;
  for (const auto& r : records) {
    if (!has_mean || r.fold == "mean") rows.push_back(&r);
  }
  std::vector<double> biases;
  std::vector<std::pair<ModelVariant, std::string>> row_keys;
  for (const auto* r : rows) {
    if (std::find(biases.begin(), biases.end(), r->bias_watts) == biases.end()) {
      biases.push_back(r->bias_watts);
    }
    const std::pair<ModelVariant, std::string> key{r->variant, has_mean ? std::string() : r->fold};
    if (std::find(row_keys.begin(), row_keys.end(), key) == row_keys.end()) row_keys.push_back(key);
  }
  std::sort(biases.begin(), biases.end());

  constexpr int label_width = 28;
  constexpr int col = 9;
  std::ostringstream out;
  out << std::left << std::setw(label_width) << "Model";
  for (double b : biases) {
    std::string head = "bias " + format_number(b) + " W";
    out << " | " << std::left << std::setw(4 * col) << head;
  }
  out << '\n' << std::left << std::setw(label_width) << "";
  for (std::size_t i = 0; i < biases.size(); ++i) {
    out << " | " << std::right << std::setw(col) << "MAE" << std::setw(col) << "MSLL"
        << std::setw(col) << "CE(95%)" << std::setw(col) << "ECE";
  }
  out << '\n';
  for (const auto& [variant, fold] : row_keys) {
    std::string label = to_string(variant);
    if (!fold.empty()) label += " [" + fold + "]";
    out << std::left << std::setw(label_width) << label;
    for (double b : biases) {
      const auto it = std::find_if(rows.begin(), rows.end(), [&](const RunRecord* r) {
        return r->variant == variant && r->bias_watts == b && (has_mean || r->fold == fold);
      });
      out << " | ";
      if (it == rows.end()) {
        out << std::right << std::setw(4 * col) << "-";
        continue;
      }
      const auto& m = (*it)->metrics;
      out << std::right << std::fixed << std::setprecision(2) << std::setw(col) << m.mae
          << std::setw(col) << m.msll << std::setprecision(3) << std::setw(col) << m.ce95
          << std::setw(col) << m.ece;
      out.unsetf(std::ios::fixed);
    }
    out << '\n';
  }
  return out.str();
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  std::vector<Home> raw_homes =
      cfg.manifest.empty() ? generate_homes(cfg.synth) : load_homes(cfg.manifest);
  std::vector<Home> homes;
  homes.reserve(raw_homes.size());
  for (const auto& h : raw_homes) {
    try {
      homes.push_back(prepare_home(h));
    } catch (...) {
      rethrow_with_context("home " + h.home_id);
    }
  }
  const FoldPlan plan = make_folds(homes);
  const WindowConfig window{cfg.window_k};

  struct Job {
    ModelVariant variant;
    std::size_t fold_index;
  };
  std::vector<Job> jobs;
  for (auto v : cfg.variants) {
    for (std::size_t f = 0; f < plan.folds.size(); ++f) jobs.push_back({v, f});
  }

  struct JobOutput {
    std::vector<RunRecord> records;
    std::string model_json;
    std::vector<fs::path> files;
  };
  std::vector<JobOutput> outputs(jobs.size());
  std::vector<std::exception_ptr> errors(jobs.size());

  const auto find_home = [&](const std::string& id) -> const Home& {
    for (const auto& h : homes) {
      if (h.home_id == id) return h;
    }
    throw DataError("unknown home '" + id + "'");
  };

  const auto run_job = [&](std::size_t j) {
    const Job& job = jobs[j];
    const Fold& fold = plan.folds[job.fold_index];
    const std::string context = "variant " + to_string(job.variant) + ", fold " + fold.test_home_id;
    try {
      std::vector<const Home*> train;
      for (const auto& id : fold.train_home_ids) train.push_back(&find_home(id));
      const TrainedModel model =
          train_variant(train, job.variant, window, cfg.target, cfg.grid,
                        derive_seed(cfg.seed, job.fold_index), cfg.validation_fraction);
      JobOutput& out = outputs[j];
      out.model_json = model_to_json(model);
      const fs::path dir = cfg.output_dir / to_string(job.variant) / ("fold_" + fold.test_home_id);
      write_atomic(dir / "model.json", out.model_json);
      out.files.push_back(dir / "model.json");

      const Home& test = find_home(fold.test_home_id);
      for (double bias : cfg.bias_watts) {
        std::vector<double> truth;
        const auto pred = predict_home(model, test, bias, &truth, cfg.clamp_negative);
        const std::string tag = "bias" + format_number(bias);
        RunRecord record{job.variant, bias, fold.test_home_id,
                         evaluate(pred, std::span<const double>(truth))};
        write_predictions_csv(dir / ("predictions_" + tag + ".csv"), pred, truth);
        write_metrics_file(dir / ("metrics_" + tag + ".txt"), record);
        write_reliability_csv(dir / ("reliability_" + tag + ".csv"),
                              reliability_curve(pred, truth, ece_levels()));
        out.files.push_back(dir / ("predictions_" + tag + ".csv"));
        out.files.push_back(dir / ("metrics_" + tag + ".txt"));
        out.files.push_back(dir / ("reliability_" + tag + ".csv"));
        out.records.push_back(std::move(record));
      }
    } catch (...) {
      try {
        rethrow_with_context(context);
      } catch (...) {
        errors[j] = std::current_exception();
      }
    }
  };

  const std::size_t n_workers =
      std::min<std::size_t>(static_cast<std::size_t>(cfg.workers), jobs.size());
  if (n_workers <= 1) {
    for (std::size_t j = 0; j < jobs.size(); ++j) run_job(j);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < n_workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t j = next++; j < jobs.size(); j = next++) run_job(j);
      });
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  ExperimentResult result;
  for (auto& out : outputs) {
    for (auto& r : out.records) result.fold_records.push_back(r);
    result.model_json.push_back(std::move(out.model_json));
    for (auto& f : out.files) result.files.push_back(std::move(f));
  }

  for (auto v : cfg.variants) {
    for (double bias : cfg.bias_watts) {
      RunRecord mean{v, bias, "mean", {}};
      int count = 0;
      for (const auto& r : result.fold_records) {
        if (r.variant != v || r.bias_watts != bias) continue;
        mean.metrics.mae += r.metrics.mae;
        mean.metrics.msll += r.metrics.msll;
        mean.metrics.ce95 += r.metrics.ce95;
        mean.metrics.ece += r.metrics.ece;
        mean.metrics.n_points += r.metrics.n_points;
        ++count;
      }
      mean.metrics.mae /= count;
      mean.metrics.msll /= count;
      mean.metrics.ce95 /= count;
      mean.metrics.ece /= count;
      const fs::path path =
          cfg.output_dir / to_string(v) / ("metrics_bias" + format_number(bias) + "_mean.txt");
      write_metrics_file(path, mean);
      result.files.push_back(path);
      result.mean_records.push_back(mean);
    }
  }

  std::vector<RunRecord> all = result.fold_records;
  all.insert(all.end(), result.mean_records.begin(), result.mean_records.end());
  write_report(cfg.output_dir / "report.csv", all);
  write_atomic(cfg.output_dir / "table.txt", emit_table(result.mean_records));
  result.files.push_back(cfg.output_dir / "report.csv");
  result.files.push_back(cfg.output_dir / "table.txt");
  return result;
}

}  // namespace nilmgp
