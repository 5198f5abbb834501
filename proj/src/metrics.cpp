#include "nilmgp/metrics.hpp"

#include "nilmgp/errors.hpp"

#include <boost/math/distributions/normal.hpp>

#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <string>

namespace nilmgp {

namespace {

std::string shortest(double v) {
  std::array<char, 32> buf{};
  const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}

void check_pair(const PredictiveDistribution& pred, std::span<const double> truth) {
  if (pred.mean.size() != truth.size() || pred.variance.size() != truth.size()) {
    throw InputError("prediction has " + std::to_string(pred.mean.size()) + " points, truth has " +
                     std::to_string(truth.size()));
  }
  if (truth.empty()) throw InputError("metrics need at least one point");
}

void check_variances(const PredictiveDistribution& pred) {
  for (double v : pred.variance) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw InputError("predictive variance must be positive and finite");
    }
  }
}

void check_level(double level) {
  if (!(level > 0.0 && level < 1.0)) {
    throw InputError("interval level must lie in (0, 1)");
  }
}

double neg_log_density(double y, double mean, double variance) {
  const double r = y - mean;
  return 0.5 * std::log(2.0 * std::numbers::pi * variance) + 0.5 * r * r / variance;
}

}  // namespace

const std::vector<double>& ece_levels() {
  static const std::vector<double> levels = [] {
    std::vector<double> out;
    for (int i = 1; i <= 19; ++i) out.push_back(i / 20.0);
    return out;
  }();
  return levels;
}

double central_interval_z(double level) {
  check_level(level);
  return boost::math::quantile(boost::math::normal_distribution<double>(), 0.5 + 0.5 * level);
}

double mae(const PredictiveDistribution& pred, std::span<const double> truth) {
  check_pair(pred, truth);
  double total = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) total += std::abs(pred.mean[i] - truth[i]);
  return total / static_cast<double>(truth.size());
}

double msll(const PredictiveDistribution& pred, std::span<const double> truth,
            const std::optional<MsllBaseline>& baseline) {
  check_pair(pred, truth);
  check_variances(pred);
  if (baseline && !(baseline->variance > 0.0)) {
    throw InputError("MSLL baseline variance must be positive");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    total += neg_log_density(truth[i], pred.mean[i], pred.variance[i]);
    if (baseline) total -= neg_log_density(truth[i], baseline->mean, baseline->variance);
  }
  return total / static_cast<double>(truth.size());
}

double empirical_coverage(const PredictiveDistribution& pred, std::span<const double> truth,
                          double level) {
  check_pair(pred, truth);
  check_variances(pred);
  const double z = central_interval_z(level);
  std::size_t inside = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (std::abs(truth[i] - pred.mean[i]) <= z * std::sqrt(pred.variance[i])) ++inside;
  }
  return static_cast<double>(inside) / static_cast<double>(truth.size());
}

double coverage_error(const PredictiveDistribution& pred, std::span<const double> truth,
                      double level) {
  return std::abs(level - empirical_coverage(pred, truth, level));
}

ReliabilityCurve reliability_curve(const PredictiveDistribution& pred,
                                   std::span<const double> truth,
                                   const std::vector<double>& levels) {
  if (levels.empty()) throw InputError("reliability curve needs at least one level");
  for (std::size_t i = 0; i < levels.size(); ++i) {
    check_level(levels[i]);
    if (i > 0 && !(levels[i] > levels[i - 1])) {
      throw InputError("reliability levels must be strictly increasing");
    }
  }
  ReliabilityCurve curve;
  curve.nominal_levels = levels;
  for (double level : levels) curve.empirical_coverage.push_back(empirical_coverage(pred, truth, level));
  return curve;
}

double ece(const PredictiveDistribution& pred, std::span<const double> truth) {
  const auto curve = reliability_curve(pred, truth, ece_levels());
  double total = 0.0;
  for (std::size_t i = 0; i < curve.nominal_levels.size(); ++i) {
    total += std::abs(curve.nominal_levels[i] - curve.empirical_coverage[i]);
  }
  return total / static_cast<double>(curve.nominal_levels.size());
}

MetricsReport evaluate(const PredictiveDistribution& pred, std::span<const double> truth) {
  MetricsReport report;
  report.mae = mae(pred, truth);
  report.msll = msll(pred, truth);
  report.ce95 = coverage_error(pred, truth, 0.95);
  report.ece = ece(pred, truth);
  report.n_points = static_cast<long>(truth.size());
  return report;
}

void write_reliability_csv(const std::filesystem::path& path, const ReliabilityCurve& curve) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw InputError("cannot write '" + path.string() + "'");
  out << "nominal,empirical\n";
  for (std::size_t i = 0; i < curve.nominal_levels.size(); ++i) {
    out << shortest(curve.nominal_levels[i]) << ',' << shortest(curve.empirical_coverage[i]) << '\n';
  }
}

}  // namespace nilmgp
