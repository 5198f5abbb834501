#pragma once

#include "nilmgp/sparse_gp.hpp"

#include <filesystem>
#include <optional>
#include <span>
#include <vector>

namespace nilmgp {

struct MetricsReport {
  double mae = 0.0;   // watts
  double msll = 0.0;  // nats, smaller is better
  double ce95 = 0.0;
  double ece = 0.0;
  long n_points = 0;
};

struct ReliabilityCurve {
  std::vector<double> nominal_levels;
  std::vector<double> empirical_coverage;
};

/// Trivial reference predictor for the standardized MSLL variant: a single
/// Gaussian fitted to the training targets.
struct MsllBaseline {
  double mean = 0.0;
  double variance = 1.0;
};

/// The fixed ECE grid {0.05, 0.10, ..., 0.95}.
const std::vector<double>& ece_levels();

/// Two-sided standard normal quantile for a central interval, z(0.95) ~ 1.96.
double central_interval_z(double level);

double mae(const PredictiveDistribution& pred, std::span<const double> truth);

/// Mean negative Gaussian log predictive density. With a baseline, the
/// baseline's loss on each point is subtracted (standardized log loss).
double msll(const PredictiveDistribution& pred, std::span<const double> truth,
            const std::optional<MsllBaseline>& baseline = std::nullopt);

/// Fraction of truths inside mean +- z(level) * sd.
double empirical_coverage(const PredictiveDistribution& pred, std::span<const double> truth,
                          double level);

/// |level - empirical coverage|.
double coverage_error(const PredictiveDistribution& pred, std::span<const double> truth,
                      double level);

ReliabilityCurve reliability_curve(const PredictiveDistribution& pred,
                                   std::span<const double> truth,
                                   const std::vector<double>& levels);

/// Mean coverage error over ece_levels().
double ece(const PredictiveDistribution& pred, std::span<const double> truth);

MetricsReport evaluate(const PredictiveDistribution& pred, std::span<const double> truth);

/// Two-column CSV `nominal,empirical` with a header row.
void write_reliability_csv(const std::filesystem::path& path, const ReliabilityCurve& curve);

}  // namespace nilmgp
