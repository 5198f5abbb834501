#include "nilmgp/features.hpp"

#include "nilmgp/errors.hpp"

#include <algorithm>
#include <cmath>

namespace nilmgp {

namespace {

void require_window(const PowerSeries& mains, const WindowConfig& cfg) {
  if (cfg.half_width_k < 0) throw InputError("window half width must be non-negative");
  if (mains.empty()) throw InputError("mains series is empty");
  if (mains.size() < static_cast<std::size_t>(cfg.length())) {
    throw InputError("mains series has " + std::to_string(mains.size()) +
                     " readings, shorter than the window length " +
                     std::to_string(cfg.length()));
  }
}

}  // namespace

double population_excess_kurtosis(std::span<const double> values) {
  if (values.empty()) throw InputError("kurtosis of an empty window");
  const double n = static_cast<double>(values.size());
  // Moments of offsets from the first reading: a constant shift of the window
  // leaves the offsets, and so the result, bit-for-bit unchanged.
  const double origin = values.front();
  double mean = 0.0;
  for (double v : values) mean += v - origin;
  mean /= n;
  double m2 = 0.0;
  double m4 = 0.0;
  for (double v : values) {
    const double d = (v - origin) - mean;
    const double d2 = d * d;
    m2 += d2;
    m4 += d2 * d2;
  }
  m2 /= n;
  m4 /= n;
  if (!(m2 > 0.0)) return 0.0;
  return m4 / (m2 * m2) - 3.0;
}

FeatureMatrix point_features(const PowerSeries& mains) {
  if (mains.empty()) throw InputError("mains series is empty");
  FeatureMatrix out;
  out.rows = Eigen::Map<const Eigen::VectorXd>(mains.watts.data(),
                                               static_cast<Eigen::Index>(mains.size()));
  out.timestamps = mains.timestamps;
  out.feature_names = {"mains"};
  return out;
}

FeatureMatrix window_features(const PowerSeries& mains, const WindowConfig& cfg) {
  require_window(mains, cfg);
  if (cfg.half_width_k == 0) return point_features(mains);
  const int k = cfg.half_width_k;
  const int len = cfg.length();
  const auto n_rows = static_cast<Eigen::Index>(mains.size()) - 2 * k;
  FeatureMatrix out;
  out.rows.resize(n_rows, len);
  out.timestamps.reserve(static_cast<std::size_t>(n_rows));
  for (Eigen::Index r = 0; r < n_rows; ++r) {
    for (int j = 0; j < len; ++j) out.rows(r, j) = mains.watts[static_cast<std::size_t>(r + j)];
    out.timestamps.push_back(mains.timestamps[static_cast<std::size_t>(r + k)]);
  }
  for (int j = -k; j <= k; ++j) {
    out.feature_names.push_back(j == 0 ? std::string("mains[t]")
                                       : "mains[t" + std::string(j > 0 ? "+" : "") +
                                             std::to_string(j) + "]");
  }
  return out;
}

FeatureMatrix statistical_features(const PowerSeries& mains, const WindowConfig& cfg) {
  require_window(mains, cfg);
  const auto k = static_cast<std::size_t>(cfg.half_width_k);
  const auto len = static_cast<std::size_t>(cfg.length());
  // The centre needs a predecessor reading for the difference feature.
  const std::size_t first_centre = std::max<std::size_t>(k, 1);
  const std::size_t last_centre = mains.size() - 1 - k;
  FeatureMatrix out;
  out.feature_names = {"value", "max", "min", "mean", "kurtosis", "difference", "range"};
  if (first_centre > last_centre) {
    throw InputError("mains series too short for statistical features");
  }
  const auto n_rows = static_cast<Eigen::Index>(last_centre - first_centre + 1);
  out.rows.resize(n_rows, kNumStatFeatures);
  out.timestamps.reserve(static_cast<std::size_t>(n_rows));
  for (std::size_t c = first_centre; c <= last_centre; ++c) {
    const std::span<const double> window(mains.watts.data() + (c - k), len);
    const auto [lo, hi] = std::minmax_element(window.begin(), window.end());
    double sum = 0.0;
    for (double v : window) sum += v;
    const auto r = static_cast<Eigen::Index>(c - first_centre);
    out.rows(r, kStatValue) = mains.watts[c];
    out.rows(r, kStatMax) = *hi;
    out.rows(r, kStatMin) = *lo;
    out.rows(r, kStatMean) = sum / static_cast<double>(len);
    out.rows(r, kStatKurtosis) = population_excess_kurtosis(window);
    out.rows(r, kStatDifference) = mains.watts[c] - mains.watts[c - 1];
    out.rows(r, kStatRange) = *hi - *lo;
    out.timestamps.push_back(mains.timestamps[c]);
  }
  return out;
}

FeatureMatrix with_range_column(const FeatureMatrix& windows) {
  FeatureMatrix out;
  out.rows.resize(windows.size(), windows.dim() + 1);
  out.rows.leftCols(windows.dim()) = windows.rows;
  out.rows.col(windows.dim()) =
      windows.rows.rowwise().maxCoeff() - windows.rows.rowwise().minCoeff();
  out.timestamps = windows.timestamps;
  out.feature_names = windows.feature_names;
  out.feature_names.push_back("range");
  return out;
}

std::string to_string(ModelVariant variant) {
  switch (variant) {
    case ModelVariant::Point: return "point";
    case ModelVariant::Seq2Point: return "seq2point";
    case ModelVariant::Seq2PointLinear: return "seq2point_linear";
    case ModelVariant::Features: return "features";
    case ModelVariant::FeaturesLinear: return "features_linear";
  }
  return "?";
}

ModelVariant parse_variant(std::string_view name) {
  for (auto v : all_variants()) {
    if (to_string(v) == name) return v;
  }
  throw ConfigError("unknown model variant '" + std::string(name) + "'");
}

const std::vector<ModelVariant>& all_variants() {
  static const std::vector<ModelVariant> variants{
      ModelVariant::Point, ModelVariant::Seq2Point, ModelVariant::Seq2PointLinear,
      ModelVariant::Features, ModelVariant::FeaturesLinear};
  return variants;
}

FeatureMatrix build_features(ModelVariant variant, const PowerSeries& mains,
                             const WindowConfig& cfg) {
  switch (variant) {
    case ModelVariant::Point:
      return point_features(mains);
    case ModelVariant::Seq2Point:
      if (cfg.half_width_k < 1) throw ConfigError("seq2point needs window_k >= 1");
      return window_features(mains, cfg);
    case ModelVariant::Seq2PointLinear:
      if (cfg.half_width_k < 1) throw ConfigError("seq2point needs window_k >= 1");
      return with_range_column(window_features(mains, cfg));
    case ModelVariant::Features:
    case ModelVariant::FeaturesLinear:
      return statistical_features(mains, cfg);
  }
  throw ConfigError("unhandled model variant");
}

KernelSpec kernel_for(ModelVariant variant, int input_dim) {
  switch (variant) {
    case ModelVariant::Point:
      return KernelSpec::matern52();
    case ModelVariant::Seq2Point:
    case ModelVariant::Features:
      return KernelSpec::matern52_ard(input_dim);
    case ModelVariant::Seq2PointLinear:
      return KernelSpec::sum({KernelSpec::matern52_ard(input_dim),
                              KernelSpec::linear_on_feature(input_dim, input_dim - 1)});
    case ModelVariant::FeaturesLinear:
      return KernelSpec::sum({KernelSpec::matern52_ard(input_dim),
                              KernelSpec::linear_on_feature(input_dim, kStatRange)});
  }
  throw ConfigError("unhandled model variant");
}

}  // namespace nilmgp
