#pragma once

#include "nilmgp/data.hpp"
#include "nilmgp/kernels.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace nilmgp {

struct WindowConfig {
  int half_width_k = 49;  // window length 2k + 1

  int length() const { return 2 * half_width_k + 1; }
};

/// Model inputs aligned to the timestamps of the readings they predict.
struct FeatureMatrix {
  Eigen::MatrixXd rows;
  std::vector<std::int64_t> timestamps;
  std::vector<std::string> feature_names;

  Eigen::Index size() const { return rows.rows(); }
  Eigen::Index dim() const { return rows.cols(); }
};

/// Column order of statistical_features. Stable: the Linear kernel reads the
/// range column by index.
inline constexpr int kStatValue = 0;
inline constexpr int kStatMax = 1;
inline constexpr int kStatMin = 2;
inline constexpr int kStatMean = 3;
inline constexpr int kStatKurtosis = 4;
inline constexpr int kStatDifference = 5;
inline constexpr int kStatRange = 6;
inline constexpr int kNumStatFeatures = 7;

FeatureMatrix point_features(const PowerSeries& mains);

/// Each row is the 2k+1 readings centred on its timestamp. The first and last
/// k readings have no full window and are dropped.
FeatureMatrix window_features(const PowerSeries& mains, const WindowConfig& cfg);

/// [value, max, min, mean, kurtosis, difference, range] over each centred
/// window. Kurtosis is population excess kurtosis (0 for a constant window);
/// difference is the change from the previous reading. Rows without a
/// predecessor reading are dropped.
FeatureMatrix statistical_features(const PowerSeries& mains, const WindowConfig& cfg);

/// Appends the window range (max - min) as a trailing column.
FeatureMatrix with_range_column(const FeatureMatrix& windows);

double population_excess_kurtosis(std::span<const double> values);

enum class ModelVariant { Point, Seq2Point, Seq2PointLinear, Features, FeaturesLinear };

std::string to_string(ModelVariant variant);
/// Accepts point, seq2point, seq2point_linear, features, features_linear.
ModelVariant parse_variant(std::string_view name);
const std::vector<ModelVariant>& all_variants();

/// Builds the variant's input matrix from a mains series.
FeatureMatrix build_features(ModelVariant variant, const PowerSeries& mains,
                             const WindowConfig& cfg);

/// Kernel matching the variant and feature dimension: Matern 5/2 for point,
/// ARD Matern 5/2 for the windowed variants, plus a Linear kernel on the range
/// column for the *_linear variants.
KernelSpec kernel_for(ModelVariant variant, int input_dim);

}  // namespace nilmgp
