#pragma once

#include "nilmgp/kernels.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <vector>

namespace nilmgp {

// Relative jitter for the inducing Gram diagonal, scaled by its mean diagonal.
// Skipped when the plain factor has every squared pivot above that scale;
// otherwise added and doubled up to kMaxJitterDoublings times.
inline constexpr double kRelativeJitter = 1e-6;
inline constexpr int kMaxJitterDoublings = 3;

struct TrainConfig {
  int num_inducing = 64;
  double learning_rate = 0.05;
  int epochs = 200;
  std::uint64_t seed = 0;
};

/// Factorizations of the optimal variational posterior, cached so prediction
/// does not need the training data.
struct PosteriorCache {
  Eigen::MatrixXd L;   // chol(Kmm + jitter)
  Eigen::MatrixXd LB;  // chol(I + A A^T), A = L^-1 Kmn / sigma
  Eigen::VectorXd c;   // LB^-1 A y / sigma
};

/// Trained (or in-training) sparse GP. Inputs, inducing points and the noise
/// variance live in standardized units; the standardization constants map
/// predictions back to watts.
struct SparseGPModel {
  KernelSpec spec;
  KernelParams params;
  double raw_noise = 0.0;
  Eigen::MatrixXd inducing_inputs;  // m x d
  Eigen::VectorXd x_mean;
  Eigen::VectorXd x_std;
  double y_mean = 0.0;
  double y_std = 1.0;
  std::uint64_t seed = 0;
  std::optional<PosteriorCache> posterior;

  double noise_variance() const;
  int num_inducing() const { return static_cast<int>(inducing_inputs.rows()); }
  int input_dim() const { return spec.input_dim; }

  /// Throws InputError if any structural invariant is broken.
  void validate() const;
};

struct PredictiveDistribution {
  std::vector<double> mean;      // watts
  std::vector<double> variance;  // watts^2, observation noise included
  std::vector<std::int64_t> timestamps;
};

/// Collapsed variational lower bound on log p(y) for standardized data.
double elbo(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const SparseGPModel& model);

struct ElboGradient {
  double value = 0.0;
  /// Layout matches pack_trainable: raw kernel params, raw noise, then the
  /// inducing inputs flattened row by row.
  Eigen::VectorXd grad;
};

ElboGradient elbo_grad(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                       const SparseGPModel& model);

Eigen::VectorXd pack_trainable(const SparseGPModel& model);
void unpack_trainable(SparseGPModel& model, const Eigen::VectorXd& theta);

struct FitTrace {
  double initial_elbo = 0.0;
  double final_elbo = 0.0;  // bound of the returned model
  std::vector<double> elbo_per_epoch;
  int recovered_steps = 0;  // steps rolled back after a factorization failure
};

/// Standardizes the data, seeds inducing points from a random subset of rows,
/// draws raw hyperparameters from N(0, 1) and runs full-batch Adam ascent on
/// the bound. Returns the iterate with the highest bound seen.
SparseGPModel fit(const Eigen::MatrixXd& X_raw, const Eigen::VectorXd& y_raw,
                  const KernelSpec& spec, const TrainConfig& config, FitTrace* trace = nullptr);

/// Computes and stores the posterior cache for standardized training data.
void attach_posterior(SparseGPModel& model, const Eigen::MatrixXd& X_std,
                      const Eigen::VectorXd& y_std);

/// Latent-plus-noise predictive in standardized units.
struct StandardizedPrediction {
  Eigen::VectorXd mean;
  Eigen::VectorXd latent_variance;
  Eigen::VectorXd variance;  // latent + noise
};

StandardizedPrediction predict_standardized(const SparseGPModel& model,
                                            const Eigen::MatrixXd& X_std);

/// Predictive distribution in watts for raw (unstandardized) inputs.
PredictiveDistribution predict(const SparseGPModel& model, const Eigen::MatrixXd& X_raw);

/// Applies the model's input standardization.
Eigen::MatrixXd standardize_inputs(const SparseGPModel& model, const Eigen::MatrixXd& X_raw);

}  // namespace nilmgp
