#pragma once

#include <Eigen/Dense>

#include <optional>
#include <random>
#include <string>
#include <vector>

namespace nilmgp {

enum class KernelKind { Matern52, Matern52ARD, LinearOnFeature, Sum };

/// Structure of a covariance function. Hyperparameter values live separately
/// in KernelParams so the same spec can be evaluated at many parameter points.
struct KernelSpec {
  KernelKind kind = KernelKind::Matern52;
  int input_dim = 1;
  std::optional<int> linear_feature_index;  // LinearOnFeature only
  std::vector<KernelSpec> children;         // Sum only

  static KernelSpec matern52();
  static KernelSpec matern52_ard(int input_dim);
  static KernelSpec linear_on_feature(int input_dim, int feature_index);
  static KernelSpec sum(std::vector<KernelSpec> children);

  /// Throws InputError when the structural invariants do not hold.
  void validate() const;

  /// Length of the raw parameter vector. Layout, concatenated over Sum children
  /// in order:
  ///   Matern52        [signal_variance, lengthscale]
  ///   Matern52ARD     [signal_variance, lengthscale_1 .. lengthscale_d]
  ///   LinearOnFeature [linear_variance]
  int num_params() const;

  /// Human-readable names matching the parameter layout, e.g. "matern.ls[3]".
  std::vector<std::string> param_names() const;

  bool operator==(const KernelSpec&) const = default;
};

/// Unconstrained hyperparameters. Every constrained value is softplus(raw).
struct KernelParams {
  Eigen::VectorXd raw;
};

double softplus(double raw);
/// d softplus / d raw (the logistic sigmoid).
double softplus_grad(double raw);
double inverse_softplus(double value);

/// Raw values drawn i.i.d. standard normal.
KernelParams init_params(const KernelSpec& spec, std::mt19937_64& rng);

/// Builds raw params from constrained values; handy for tests and tooling.
/// `values` follows the same layout as KernelParams::raw.
KernelParams params_from_constrained(const KernelSpec& spec, const Eigen::VectorXd& values);
Eigen::VectorXd constrained_values(const KernelParams& params);

using ConstRowRef = Eigen::Ref<const Eigen::RowVectorXd>;

/// Matern 5/2 covariance. `lengthscales` has one entry (isotropic) or one per
/// input dimension (ARD).
double eval_matern52(ConstRowRef x, ConstRowRef x2, double signal_variance,
                     const Eigen::VectorXd& lengthscales);

/// Homogeneous linear kernel on a single input column.
double eval_linear(ConstRowRef x, ConstRowRef x2, double linear_variance, int feature_index);

/// Pointwise evaluation of a full spec.
double eval_kernel(ConstRowRef x, ConstRowRef x2, const KernelSpec& spec,
                   const KernelParams& params);

Eigen::MatrixXd gram(const Eigen::MatrixXd& X, const Eigen::MatrixXd& X2, const KernelSpec& spec,
                     const KernelParams& params);

/// diag(gram(X, X)) without forming the full matrix.
Eigen::VectorXd gram_diag(const Eigen::MatrixXd& X, const KernelSpec& spec,
                          const KernelParams& params);

/// d gram / d raw[param_index], chain rule through softplus included.
Eigen::MatrixXd gram_grad(const Eigen::MatrixXd& X, const Eigen::MatrixXd& X2,
                          const KernelSpec& spec, const KernelParams& params, int param_index);

/// sum_ij adjoint(i,j) * d gram(i,j) / d raw[p] for every p, in one pass.
Eigen::VectorXd contract_param_grad(const Eigen::MatrixXd& X, const Eigen::MatrixXd& X2,
                                    const KernelSpec& spec, const KernelParams& params,
                                    const Eigen::MatrixXd& adjoint);

/// sum_i adjoint(i) * d k(x_i, x_i) / d raw[p] for every p.
Eigen::VectorXd contract_diag_param_grad(const Eigen::MatrixXd& X, const KernelSpec& spec,
                                         const KernelParams& params,
                                         const Eigen::VectorXd& adjoint);

/// Gradient of sum_ij adjoint(i,j) * gram(i,j) with respect to the rows of X2
/// (the second argument only). Returns a matrix shaped like X2.
Eigen::MatrixXd contract_second_input_grad(const Eigen::MatrixXd& X, const Eigen::MatrixXd& X2,
                                           const KernelSpec& spec, const KernelParams& params,
                                           const Eigen::MatrixXd& adjoint);

struct GramContraction {
  Eigen::VectorXd param_grad;  // as contract_param_grad
  Eigen::MatrixXd input_grad;  // as contract_second_input_grad
};

/// Both contractions sharing one pass over the pairwise distances.
GramContraction contract_gram(const Eigen::MatrixXd& X, const Eigen::MatrixXd& X2,
                              const KernelSpec& spec, const KernelParams& params,
                              const Eigen::MatrixXd& adjoint);

}  // namespace nilmgp
