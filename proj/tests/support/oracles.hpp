#pragma once

// Test-only reference implementations. They go through pointwise kernel
// evaluation and dense n x n factorizations, never through the sparse code
// paths they are used to check.

#include "nilmgp/kernels.hpp"
#include "nilmgp/sparse_gp.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <numbers>
#include <random>

namespace nilmgp::testing {

inline Eigen::MatrixXd pointwise_gram(const Eigen::MatrixXd& X, const Eigen::MatrixXd& X2,
                                      const KernelSpec& spec, const KernelParams& params) {
  Eigen::MatrixXd K(X.rows(), X2.rows());
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    for (Eigen::Index j = 0; j < X2.rows(); ++j) {
      K(i, j) = eval_kernel(X.row(i), X2.row(j), spec, params);
    }
  }
  return K;
}

/// log N(y | 0, K + noise I) by dense Cholesky.
inline double exact_log_marginal(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                 const KernelSpec& spec, const KernelParams& params, double noise) {
  Eigen::MatrixXd K = pointwise_gram(X, X, spec, params);
  K.diagonal().array() += noise;
  Eigen::LLT<Eigen::MatrixXd> llt(K);
  const Eigen::VectorXd alpha = llt.solve(y);
  const Eigen::MatrixXd L = llt.matrixL();
  return -0.5 * y.dot(alpha) - L.diagonal().array().log().sum() -
         0.5 * static_cast<double>(y.size()) * std::log(2.0 * std::numbers::pi);
}

struct ExactPrediction {
  Eigen::VectorXd mean;
  Eigen::VectorXd variance;  // observation variance (latent + noise)
};

inline ExactPrediction exact_predict(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                     const Eigen::MatrixXd& Xs, const KernelSpec& spec,
                                     const KernelParams& params, double noise) {
  Eigen::MatrixXd K = pointwise_gram(X, X, spec, params);
  K.diagonal().array() += noise;
  Eigen::LLT<Eigen::MatrixXd> llt(K);
  const Eigen::MatrixXd Ksx = pointwise_gram(Xs, X, spec, params);
  ExactPrediction out;
  out.mean = Ksx * llt.solve(y);
  const Eigen::MatrixXd V = llt.matrixL().solve(Ksx.transpose());
  out.variance.resize(Xs.rows());
  for (Eigen::Index i = 0; i < Xs.rows(); ++i) {
    out.variance(i) = eval_kernel(Xs.row(i), Xs.row(i), spec, params) -
                      V.col(i).squaredNorm() + noise;
  }
  return out;
}

/// Central finite differences of f at x, one coordinate at a time.
inline Eigen::VectorXd central_difference(const std::function<double(const Eigen::VectorXd&)>& f,
                                          const Eigen::VectorXd& x, double step) {
  Eigen::VectorXd g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Eigen::VectorXd hi = x;
    Eigen::VectorXd lo = x;
    hi(i) += step;
    lo(i) -= step;
    g(i) = (f(hi) - f(lo)) / (2.0 * step);
  }
  return g;
}

/// max_i |a_i - b_i| / max(1, |a_i|)
inline double max_scaled_error(const Eigen::VectorXd& analytic, const Eigen::VectorXd& numeric) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < analytic.size(); ++i) {
    worst = std::max(worst, std::abs(analytic(i) - numeric(i)) / std::max(1.0, std::abs(analytic(i))));
  }
  return worst;
}

inline Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng,
                                     double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  Eigen::MatrixXd M(rows, cols);
  for (Eigen::Index i = 0; i < M.size(); ++i) M.data()[i] = normal(rng);
  return M;
}

/// Sparse model with hand-set hyperparameters and inducing inputs, identity
/// standardization, for evaluating the bound directly on standardized data.
inline SparseGPModel make_model(const KernelSpec& spec, const KernelParams& params, double noise,
                                const Eigen::MatrixXd& Z) {
  SparseGPModel model;
  model.spec = spec;
  model.params = params;
  model.raw_noise = inverse_softplus(noise);
  model.inducing_inputs = Z;
  model.x_mean = Eigen::VectorXd::Zero(spec.input_dim);
  model.x_std = Eigen::VectorXd::Ones(spec.input_dim);
  return model;
}

}  // namespace nilmgp::testing
