#include "nilmgp/sparse_gp.hpp"

#include "nilmgp/errors.hpp"

#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <string>

namespace nilmgp {

namespace {

struct JitteredCholesky {
  Eigen::LLT<Eigen::MatrixXd> llt;
  double jitter_factor = 0.0;  // jitter = factor * mean(diag)
};

JitteredCholesky cholesky_with_jitter(const Eigen::MatrixXd& K) {
  const double mean_diag = K.diagonal().mean();
  {
    // Unjittered factor when every pivot sits well above the jitter scale.
    JitteredCholesky out;
    out.llt.compute(K);
    if (out.llt.info() == Eigen::Success &&
        out.llt.matrixLLT().diagonal().array().square().minCoeff() >= kRelativeJitter * mean_diag) {
      return out;
    }
  }
  double factor = kRelativeJitter;
  for (int attempt = 0; attempt <= kMaxJitterDoublings; ++attempt, factor *= 2.0) {
    Eigen::MatrixXd jittered = K;
    jittered.diagonal().array() += factor * mean_diag;
    JitteredCholesky out;
    out.llt.compute(jittered);
    if (out.llt.info() == Eigen::Success) {
      out.jitter_factor = factor;
      return out;
    }
  }
  throw NumericalError("Cholesky of inducing covariance failed after jitter escalation");
}

// Shared factorization state for the bound, its gradient and prediction.
struct Factorization {
  double noise = 0.0;
  double sigma = 0.0;
  double jitter_factor = 0.0;
  Eigen::MatrixXd L;   // chol(Kmm + jitter)
  Eigen::MatrixXd A;   // L^-1 Kmn / sigma, m x n
  Eigen::MatrixXd C;   // A A^T
  Eigen::MatrixXd LB;  // chol(I + C)
  Eigen::VectorXd c;   // LB^-1 A y / sigma
  Eigen::MatrixXd Knm;
  Eigen::VectorXd kdiag;
};

void check_data(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const SparseGPModel& model) {
  model.validate();
  if (X.cols() != model.input_dim()) {
    throw InputError("training inputs have " + std::to_string(X.cols()) +
                     " columns, model expects " + std::to_string(model.input_dim()));
  }
  if (X.rows() != y.size()) throw InputError("inputs and targets differ in length");
  if (X.rows() == 0) throw InputError("empty training set");
}

Factorization factorize(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                        const SparseGPModel& model) {
  check_data(X, y, model);
  Factorization f;
  f.noise = model.noise_variance();
  f.sigma = std::sqrt(f.noise);
  const auto& Z = model.inducing_inputs;
  const Eigen::MatrixXd Kmm = gram(Z, Z, model.spec, model.params);
  auto chol = cholesky_with_jitter(Kmm);
  f.jitter_factor = chol.jitter_factor;
  f.L = chol.llt.matrixL();
  f.Knm = gram(X, Z, model.spec, model.params);
  f.kdiag = gram_diag(X, model.spec, model.params);
  f.A = f.L.triangularView<Eigen::Lower>().solve(f.Knm.transpose()) / f.sigma;
  f.C.noalias() = f.A * f.A.transpose();
  Eigen::MatrixXd B = f.C;
  B.diagonal().array() += 1.0;
  Eigen::LLT<Eigen::MatrixXd> llt_b(B);
  if (llt_b.info() != Eigen::Success) throw NumericalError("Cholesky of I + A A^T failed");
  f.LB = llt_b.matrixL();
  f.c = f.LB.triangularView<Eigen::Lower>().solve(f.A * y) / f.sigma;
  return f;
}

double bound_value(const Factorization& f, const Eigen::VectorXd& y) {
  const double n = static_cast<double>(y.size());
  return -0.5 * n * std::log(2.0 * std::numbers::pi) - f.LB.diagonal().array().log().sum() -
         0.5 * n * std::log(f.noise) - 0.5 * y.squaredNorm() / f.noise + 0.5 * f.c.squaredNorm() -
         0.5 * f.kdiag.sum() / f.noise + 0.5 * f.C.trace();
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

double SparseGPModel::noise_variance() const { return softplus(raw_noise); }

void SparseGPModel::validate() const {
  spec.validate();
  if (params.raw.size() != spec.num_params()) {
    throw InputError("model kernel parameter count does not match its spec");
  }
  if (inducing_inputs.rows() < 1) throw InputError("model needs at least one inducing input");
  if (inducing_inputs.cols() != spec.input_dim) {
    throw InputError("inducing inputs have the wrong number of columns");
  }
  if (x_mean.size() != spec.input_dim || x_std.size() != spec.input_dim) {
    throw InputError("standardization vectors have the wrong length");
  }
  if ((x_std.array() <= 0.0).any() || !(y_std > 0.0)) {
    throw InputError("standardization scales must be strictly positive");
  }
}

double elbo(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const SparseGPModel& model) {
  return bound_value(factorize(X, y, model), y);
}

ElboGradient elbo_grad(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                       const SparseGPModel& model) {
  const Factorization f = factorize(X, y, model);
  const auto& Z = model.inducing_inputs;
  const Eigen::Index m = Z.rows();
  const Eigen::Index n = X.rows();
  const auto L = f.L.triangularView<Eigen::Lower>();
  const auto LB = f.LB.triangularView<Eigen::Lower>();

  // Binv = (I + C)^-1
  Eigen::MatrixXd Binv = LB.solve(Eigen::MatrixXd::Identity(m, m));
  Binv = LB.transpose().solve(Binv);

  // alpha = Sigma^-1 y with Sigma = Q_nn + noise I
  const Eigen::VectorXd Ay = f.A * y;
  const Eigen::VectorXd alpha = (y - f.A.transpose() * (Binv * Ay)) / f.noise;
  // P alpha with P = Kmm^-1 Kmn
  const Eigen::VectorXd p_alpha = L.transpose().solve(f.A * alpha) * f.sigma;

  // T = Binv C L^-1 ; T^T = L^-T C Binv
  const Eigen::MatrixXd BinvC = Binv * f.C;
  const Eigen::MatrixXd T = L.transpose().solve(BinvC.transpose()).transpose();

  // dF/dKnm
  Eigen::MatrixXd adj_nm = alpha * p_alpha.transpose();
  adj_nm.noalias() += (f.A.transpose() * T) / f.sigma;

  // dF/dKmm, symmetric, then folded with the jitter dependence on mean(diag Kmm)
  Eigen::MatrixXd inner = f.C * Binv * f.C;
  inner = L.transpose().solve(inner);
  inner = L.transpose().solve(inner.transpose().eval());
  Eigen::MatrixXd adj_mm = -0.5 * (p_alpha * p_alpha.transpose() + inner);
  adj_mm = 0.5 * (adj_mm + adj_mm.transpose()).eval();
  adj_mm.diagonal().array() += f.jitter_factor * adj_mm.trace() / static_cast<double>(m);

  const Eigen::VectorXd adj_diag = Eigen::VectorXd::Constant(n, -0.5 / f.noise);

  const int n_kernel = model.spec.num_params();
  ElboGradient out;
  out.value = bound_value(f, y);
  out.grad.resize(n_kernel + 1 + m * Z.cols());

  const GramContraction cross = contract_gram(X, Z, model.spec, model.params, adj_nm);
  const GramContraction inducing = contract_gram(Z, Z, model.spec, model.params, adj_mm);
  out.grad.head(n_kernel) = cross.param_grad + inducing.param_grad +
                            contract_diag_param_grad(X, model.spec, model.params, adj_diag);

  const double tr_sigma_inv = (static_cast<double>(n) - (Binv.cwiseProduct(f.C)).sum()) / f.noise;
  const double d_noise = 0.5 * (alpha.squaredNorm() - tr_sigma_inv) +
                         (f.kdiag.sum() - f.noise * f.C.trace()) / (2.0 * f.noise * f.noise);
  out.grad(n_kernel) = d_noise * softplus_grad(model.raw_noise);

  const Eigen::MatrixXd dZ = cross.input_grad + 2.0 * inducing.input_grad;
  for (Eigen::Index j = 0; j < m; ++j) {
    out.grad.segment(n_kernel + 1 + j * Z.cols(), Z.cols()) = dZ.row(j).transpose();
  }
  return out;
}

Eigen::VectorXd pack_trainable(const SparseGPModel& model) {
  const int n_kernel = model.spec.num_params();
  const auto& Z = model.inducing_inputs;
  Eigen::VectorXd theta(n_kernel + 1 + Z.size());
  theta.head(n_kernel) = model.params.raw;
  theta(n_kernel) = model.raw_noise;
  for (Eigen::Index j = 0; j < Z.rows(); ++j) {
    theta.segment(n_kernel + 1 + j * Z.cols(), Z.cols()) = Z.row(j).transpose();
  }
  return theta;
}

void unpack_trainable(SparseGPModel& model, const Eigen::VectorXd& theta) {
  const int n_kernel = model.spec.num_params();
  auto& Z = model.inducing_inputs;
  if (theta.size() != n_kernel + 1 + Z.size()) {
    throw InputError("trainable vector has the wrong length");
  }
  model.params.raw = theta.head(n_kernel);
  model.raw_noise = theta(n_kernel);
  for (Eigen::Index j = 0; j < Z.rows(); ++j) {
    Z.row(j) = theta.segment(n_kernel + 1 + j * Z.cols(), Z.cols()).transpose();
  }
}

SparseGPModel fit(const Eigen::MatrixXd& X_raw, const Eigen::VectorXd& y_raw,
                  const KernelSpec& spec, const TrainConfig& config, FitTrace* trace) {
  spec.validate();
  if (config.num_inducing < 1) throw ConfigError("num_inducing must be >= 1");
  if (config.epochs < 1) throw ConfigError("epochs must be >= 1");
  if (!(config.learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (X_raw.cols() != spec.input_dim) {
    throw InputError("training inputs have " + std::to_string(X_raw.cols()) +
                     " columns, kernel expects " + std::to_string(spec.input_dim));
  }
  if (X_raw.rows() != y_raw.size()) throw InputError("inputs and targets differ in length");
  if (X_raw.rows() < config.num_inducing) {
    throw ConfigError("training set has " + std::to_string(X_raw.rows()) +
                      " rows, fewer than num_inducing = " + std::to_string(config.num_inducing));
  }
  if (!X_raw.allFinite() || !y_raw.allFinite()) throw InputError("non-finite training data");

  const Eigen::Index n = X_raw.rows();
  SparseGPModel model;
  model.spec = spec;
  model.seed = config.seed;

  model.x_mean = X_raw.colwise().mean().transpose();
  model.x_std = ((X_raw.rowwise() - model.x_mean.transpose()).array().square().colwise().sum() /
                 static_cast<double>(n))
                    .sqrt()
                    .transpose();
  for (Eigen::Index k = 0; k < model.x_std.size(); ++k) {
    if (!(model.x_std(k) > 0.0)) model.x_std(k) = 1.0;
  }
  model.y_mean = y_raw.mean();
  model.y_std = std::sqrt((y_raw.array() - model.y_mean).square().mean());
  if (!(model.y_std > 0.0)) model.y_std = 1.0;

  const Eigen::MatrixXd X = standardize_inputs(model, X_raw);
  const Eigen::VectorXd y = (y_raw.array() - model.y_mean) / model.y_std;

  std::mt19937_64 rng(splitmix64(config.seed));
  model.params = init_params(spec, rng);
  model.raw_noise = std::normal_distribution<double>(0.0, 1.0)(rng);

  // Partial Fisher-Yates for a uniform subset of rows.
  std::vector<Eigen::Index> rows(static_cast<std::size_t>(n));
  std::iota(rows.begin(), rows.end(), Eigen::Index{0});
  model.inducing_inputs.resize(config.num_inducing, spec.input_dim);
  for (int j = 0; j < config.num_inducing; ++j) {
    std::uniform_int_distribution<Eigen::Index> pick(j, n - 1);
    std::swap(rows[static_cast<std::size_t>(j)], rows[static_cast<std::size_t>(pick(rng))]);
    model.inducing_inputs.row(j) = X.row(rows[static_cast<std::size_t>(j)]);
  }

  constexpr double beta1 = 0.9;
  constexpr double beta2 = 0.999;
  constexpr double eps = 1e-8;

  Eigen::VectorXd theta = pack_trainable(model);
  Eigen::VectorXd m1 = Eigen::VectorXd::Zero(theta.size());
  Eigen::VectorXd m2 = Eigen::VectorXd::Zero(theta.size());
  double lr = config.learning_rate;

  ElboGradient current = elbo_grad(X, y, model);
  FitTrace local;
  local.initial_elbo = current.value;
  Eigen::VectorXd best_theta = theta;
  double best_value = current.value;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    local.elbo_per_epoch.push_back(current.value);
    m1 = beta1 * m1 + (1.0 - beta1) * current.grad;
    m2 = beta2 * m2 + (1.0 - beta2) * current.grad.cwiseAbs2();
    const double c1 = 1.0 - std::pow(beta1, epoch);
    const double c2 = 1.0 - std::pow(beta2, epoch);
    const Eigen::VectorXd step =
        lr * (m1 / c1).cwiseQuotient(((m2 / c2).cwiseSqrt().array() + eps).matrix());
    const Eigen::VectorXd candidate = theta + step;
    SparseGPModel trial = model;
    unpack_trainable(trial, candidate);
    try {
      ElboGradient next = elbo_grad(X, y, trial);
      if (!std::isfinite(next.value) || !next.grad.allFinite()) {
        throw NumericalError("non-finite bound");
      }
      theta = candidate;
      model = std::move(trial);
      current = std::move(next);
    } catch (const NumericalError&) {
      // Stay at the last good iterate and shrink the step.
      ++local.recovered_steps;
      lr *= 0.5;
      continue;
    }
    if (current.value > best_value) {
      best_value = current.value;
      best_theta = theta;
    }
  }
  unpack_trainable(model, best_theta);
  attach_posterior(model, X, y);
  local.final_elbo = best_value;
  if (trace) *trace = std::move(local);
  return model;
}

Eigen::MatrixXd standardize_inputs(const SparseGPModel& model, const Eigen::MatrixXd& X_raw) {
  if (X_raw.cols() != model.x_mean.size()) {
    throw InputError("inputs have " + std::to_string(X_raw.cols()) + " columns, model expects " +
                     std::to_string(model.x_mean.size()));
  }
  return (X_raw.rowwise() - model.x_mean.transpose()).array().rowwise() /
         model.x_std.transpose().array();
}

void attach_posterior(SparseGPModel& model, const Eigen::MatrixXd& X_std,
                      const Eigen::VectorXd& y_std) {
  Factorization f = factorize(X_std, y_std, model);
  model.posterior = PosteriorCache{std::move(f.L), std::move(f.LB), std::move(f.c)};
}

StandardizedPrediction predict_standardized(const SparseGPModel& model,
                                            const Eigen::MatrixXd& X_std) {
  model.validate();
  if (!model.posterior) throw InputError("model has no posterior attached; fit it first");
  if (X_std.cols() != model.input_dim()) {
    throw InputError("test inputs have " + std::to_string(X_std.cols()) +
                     " columns, model expects " + std::to_string(model.input_dim()));
  }
  const auto& post = *model.posterior;
  const Eigen::Index m = model.num_inducing();
  if (post.L.rows() != m || post.LB.rows() != m || post.c.size() != m) {
    throw InputError("posterior cache does not match the inducing inputs");
  }
  const double noise = model.noise_variance();
  const Eigen::MatrixXd Kms = gram(model.inducing_inputs, X_std, model.spec, model.params);
  const Eigen::MatrixXd v1 = post.L.triangularView<Eigen::Lower>().solve(Kms);
  const Eigen::MatrixXd v2 = post.LB.triangularView<Eigen::Lower>().solve(v1);

  StandardizedPrediction out;
  out.mean = v2.transpose() * post.c;
  out.latent_variance = gram_diag(X_std, model.spec, model.params) -
                        v1.colwise().squaredNorm().transpose() +
                        v2.colwise().squaredNorm().transpose();
  // Round-off can push the latent part a hair below zero far from the data.
  out.latent_variance = out.latent_variance.cwiseMax(0.0);
  out.variance = out.latent_variance.array() + noise;
  return out;
}

PredictiveDistribution predict(const SparseGPModel& model, const Eigen::MatrixXd& X_raw) {
  const StandardizedPrediction s = predict_standardized(model, standardize_inputs(model, X_raw));
  PredictiveDistribution out;
  out.mean.resize(static_cast<std::size_t>(s.mean.size()));
  out.variance.resize(out.mean.size());
  const double var_scale = model.y_std * model.y_std;
  for (Eigen::Index i = 0; i < s.mean.size(); ++i) {
    out.mean[static_cast<std::size_t>(i)] = model.y_std * s.mean(i) + model.y_mean;
    out.variance[static_cast<std::size_t>(i)] = var_scale * s.variance(i);
  }
  return out;
}

}  // namespace nilmgp
