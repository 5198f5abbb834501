#include "nilmgp/kernels.hpp"

#include "nilmgp/errors.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <string>

namespace nilmgp {

namespace {

constexpr double kSqrt5 = 2.23606797749978969640917366873127623544;

struct MaternLeaf {
  double signal_variance;
  double raw_signal_variance;
  Eigen::VectorXd lengthscales;  // broadcast to input_dim
  Eigen::VectorXd raw_lengthscales;
  bool ard;
};

// Calls fn(leaf_spec, offset) for every non-Sum node, in parameter order.
void for_each_leaf(const KernelSpec& spec, int offset,
                   const std::function<void(const KernelSpec&, int)>& fn) {
  if (spec.kind == KernelKind::Sum) {
    for (const auto& child : spec.children) {
      for_each_leaf(child, offset, fn);
      offset += child.num_params();
    }
    return;
  }
  fn(spec, offset);
}

MaternLeaf matern_leaf(const KernelSpec& leaf, const KernelParams& params, int offset) {
  MaternLeaf out;
  out.ard = leaf.kind == KernelKind::Matern52ARD;
  out.raw_signal_variance = params.raw(offset);
  out.signal_variance = softplus(out.raw_signal_variance);
  const int d = leaf.input_dim;
  out.lengthscales.resize(d);
  out.raw_lengthscales.resize(d);
  for (int k = 0; k < d; ++k) {
    const double raw = params.raw(offset + 1 + (out.ard ? k : 0));
    out.raw_lengthscales(k) = raw;
    out.lengthscales(k) = softplus(raw);
  }
  return out;
}

// Column-major d x n copy of X with each column scaled by 1/lengthscale, so a
// point is contiguous in memory.
Eigen::MatrixXd scaled_transpose(const Eigen::MatrixXd& X, const Eigen::VectorXd& lengthscales) {
  return (X * lengthscales.cwiseInverse().asDiagonal()).transpose();
}

double matern_from_r(double r, double signal_variance) {
  const double sr = kSqrt5 * r;
  return signal_variance * (1.0 + sr + sr * sr / 3.0) * std::exp(-sr);
}

// -(dk/dr)/r, finite at r = 0 and non-negative.
double matern_slope_over_r(double r, double signal_variance) {
  const double sr = kSqrt5 * r;
  return (5.0 / 3.0) * signal_variance * (1.0 + sr) * std::exp(-sr);
}

void check_same_dim(const Eigen::MatrixXd& X, const Eigen::MatrixXd& X2, const KernelSpec& spec) {
  if (X.cols() != spec.input_dim || X2.cols() != spec.input_dim) {
    throw InputError("kernel input has " + std::to_string(X.cols()) + " and " +
                     std::to_string(X2.cols()) + " columns, expected " +
                     std::to_string(spec.input_dim));
  }
}

void check_params(const KernelSpec& spec, const KernelParams& params) {
  if (params.raw.size() != spec.num_params()) {
    throw InputError("kernel expects " + std::to_string(spec.num_params()) +
                     " raw parameters, got " + std::to_string(params.raw.size()));
  }
}

const char* kind_name(KernelKind kind) {
  switch (kind) {
    case KernelKind::Matern52: return "matern52";
    case KernelKind::Matern52ARD: return "matern52_ard";
    case KernelKind::LinearOnFeature: return "linear";
    case KernelKind::Sum: return "sum";
  }
  return "?";
}

}  // namespace

KernelSpec KernelSpec::matern52() {
  KernelSpec spec;
  spec.kind = KernelKind::Matern52;
  spec.input_dim = 1;
  return spec;
}

KernelSpec KernelSpec::matern52_ard(int input_dim) {
  KernelSpec spec;
  spec.kind = KernelKind::Matern52ARD;
  spec.input_dim = input_dim;
  spec.validate();
  return spec;
}

KernelSpec KernelSpec::linear_on_feature(int input_dim, int feature_index) {
  KernelSpec spec;
  spec.kind = KernelKind::LinearOnFeature;
  spec.input_dim = input_dim;
  spec.linear_feature_index = feature_index;
  spec.validate();
  return spec;
}

KernelSpec KernelSpec::sum(std::vector<KernelSpec> children) {
  KernelSpec spec;
  spec.kind = KernelKind::Sum;
  spec.input_dim = children.empty() ? 1 : children.front().input_dim;
  spec.children = std::move(children);
  spec.validate();
  return spec;
}

void KernelSpec::validate() const {
  if (input_dim < 1) throw InputError("kernel input_dim must be >= 1");
  switch (kind) {
    case KernelKind::Matern52:
      if (input_dim != 1) throw InputError("isotropic matern52 requires input_dim = 1");
      break;
    case KernelKind::Matern52ARD:
      break;
    case KernelKind::LinearOnFeature:
      if (!linear_feature_index || *linear_feature_index < 0 ||
          *linear_feature_index >= input_dim) {
        throw InputError("linear kernel feature index out of range for input_dim " +
                         std::to_string(input_dim));
      }
      break;
    case KernelKind::Sum:
      if (children.size() < 2) throw InputError("sum kernel needs at least two children");
      for (const auto& child : children) {
        child.validate();
        if (child.input_dim != input_dim) {
          throw InputError("sum kernel children disagree on input_dim");
        }
      }
      break;
  }
}

int KernelSpec::num_params() const {
  switch (kind) {
    case KernelKind::Matern52: return 2;
    case KernelKind::Matern52ARD: return 1 + input_dim;
    case KernelKind::LinearOnFeature: return 1;
    case KernelKind::Sum: {
      int total = 0;
      for (const auto& child : children) total += child.num_params();
      return total;
    }
  }
  return 0;
}

std::vector<std::string> KernelSpec::param_names() const {
  std::vector<std::string> names;
  int leaf_index = 0;
  for_each_leaf(*this, 0, [&](const KernelSpec& leaf, int) {
    const std::string prefix =
        kind == KernelKind::Sum ? std::to_string(leaf_index) + "." : std::string();
    ++leaf_index;
    switch (leaf.kind) {
      case KernelKind::Matern52:
        names.push_back(prefix + "matern.signal_variance");
        names.push_back(prefix + "matern.lengthscale");
        break;
      case KernelKind::Matern52ARD:
        names.push_back(prefix + "matern.signal_variance");
        for (int k = 0; k < leaf.input_dim; ++k) {
          names.push_back(prefix + "matern.lengthscale[" + std::to_string(k) + "]");
        }
        break;
      case KernelKind::LinearOnFeature:
        names.push_back(prefix + "linear.variance[" + std::to_string(*leaf.linear_feature_index) +
                        "]");
        break;
      case KernelKind::Sum:
        names.push_back(prefix + kind_name(leaf.kind));
        break;
    }
  });
  return names;
}

double softplus(double raw) {
  return raw > 0.0 ? raw + std::log1p(std::exp(-raw)) : std::log1p(std::exp(raw));
}

double softplus_grad(double raw) {
  return raw >= 0.0 ? 1.0 / (1.0 + std::exp(-raw)) : std::exp(raw) / (1.0 + std::exp(raw));
}

double inverse_softplus(double value) {
  if (!(value > 0.0)) throw InputError("softplus inverse needs a positive value");
  return value + std::log(-std::expm1(-value));
}

KernelParams init_params(const KernelSpec& spec, std::mt19937_64& rng) {
  spec.validate();
  std::normal_distribution<double> normal(0.0, 1.0);
  KernelParams params;
  params.raw.resize(spec.num_params());
  for (Eigen::Index i = 0; i < params.raw.size(); ++i) params.raw(i) = normal(rng);
  return params;
}

KernelParams params_from_constrained(const KernelSpec& spec, const Eigen::VectorXd& values) {
  if (values.size() != spec.num_params()) {
    throw InputError("constrained parameter vector has wrong length");
  }
  KernelParams params;
  params.raw = values.unaryExpr([](double v) { return inverse_softplus(v); });
  return params;
}

Eigen::VectorXd constrained_values(const KernelParams& params) {
  return params.raw.unaryExpr([](double r) { return softplus(r); });
}

double eval_matern52(ConstRowRef x, ConstRowRef x2, double signal_variance,
                     const Eigen::VectorXd& lengthscales) {
  if (x.size() != x2.size()) throw InputError("matern52: input dimension mismatch");
  if (lengthscales.size() != 1 && lengthscales.size() != x.size()) {
    throw InputError("matern52: lengthscale count must be 1 or the input dimension");
  }
  double r2 = 0.0;
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    const double inv = 1.0 / lengthscales(lengthscales.size() == 1 ? 0 : k);
    const double diff = x(k) * inv - x2(k) * inv;
    r2 += diff * diff;
  }
  return matern_from_r(std::sqrt(r2), signal_variance);
}

double eval_linear(ConstRowRef x, ConstRowRef x2, double linear_variance, int feature_index) {
  if (x.size() != x2.size()) throw InputError("linear: input dimension mismatch");
  if (feature_index < 0 || feature_index >= x.size()) {
    throw InputError("linear: feature index " + std::to_string(feature_index) + " out of range");
  }
  return linear_variance * x(feature_index) * x2(feature_index);
}

double eval_kernel(ConstRowRef x, ConstRowRef x2, const KernelSpec& spec,
                   const KernelParams& params) {
  spec.validate();
  check_params(spec, params);
  if (x.size() != spec.input_dim || x2.size() != spec.input_dim) {
    throw InputError("kernel input dimension mismatch");
  }
  double total = 0.0;
  for_each_leaf(spec, 0, [&](const KernelSpec& leaf, int offset) {
    if (leaf.kind == KernelKind::LinearOnFeature) {
      total += eval_linear(x, x2, softplus(params.raw(offset)), *leaf.linear_feature_index);
    } else {
      const auto m = matern_leaf(leaf, params, offset);
      total += eval_matern52(x, x2, m.signal_variance, m.lengthscales);
    }
  });
  return total;
}

Eigen::MatrixXd gram(const Eigen::MatrixXd& X, const Eigen::MatrixXd& X2, const KernelSpec& spec,
                     const KernelParams& params) {
  spec.validate();
  check_params(spec, params);
  check_same_dim(X, X2, spec);
  const Eigen::Index n = X.rows();
  const Eigen::Index m = X2.rows();
  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n, m);
  for_each_leaf(spec, 0, [&](const KernelSpec& leaf, int offset) {
    if (leaf.kind == KernelKind::LinearOnFeature) {
      // v * (x_i * x_j) keeps gram(X, X) exactly symmetric.
      const int c = *leaf.linear_feature_index;
      const double v = softplus(params.raw(offset));
      for (Eigen::Index j = 0; j < m; ++j) {
        for (Eigen::Index i = 0; i < n; ++i) K(i, j) += v * (X(i, c) * X2(j, c));
      }
      return;
    }
    const auto leaf_params = matern_leaf(leaf, params, offset);
    const Eigen::MatrixXd A = scaled_transpose(X, leaf_params.lengthscales);
    const Eigen::MatrixXd B = scaled_transpose(X2, leaf_params.lengthscales);
    // i outer: each data point is read once while B stays in cache.
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < m; ++j) {
        const double r = std::sqrt((A.col(i) - B.col(j)).squaredNorm());
        K(i, j) += matern_from_r(r, leaf_params.signal_variance);
      }
    }
  });
  return K;
}

Eigen::VectorXd gram_diag(const Eigen::MatrixXd& X, const KernelSpec& spec,
                          const KernelParams& params) {
  spec.validate();
  check_params(spec, params);
  check_same_dim(X, X, spec);
  Eigen::VectorXd diag = Eigen::VectorXd::Zero(X.rows());
  for_each_leaf(spec, 0, [&](const KernelSpec& leaf, int offset) {
    if (leaf.kind == KernelKind::LinearOnFeature) {
      diag += softplus(params.raw(offset)) * X.col(*leaf.linear_feature_index).array().square().matrix();
    } else {
      diag.array() += softplus(params.raw(offset));
    }
  });
  return diag;
}

Eigen::MatrixXd gram_grad(const Eigen::MatrixXd& X, const Eigen::MatrixXd& X2,
                          const KernelSpec& spec, const KernelParams& params, int param_index) {
  spec.validate();
  check_params(spec, params);
  check_same_dim(X, X2, spec);
  if (param_index < 0 || param_index >= spec.num_params()) {
    throw InputError("gram_grad: parameter index " + std::to_string(param_index) +
                     " out of range");
  }
  const Eigen::Index n = X.rows();
  const Eigen::Index m = X2.rows();
  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(n, m);
  for_each_leaf(spec, 0, [&](const KernelSpec& leaf, int offset) {
    const int local = param_index - offset;
    if (local < 0 || local >= leaf.num_params()) return;
    if (leaf.kind == KernelKind::LinearOnFeature) {
      const int c = *leaf.linear_feature_index;
      G = softplus_grad(params.raw(offset)) * X.col(c) * X2.col(c).transpose();
      return;
    }
    const auto lp = matern_leaf(leaf, params, offset);
    const Eigen::MatrixXd A = scaled_transpose(X, lp.lengthscales);
    const Eigen::MatrixXd B = scaled_transpose(X2, lp.lengthscales);
    for (Eigen::Index j = 0; j < m; ++j) {
      for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::VectorXd diff = A.col(i) - B.col(j);
        const double r = diff.norm();
        if (local == 0) {
          G(i, j) = matern_from_r(r, lp.signal_variance) / lp.signal_variance *
                    softplus_grad(lp.raw_signal_variance);
          continue;
        }
        // dk/dl_k = slope_over_r * (scaled diff_k)^2 / l_k
        const double w = matern_slope_over_r(r, lp.signal_variance);
        double acc = 0.0;
        if (lp.ard) {
          const int k = local - 1;
          acc = w * diff(k) * diff(k) / lp.lengthscales(k) * softplus_grad(lp.raw_lengthscales(k));
        } else {
          acc = w * diff.squaredNorm() / lp.lengthscales(0) * softplus_grad(lp.raw_lengthscales(0));
        }
        G(i, j) = acc;
      }
    }
  });
  return G;
}

Eigen::VectorXd contract_param_grad(const Eigen::MatrixXd& X, const Eigen::MatrixXd& X2,
                                    const KernelSpec& spec, const KernelParams& params,
                                    const Eigen::MatrixXd& adjoint) {
  return contract_gram(X, X2, spec, params, adjoint).param_grad;
}

Eigen::VectorXd contract_diag_param_grad(const Eigen::MatrixXd& X, const KernelSpec& spec,
                                         const KernelParams& params,
                                         const Eigen::VectorXd& adjoint) {
  spec.validate();
  check_params(spec, params);
  check_same_dim(X, X, spec);
  if (adjoint.size() != X.rows()) throw InputError("contract_diag_param_grad: adjoint length");
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(spec.num_params());
  for_each_leaf(spec, 0, [&](const KernelSpec& leaf, int offset) {
    const double chain = softplus_grad(params.raw(offset));
    if (leaf.kind == KernelKind::LinearOnFeature) {
      const auto col = X.col(*leaf.linear_feature_index).array();
      grad(offset) += (adjoint.array() * col.square()).sum() * chain;
    } else {
      // k(x, x) = signal variance; lengthscales do not enter the diagonal.
      grad(offset) += adjoint.sum() * chain;
    }
  });
  return grad;
}

Eigen::MatrixXd contract_second_input_grad(const Eigen::MatrixXd& X, const Eigen::MatrixXd& X2,
                                           const KernelSpec& spec, const KernelParams& params,
                                           const Eigen::MatrixXd& adjoint) {
  return contract_gram(X, X2, spec, params, adjoint).input_grad;
}

GramContraction contract_gram(const Eigen::MatrixXd& X, const Eigen::MatrixXd& X2,
                              const KernelSpec& spec, const KernelParams& params,
                              const Eigen::MatrixXd& adjoint) {
  spec.validate();
  check_params(spec, params);
  check_same_dim(X, X2, spec);
  if (adjoint.rows() != X.rows() || adjoint.cols() != X2.rows()) {
    throw InputError("kernel contraction: adjoint shape mismatch");
  }
  const Eigen::Index n = X.rows();
  const Eigen::Index m = X2.rows();
  const Eigen::Index d = spec.input_dim;
  GramContraction out;
  out.param_grad = Eigen::VectorXd::Zero(spec.num_params());
  Eigen::MatrixXd gradT = Eigen::MatrixXd::Zero(d, m);
  for_each_leaf(spec, 0, [&](const KernelSpec& leaf, int offset) {
    if (leaf.kind == KernelKind::LinearOnFeature) {
      const int c = *leaf.linear_feature_index;
      const Eigen::VectorXd adjT_x = adjoint.transpose() * X.col(c);  // m
      out.param_grad(offset) += X2.col(c).dot(adjT_x) * softplus_grad(params.raw(offset));
      // d/dx2_jc of v * x_ic * x2_jc = v * x_ic
      gradT.row(c) += softplus(params.raw(offset)) * adjT_x.transpose();
      return;
    }
    const auto lp = matern_leaf(leaf, params, offset);
    const Eigen::MatrixXd A = scaled_transpose(X, lp.lengthscales);   // d x n
    const Eigen::MatrixXd B = scaled_transpose(X2, lp.lengthscales);  // d x m
    // W(i,j) = adjoint(i,j) * (-(dk/dr)/r); every scaled-coordinate
    // derivative is W times a coordinate difference.
    Eigen::MatrixXd W(n, m);
    double d_signal = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < m; ++j) {
        const double a = adjoint(i, j);
        if (a == 0.0) {
          W(i, j) = 0.0;
          continue;
        }
        const double r = std::sqrt((A.col(i) - B.col(j)).squaredNorm());
        d_signal += a * matern_from_r(r, lp.signal_variance);
        W(i, j) = a * matern_slope_over_r(r, lp.signal_variance);
      }
    }
    const Eigen::VectorXd row_w = W.rowwise().sum();           // n
    const Eigen::RowVectorXd col_w = W.colwise().sum();        // m
    const Eigen::MatrixXd AW = A * W;                          // d x m
    // sum_ij W_ij (a_ki - b_kj)^2, expanded.
    const Eigen::VectorXd d_ls = A.cwiseAbs2() * row_w + B.cwiseAbs2() * col_w.transpose() -
                                 2.0 * AW.cwiseProduct(B).rowwise().sum();
    out.param_grad(offset) += d_signal / lp.signal_variance * softplus_grad(lp.raw_signal_variance);
    if (lp.ard) {
      for (Eigen::Index k = 0; k < d; ++k) {
        out.param_grad(offset + 1 + k) +=
            d_ls(k) / lp.lengthscales(k) * softplus_grad(lp.raw_lengthscales(k));
      }
    } else {
      out.param_grad(offset + 1) +=
          d_ls.sum() / lp.lengthscales(0) * softplus_grad(lp.raw_lengthscales(0));
    }
    // dk/dz_j = -W * (b_j - a_i), per scaled unit, then 1/l for raw units.
    const Eigen::MatrixXd acc = AW - B * col_w.asDiagonal();
    gradT += lp.lengthscales.cwiseInverse().asDiagonal() * acc;
  });
  out.input_grad = gradT.transpose();
  return out;
}

}  // namespace nilmgp
