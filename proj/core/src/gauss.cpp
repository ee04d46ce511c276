#include "dgp/gauss.hpp"

#include <cmath>
#include <numbers>
#include <sstream>
#include <vector>

#include <Eigen/Cholesky>

#include "dgp/errors.hpp"
#include "dgp/ops.hpp"

namespace dgp {
namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

Var as_column(const Var& v) {
  if (v.value().rank() == 1) return reshape(v, Shape{v.value().size(), 1});
  return v;
}

void require_positive_diagonal(const Var& l, const char* what) {
  const Tensor& lv = l.value();
  if (lv.rank() != 2 || lv.rows() != lv.cols()) {
    throw ShapeError(std::string(what) + ": cov-sqrt must be square, got " +
                     lv.shape_string());
  }
  for (std::size_t i = 0; i < lv.rows(); ++i) {
    if (!(lv(i, i) > 0.0)) {
      throw NumericalError(std::string(what) +
                           ": cov-sqrt has a non-positive diagonal entry at " +
                           std::to_string(i));
    }
  }
}

}  // namespace

void JitterPolicy::validate() const {
  if (!(initial > 0.0) || !(initial <= max) || !(growth > 1.0)) {
    throw Error("invalid jitter policy: need 0 < initial <= max and growth > 1");
  }
}

JitteredCholesky cholesky_with_jitter(const Var& a, const JitterPolicy& policy) {
  policy.validate();
  const Tensor& av = a.value();
  if (av.rank() != 2 || av.rows() != av.cols()) {
    throw ShapeError("cholesky_with_jitter: expected a square matrix, got " +
                     av.shape_string());
  }
  const auto am = av.matrix();
  const double asym = (am - am.transpose()).cwiseAbs().maxCoeff();
  if (am.size() > 0 && !(asym <= 1e-10)) {
    std::ostringstream msg;
    msg << "cholesky_with_jitter: matrix not symmetric (max |A - A^T| = " << asym
        << ")";
    throw NumericalError(msg.str());
  }

  const std::size_t n = av.rows();
  const RowMatrix sym = 0.5 * (am + am.transpose());
  std::vector<double> ladder;
  for (double jitter = policy.initial; jitter <= policy.max * (1.0 + 1e-12);
       jitter *= policy.growth) {
    ladder.push_back(jitter);
    RowMatrix shifted = sym;
    shifted.diagonal().array() += jitter;
    Eigen::LLT<RowMatrix> llt(shifted);
    if (llt.info() != Eigen::Success) continue;
    const RowMatrix l = llt.matrixL();
    if ((l.diagonal().array() <= 0.0).any()) continue;
    Tape& tape = a.tape();
    Tensor eye = Tensor::identity(n);
    for (auto& v : eye.data()) v *= jitter;
    return {cholesky(add(a, tape.constant(std::move(eye)))), jitter};
  }
  std::ostringstream msg;
  msg << "not positive definite after jitter ladder [";
  for (std::size_t i = 0; i < ladder.size(); ++i) msg << (i ? ", " : "") << ladder[i];
  msg << "]";
  throw NotPositiveDefiniteError(msg.str(), std::move(ladder));
}

Var kl_whitened(const FullGaussian& q) {
  require_positive_diagonal(q.cov_sqrt, "kl_whitened");
  const Var m = as_column(q.mean);
  const std::size_t dim = q.cov_sqrt.rows();
  if (m.rows() != dim) {
    throw ShapeError("kl_whitened: mean " + q.mean.value().shape_string() +
                     " does not match cov-sqrt " + q.cov_sqrt.value().shape_string());
  }
  const Var trace_term = sum(square(q.cov_sqrt));
  const Var mahalanobis = sum(square(m));
  const Var logdet = 2.0 * sum(log(diag(q.cov_sqrt)));
  return 0.5 * (trace_term + mahalanobis - static_cast<double>(dim) - logdet);
}

Var kl_general(const FullGaussian& q, const Var& prior_chol) {
  require_positive_diagonal(q.cov_sqrt, "kl_general");
  require_positive_diagonal(prior_chol, "kl_general prior");
  const Var m = as_column(q.mean);
  const std::size_t dim = q.cov_sqrt.rows();
  if (m.rows() != dim || prior_chol.rows() != dim) {
    throw ShapeError("kl_general: inconsistent shapes mean " +
                     q.mean.value().shape_string() + ", cov-sqrt " +
                     q.cov_sqrt.value().shape_string() + ", prior " +
                     prior_chol.value().shape_string());
  }
  const Var scaled_sqrt = triangular_solve(prior_chol, q.cov_sqrt, Triangle::Lower);
  const Var scaled_mean = triangular_solve(prior_chol, m, Triangle::Lower);
  const Var trace_term = sum(square(scaled_sqrt));
  const Var mahalanobis = sum(square(scaled_mean));
  const Var prior_logdet = 2.0 * sum(log(diag(prior_chol)));
  const Var logdet = 2.0 * sum(log(diag(q.cov_sqrt)));
  return 0.5 * (trace_term + mahalanobis - static_cast<double>(dim) +
                prior_logdet - logdet);
}

Var reparam_sample(const Var& mean, const Var& variance, const Var& noise) {
  if (mean.shape() != noise.shape()) {
    throw ShapeError("reparam_sample: noise " + noise.value().shape_string() +
                     " does not match mean " + mean.value().shape_string());
  }
  for (double v : variance.value().data()) {
    if (v < 0.0) throw NumericalError("reparam_sample: negative variance");
  }
  return mean + sqrt(variance) * noise;
}

Var reparam_sample_full(const Var& mean, const Var& cov_sqrt, const Var& noise) {
  if (mean.shape() != noise.shape()) {
    throw ShapeError("reparam_sample_full: noise " + noise.value().shape_string() +
                     " does not match mean " + mean.value().shape_string());
  }
  const Var scaled = matmul(cov_sqrt, as_column(noise));
  return mean + reshape(scaled, mean.shape());
}

double gaussian_logpdf(double y, double mean, double var) {
  if (!(var > 0.0)) throw NumericalError("gaussian_logpdf: variance must be positive");
  const double r = y - mean;
  return -0.5 * (kLog2Pi + std::log(var)) - r * r / (2.0 * var);
}

Var gaussian_logpdf(const Var& y, const Var& mean, const Var& var) {
  for (double v : var.value().data()) {
    if (!(v > 0.0)) throw NumericalError("gaussian_logpdf: variance must be positive");
  }
  return -0.5 * (kLog2Pi + log(var)) - square(y - mean) / (2.0 * var);
}

double gaussian_variational_expectation(double y, double mean, double var,
                                        double noise_var) {
  if (!(noise_var > 0.0)) {
    throw NumericalError("variational expectation: noise variance must be positive");
  }
  if (var < 0.0) throw NumericalError("variational expectation: negative variance");
  const double r = y - mean;
  return -0.5 * (kLog2Pi + std::log(noise_var)) - (r * r + var) / (2.0 * noise_var);
}

Var gaussian_variational_expectation(const Var& y, const Var& mean,
                                     const Var& var, const Var& noise_var) {
  for (double v : noise_var.value().data()) {
    if (!(v > 0.0)) {
      throw NumericalError("variational expectation: noise variance must be positive");
    }
  }
  for (double v : var.value().data()) {
    if (v < 0.0) throw NumericalError("variational expectation: negative variance");
  }
  return -0.5 * (kLog2Pi + log(noise_var)) -
         (square(y - mean) + var) / (2.0 * noise_var);
}

}  // namespace dgp
