#pragma once

#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "dgp/kernels.hpp"
#include "dgp/tensor.hpp"

namespace dgp::testing {

using LMatrix = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;

inline LMatrix to_long(const Tensor& t) {
  LMatrix m(t.rows(), t.cols());
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t j = 0; j < t.cols(); ++j) m(i, j) = t(i, j);
  return m;
}

inline LMatrix oracle_kernel(KernelFamily family, long double variance,
                             const std::vector<double>& ls, const LMatrix& a,
                             const LMatrix& b) {
  LMatrix k(a.rows(), b.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < b.rows(); ++j) {
      long double r2 = 0;
      for (Eigen::Index d = 0; d < a.cols(); ++d) {
        const long double t = (a(i, d) - b(j, d)) / ls[d];
        r2 += t * t;
      }
      if (family == KernelFamily::SquaredExponential) {
        k(i, j) = variance * std::exp(-0.5L * r2);
      } else {
        const long double r = std::sqrt(r2), s5 = std::sqrt(5.0L);
        k(i, j) = variance * (1 + s5 * r + 5.0L / 3.0L * r2) * std::exp(-s5 * r);
      }
    }
  }
  return k;
}

struct OracleOutput {
  LMatrix mean;                     // N x W
  LMatrix variance;                 // N x W
  std::vector<LMatrix> covariance;  // W of N x N
};

// Term-by-term evaluation with an explicit inverse of (K_uu + jitter I). For
// whitened states the substitution m -> L m, S -> L S L^T is applied first.
inline OracleOutput oracle_conditional(KernelFamily family, double variance,
                                       const std::vector<double>& ls, const Tensor& xnew,
                                       const Tensor& z, const Tensor& q_mu,
                                       const std::vector<Tensor>& q_sqrt, bool whitened,
                                       double jitter) {
  const LMatrix x = to_long(xnew), zz = to_long(z);
  LMatrix kuu = oracle_kernel(family, variance, ls, zz, zz);
  kuu += static_cast<long double>(jitter) * LMatrix::Identity(kuu.rows(), kuu.cols());
  const LMatrix kuf = oracle_kernel(family, variance, ls, zz, x);
  const LMatrix kff = oracle_kernel(family, variance, ls, x, x);
  const LMatrix kinv = kuu.fullPivLu().inverse();
  const LMatrix lk = kuu.llt().matrixL();

  OracleOutput out;
  const Eigen::Index n = x.rows(), w_count = q_mu.cols();
  out.mean.resize(n, w_count);
  out.variance.resize(n, w_count);
  for (Eigen::Index w = 0; w < w_count; ++w) {
    LMatrix m = to_long(q_mu).col(w);
    const LMatrix l = to_long(q_sqrt[w]);
    LMatrix s = l * l.transpose();
    if (whitened) {
      m = lk * m;
      s = lk * s * lk.transpose();
    }
    out.mean.col(w) = kuf.transpose() * kinv * m;
    const LMatrix cov = kff + kuf.transpose() * kinv * (s - kuu) * kinv * kuf;
    out.covariance.push_back(cov);
    out.variance.col(w) = cov.diagonal();
  }
  return out;
}

inline double rel_err_long(const Tensor& got, const LMatrix& want) {
  long double num = 0, den = 0;
  for (std::size_t i = 0; i < got.rows(); ++i)
    for (std::size_t j = 0; j < got.cols(); ++j) {
      const long double d = got(i, j) - want(i, j);
      num += d * d;
      den += want(i, j) * want(i, j);
    }
  return static_cast<double>(std::sqrt(num) / std::max(std::sqrt(den), 1e-300L));
}

}  // namespace dgp::testing
