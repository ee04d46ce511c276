#pragma once

#include "dgp/autodiff.hpp"

namespace dgp {

/// Diagonal jitter ladder for Cholesky factorisation. The initial jitter is
/// always added; on failure it grows by `growth` until it exceeds `max`.
struct JitterPolicy {
  double initial = 1e-6;
  double growth = 10.0;
  double max = 1e-2;

  void validate() const;
};

struct JitteredCholesky {
  Var factor;
  double jitter = 0.0;
};

/// L with L L^T = A + jitter I for the smallest jitter on the policy ladder
/// that factorises. Throws NotPositiveDefiniteError carrying the ladder.
JitteredCholesky cholesky_with_jitter(const Var& a, const JitterPolicy& policy = {});

/// N(mean, L L^T). `mean` is a length-M vector (or M x 1), `cov_sqrt` is
/// lower triangular with a positive diagonal.
struct FullGaussian {
  Var mean;
  Var cov_sqrt;
};

/// KL(q || N(0, I)).
Var kl_whitened(const FullGaussian& q);

/// KL(q || N(0, K)) with K = prior_chol prior_chol^T, via triangular solves.
Var kl_general(const FullGaussian& q, const Var& prior_chol);

/// mean + sqrt(variance) * noise, elementwise. Throws on negative variance.
Var reparam_sample(const Var& mean, const Var& variance, const Var& noise);

/// mean + cov_sqrt * noise for a vector mean and a lower-triangular scale.
Var reparam_sample_full(const Var& mean, const Var& cov_sqrt, const Var& noise);

double gaussian_logpdf(double y, double mean, double var);
/// Elementwise log N(y; mean, var). Operands broadcast like the binary ops.
Var gaussian_logpdf(const Var& y, const Var& mean, const Var& var);

/// E_{f ~ N(mean, var)} log N(y; f, noise_var), in closed form.
double gaussian_variational_expectation(double y, double mean, double var,
                                        double noise_var);
Var gaussian_variational_expectation(const Var& y, const Var& mean,
                                     const Var& var, const Var& noise_var);

}  // namespace dgp
