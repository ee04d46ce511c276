#pragma once

#include <vector>

#include "dgp/autodiff.hpp"
#include "dgp/gauss.hpp"
#include "dgp/kernels.hpp"

namespace dgp {

/// Inducing inputs and the variational posterior q(u) per output.
///
/// All W outputs share `inducing_inputs` (M x D) and the kernel; output w has
/// mean column w of `q_mu` (M x W) and covariance q_sqrt[w] q_sqrt[w]^T. In
/// whitened form these describe q(v) with u = L_K v, L_K = chol(K_uu).
struct InducingState {
  Var inducing_inputs;
  Var q_mu;
  std::vector<Var> q_sqrt;
  bool whitened = true;
};

struct ConditionalOutput {
  Var mean;                     // N x W
  Var variance;                 // N x W marginal variances
  std::vector<Var> covariance;  // W of N x N, full_cov mode only
  Var kuu_cholesky;             // L_K, M x M
  double jitter = 0.0;
};

/// Predictive Gaussian of f(Xnew) under q(f) with u integrated out:
///   mean = k_u(x)^T K_uu^-1 m
///   cov  = k(x, x') + k_u(x)^T K_uu^-1 (S - K_uu) K_uu^-1 k_u(x')
/// evaluated with triangular solves against the jittered Cholesky of K_uu.
/// The marginal path never forms N x N matrices. Marginal variances in
/// [-1e-12, 0) are clamped to zero; anything lower is a NumericalError.
ConditionalOutput conditional(const Var& xnew, const InducingState& state,
                              const KernelParams& kernel, bool full_cov,
                              const JitterPolicy& jitter = {});

}  // namespace dgp
