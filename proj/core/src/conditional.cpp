#include "dgp/conditional.hpp"

#include <string>

#include "dgp/errors.hpp"
#include "dgp/ops.hpp"

namespace dgp {
namespace {

constexpr double kVarianceTolerance = 1e-12;

// Adds a constant correction that lifts round-off negatives to exactly zero.
Var clamp_roundoff(const Var& variance) {
  const Tensor& v = variance.value();
  Tensor fix(v.shape());
  bool any = false;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (v[i] < -kVarianceTolerance) {
      throw NumericalError("conditional: negative predictive variance " +
                           std::to_string(v[i]));
    }
    if (v[i] < 0.0) {
      fix[i] = -v[i];
      any = true;
    }
  }
  if (!any) return variance;
  return add(variance, variance.tape().constant(std::move(fix)));
}

void check_state(const Var& xnew, const InducingState& state,
                 const KernelParams& kernel) {
  const Tensor& z = state.inducing_inputs.value();
  const Tensor& mu = state.q_mu.value();
  const std::size_t dims = kernel.lengthscales.value().size();
  if (z.rank() != 2 || z.rows() == 0 || z.cols() != dims) {
    throw ShapeError("conditional: inducing inputs " + z.shape_string() +
                     " incompatible with " + std::to_string(dims) +
                     " lengthscales");
  }
  if (xnew.value().rank() != 2 || xnew.value().cols() != dims) {
    throw ShapeError("conditional: inputs " + xnew.value().shape_string() +
                     " incompatible with " + std::to_string(dims) +
                     " lengthscales");
  }
  if (mu.rank() != 2 || mu.rows() != z.rows() || mu.cols() == 0 ||
      state.q_sqrt.size() != mu.cols()) {
    throw ShapeError("conditional: q_mu " + mu.shape_string() + " with " +
                     std::to_string(state.q_sqrt.size()) +
                     " cov-sqrts inconsistent with " + std::to_string(z.rows()) +
                     " inducing points");
  }
  for (const auto& l : state.q_sqrt) {
    if (l.value().rank() != 2 || l.rows() != z.rows() || l.cols() != z.rows()) {
      throw ShapeError("conditional: cov-sqrt " + l.value().shape_string() +
                       " does not match " + std::to_string(z.rows()) +
                       " inducing points");
    }
  }
}

}  // namespace

ConditionalOutput conditional(const Var& xnew, const InducingState& state,
                              const KernelParams& kernel, bool full_cov,
                              const JitterPolicy& jitter) {
  check_state(xnew, state, kernel);
  const Var& z = state.inducing_inputs;
  const std::size_t num_outputs = state.q_mu.cols();
  const std::size_t n = xnew.rows();

  const Var kuu = kernel_matrix(kernel, z, z);
  const JitteredCholesky chol = cholesky_with_jitter(kuu, jitter);
  const Var& lk = chol.factor;
  const Var kuf = kernel_matrix(kernel, z, xnew);

  // a_white = L_K^-1 K_uf; the projection applied to u is a = L_K^-T a_white
  // in the unwhitened case and a_white itself when whitened.
  const Var a_white = triangular_solve(lk, kuf, Triangle::Lower);
  const Var a = state.whitened
                    ? a_white
                    : triangular_solve(transpose(lk), a_white, Triangle::Upper);

  ConditionalOutput out;
  out.kuu_cholesky = lk;
  out.jitter = chol.jitter;
  out.mean = matmul(transpose(a), state.q_mu);

  if (full_cov) {
    const Var kff = kernel_matrix(kernel, xnew, xnew);
    const Var base = kff - matmul(transpose(a_white), a_white);
    std::vector<Var> diagonals;
    for (std::size_t w = 0; w < num_outputs; ++w) {
      const Var la = matmul(transpose(state.q_sqrt[w]), a);
      const Var cov = base + matmul(transpose(la), la);
      out.covariance.push_back(cov);
      diagonals.push_back(reshape(clamp_roundoff(diag(cov)), Shape{n, 1}));
    }
    out.variance = concat(diagonals, 1);
    return out;
  }

  const Var base = kernel_diag(kernel, xnew) - sum(square(a_white), 0);
  std::vector<Var> columns;
  for (std::size_t w = 0; w < num_outputs; ++w) {
    const Var la = matmul(transpose(state.q_sqrt[w]), a);
    const Var var = clamp_roundoff(base + sum(square(la), 0));
    columns.push_back(reshape(var, Shape{n, 1}));
  }
  out.variance = concat(columns, 1);
  return out;
}

}  // namespace dgp
