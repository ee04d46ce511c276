#pragma once

#include <cstddef>
#include <string>
#include <string_view>

#include "dgp/autodiff.hpp"

namespace dgp {

enum class KernelFamily { SquaredExponential, Matern52 };

std::string to_string(KernelFamily family);
KernelFamily parse_kernel_family(std::string_view name);

/// Stationary ARD kernel with its (already positive) hyperparameters bound on
/// a tape. Layers store log-variance and log-lengthscales and exponentiate.
struct KernelParams {
  KernelFamily family = KernelFamily::SquaredExponential;
  Var variance;      // scalar
  Var lengthscales;  // one per input dimension
};

/// Gram matrix k(X1, X2), N x M.
Var kernel_matrix(const KernelParams& kernel, const Var& x1, const Var& x2);

/// diag k(X, X) as a length-N vector; the signal variance for stationary kernels.
Var kernel_diag(const KernelParams& kernel, const Var& x);

enum class MeanKind { Zero, Linear };

std::string to_string(MeanKind kind);
MeanKind parse_mean_kind(std::string_view name);

/// m(X) = 0 or X W + b. `weights` is D x W and `bias` has length W; both are
/// unused for the zero kind.
struct MeanFunction {
  MeanKind kind = MeanKind::Zero;
  std::size_t output_dim = 1;
  Var weights;
  Var bias;
};

Var mean_apply(const MeanFunction& mean_function, const Var& x);

}  // namespace dgp
