#include "dgp/kernels.hpp"

#include <cmath>

#include "dgp/errors.hpp"
#include "dgp/ops.hpp"

namespace dgp {
namespace {

// Floor on r^2 before the square root in the Matern distance, so that the
// derivative at zero distance stays finite.
constexpr double kMinSquaredDistance = 1e-36;

void check_inputs(const KernelParams& kernel, const Var& x, const char* what) {
  const Tensor& xv = x.value();
  const std::size_t dims = kernel.lengthscales.value().size();
  if (xv.rank() != 2 || xv.cols() != dims) {
    throw ShapeError(std::string(what) + ": inputs " + xv.shape_string() +
                     " do not match " + std::to_string(dims) + " lengthscales");
  }
}

Var scaled_squared_distance(const KernelParams& kernel, const Var& x1,
                            const Var& x2) {
  return squared_distance(x1 / kernel.lengthscales, x2 / kernel.lengthscales);
}

}  // namespace

std::string to_string(KernelFamily family) {
  switch (family) {
    case KernelFamily::SquaredExponential: return "squared_exponential";
    case KernelFamily::Matern52: return "matern52";
  }
  return "unknown";
}

KernelFamily parse_kernel_family(std::string_view name) {
  if (name == "squared_exponential" || name == "se" || name == "rbf") {
    return KernelFamily::SquaredExponential;
  }
  if (name == "matern52" || name == "matern-5/2") return KernelFamily::Matern52;
  throw DataError("unknown kernel family '" + std::string(name) + "'");
}

Var kernel_matrix(const KernelParams& kernel, const Var& x1, const Var& x2) {
  check_inputs(kernel, x1, "kernel_matrix");
  check_inputs(kernel, x2, "kernel_matrix");
  const Var r2 = scaled_squared_distance(kernel, x1, x2);
  switch (kernel.family) {
    case KernelFamily::SquaredExponential:
      return kernel.variance * exp(r2 * -0.5);
    case KernelFamily::Matern52: {
      const Var r2_safe = clamp_min(r2, kMinSquaredDistance);
      const Var sqrt5_r = sqrt(r2_safe) * std::sqrt(5.0);
      const Var poly = 1.0 + sqrt5_r + r2_safe * (5.0 / 3.0);
      return kernel.variance * (poly * exp(-sqrt5_r));
    }
  }
  throw Error("unhandled kernel family");
}

Var kernel_diag(const KernelParams& kernel, const Var& x) {
  check_inputs(kernel, x, "kernel_diag");
  const Var ones = x.tape().constant(Tensor(Shape{x.rows()}, 1.0));
  return kernel.variance * ones;
}

std::string to_string(MeanKind kind) {
  return kind == MeanKind::Zero ? "zero" : "linear";
}

MeanKind parse_mean_kind(std::string_view name) {
  if (name == "zero") return MeanKind::Zero;
  if (name == "linear") return MeanKind::Linear;
  throw DataError("unknown mean function '" + std::string(name) + "'");
}

Var mean_apply(const MeanFunction& mean_function, const Var& x) {
  const Tensor& xv = x.value();
  if (xv.rank() != 2) {
    throw ShapeError("mean_apply: expected a matrix, got " + xv.shape_string());
  }
  if (mean_function.kind == MeanKind::Zero) {
    return x.tape().constant(Tensor(Shape{xv.rows(), mean_function.output_dim}));
  }
  const Tensor& w = mean_function.weights.value();
  const Tensor& b = mean_function.bias.value();
  if (w.rank() != 2 || w.rows() != xv.cols() || b.size() != w.cols() ||
      w.cols() != mean_function.output_dim) {
    throw ShapeError("mean_apply: weights " + w.shape_string() + " and bias " +
                     b.shape_string() + " incompatible with inputs " +
                     xv.shape_string());
  }
  Var bias = mean_function.bias;
  if (b.rank() != 1) bias = reshape(bias, Shape{b.size()});
  return add(matmul(x, mean_function.weights), bias);
}

}  // namespace dgp
