#include "dgp/layers.hpp"

#include <cmath>

#include "dgp/errors.hpp"
#include "dgp/ops.hpp"

namespace dgp {
namespace {

Var zero_scalar(Tape& tape) { return tape.constant(Tensor::scalar(0.0)); }

void check_input(const Var& input, std::size_t dims, const char* layer) {
  const Tensor& v = input.value();
  if (v.rank() != 2 || v.cols() != dims) {
    throw ShapeError(std::string(layer) + ": input " + v.shape_string() +
                     " does not have " + std::to_string(dims) + " columns");
  }
}

// Factorised Gaussian KL to N(0, 1): 0.5 sum(var + m^2 - 1 - log var).
Var factorised_kl(const Var& means, const Var& log_variances) {
  return 0.5 * sum(exp(log_variances) + square(means) - 1.0 - log_variances);
}

Tensor strictly_lower_mask(std::size_t n) {
  Tensor mask(Shape{n, n});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < i; ++j) mask(i, j) = 1.0;
  }
  return mask;
}

}  // namespace

std::string to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::GP: return "gp";
    case LayerKind::Latent: return "latent";
    case LayerKind::Dense: return "dense";
  }
  return "unknown";
}

std::string to_string(Activation activation) {
  return activation == Activation::Tanh ? "tanh" : "identity";
}

Activation parse_activation(std::string_view name) {
  if (name == "identity" || name == "linear") return Activation::Identity;
  if (name == "tanh") return Activation::Tanh;
  throw DataError("unknown activation '" + std::string(name) + "'");
}

Tensor ForwardContext::draw_noise(const Shape& shape) const {
  if (zero_noise) return Tensor(shape);
  if (!rng) throw Error("sampling layer called without a random stream");
  return rng->normal_tensor(shape);
}

Tensor& Layer::parameter(std::string_view name) {
  for (auto& p : params_) {
    if (p.name == name) return p.value;
  }
  throw Error("layer has no parameter '" + std::string(name) + "'");
}

const Tensor& Layer::parameter(std::string_view name) const {
  for (const auto& p : params_) {
    if (p.name == name) return p.value;
  }
  throw Error("layer has no parameter '" + std::string(name) + "'");
}

std::vector<Var> Layer::bind(Tape& tape, const std::string& prefix) const {
  std::vector<Var> vars;
  vars.reserve(params_.size());
  for (const auto& p : params_) vars.push_back(tape.variable(prefix + p.name, p.value));
  return vars;
}

std::size_t Layer::add_parameter(std::string name, Tensor value) {
  params_.push_back(Parameter{std::move(name), std::move(value)});
  return params_.size() - 1;
}

// ---------------------------------------------------------------------------
// GPLayer

void GPLayerConfig::validate() const {
  if (input_dim == 0 || output_dim == 0 || num_inducing == 0) {
    throw ShapeError("GP layer dimensions must be at least 1 (input " +
                     std::to_string(input_dim) + ", output " +
                     std::to_string(output_dim) + ", inducing " +
                     std::to_string(num_inducing) + ")");
  }
}

GPLayer::GPLayer(GPLayerConfig config) : config_(config) {
  config_.validate();
  const std::size_t m = config_.num_inducing;
  const std::size_t d = config_.input_dim;
  const std::size_t w = config_.output_dim;
  z_ = add_parameter("inducing_inputs", Tensor(Shape{m, d}));
  q_mu_ = add_parameter("q_mu", Tensor(Shape{m, w}));
  for (std::size_t k = 0; k < w; ++k) {
    const std::string prefix = "q_sqrt." + std::to_string(k);
    q_lower_.push_back(add_parameter(prefix + ".lower", Tensor(Shape{m, m})));
    q_log_diag_.push_back(add_parameter(prefix + ".log_diag", Tensor(Shape{m})));
  }
  log_variance_ = add_parameter("kernel.log_variance", Tensor::scalar(0.0));
  log_lengthscales_ = add_parameter("kernel.log_lengthscales", Tensor(Shape{d}));
  if (config_.mean_function == MeanKind::Linear) {
    mean_weights_ = add_parameter("mean.weights", Tensor(Shape{d, w}));
    mean_bias_ = add_parameter("mean.bias", Tensor(Shape{w}));
  }
}

std::unique_ptr<Layer> GPLayer::clone() const {
  return std::make_unique<GPLayer>(*this);
}

void GPLayer::set_inducing_inputs(const Tensor& z) {
  if (z.shape() != parameters()[z_].value.shape()) {
    throw ShapeError("inducing inputs must have shape " +
                     parameters()[z_].value.shape_string() + ", got " +
                     z.shape_string());
  }
  parameters()[z_].value = z;
}

void GPLayer::set_q_mu(const Tensor& q_mu) {
  if (q_mu.shape() != parameters()[q_mu_].value.shape()) {
    throw ShapeError("q_mu must have shape " +
                     parameters()[q_mu_].value.shape_string() + ", got " +
                     q_mu.shape_string());
  }
  parameters()[q_mu_].value = q_mu;
}

void GPLayer::set_q_sqrt(std::size_t output, const Tensor& lower) {
  const std::size_t m = config_.num_inducing;
  if (output >= config_.output_dim) throw ShapeError("q_sqrt output index out of range");
  if (lower.rank() != 2 || lower.rows() != m || lower.cols() != m) {
    throw ShapeError("q_sqrt must be " + std::to_string(m) + "x" +
                     std::to_string(m) + ", got " + lower.shape_string());
  }
  Tensor strict(Shape{m, m});
  Tensor log_diag(Shape{m});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      if (j > i && lower(i, j) != 0.0) {
        throw NumericalError("q_sqrt must be lower triangular");
      }
      if (j < i) strict(i, j) = lower(i, j);
    }
    if (!(lower(i, i) > 0.0)) {
      throw NumericalError("q_sqrt must have a positive diagonal");
    }
    log_diag[i] = std::log(lower(i, i));
  }
  parameters()[q_lower_[output]].value = std::move(strict);
  parameters()[q_log_diag_[output]].value = std::move(log_diag);
}

Tensor GPLayer::q_sqrt(std::size_t output) const {
  const std::size_t m = config_.num_inducing;
  const Tensor& strict = parameters()[q_lower_.at(output)].value;
  const Tensor& log_diag = parameters()[q_log_diag_.at(output)].value;
  Tensor l(Shape{m, m});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < i; ++j) l(i, j) = strict(i, j);
    l(i, i) = std::exp(log_diag[i]);
  }
  return l;
}

void GPLayer::set_kernel_hyperparameters(double variance,
                                         std::span<const double> lengthscales) {
  if (!(variance > 0.0)) throw NumericalError("kernel variance must be positive");
  if (lengthscales.size() != config_.input_dim) {
    throw ShapeError("expected " + std::to_string(config_.input_dim) +
                     " lengthscales, got " + std::to_string(lengthscales.size()));
  }
  Tensor logs(Shape{lengthscales.size()});
  for (std::size_t i = 0; i < lengthscales.size(); ++i) {
    if (!(lengthscales[i] > 0.0)) {
      throw NumericalError("kernel lengthscales must be positive");
    }
    logs[i] = std::log(lengthscales[i]);
  }
  parameters()[log_variance_].value = Tensor::scalar(std::log(variance));
  parameters()[log_lengthscales_].value = std::move(logs);
}

void GPLayer::set_mean_function(const Tensor& weights, const Tensor& bias) {
  if (config_.mean_function != MeanKind::Linear) {
    throw Error("set_mean_function on a layer with a zero mean function");
  }
  if (weights.shape() != parameters()[mean_weights_].value.shape() ||
      bias.size() != config_.output_dim) {
    throw ShapeError("mean function weights " + weights.shape_string() +
                     " / bias " + bias.shape_string() + " do not match layer");
  }
  parameters()[mean_weights_].value = weights;
  parameters()[mean_bias_].value = bias.reshaped(Shape{config_.output_dim});
}

Var GPLayer::bound_q_sqrt(std::span<const Var> params, std::size_t output) const {
  const std::size_t m = config_.num_inducing;
  Tape& tape = params[z_].tape();
  const Var strict =
      mul(params[q_lower_[output]], tape.constant(strictly_lower_mask(m)));
  const Var diagonal =
      mul(tape.constant(Tensor::identity(m)), exp(params[q_log_diag_[output]]));
  return add(strict, diagonal);
}

InducingState GPLayer::inducing_state(std::span<const Var> params) const {
  InducingState state;
  state.inducing_inputs = params[z_];
  state.q_mu = params[q_mu_];
  state.whitened = config_.whitened;
  for (std::size_t w = 0; w < config_.output_dim; ++w) {
    state.q_sqrt.push_back(bound_q_sqrt(params, w));
  }
  return state;
}

KernelParams GPLayer::kernel_params(std::span<const Var> params) const {
  return KernelParams{config_.kernel, exp(params[log_variance_]),
                      exp(params[log_lengthscales_])};
}

MeanFunction GPLayer::mean_function(std::span<const Var> params) const {
  MeanFunction mf;
  mf.kind = config_.mean_function;
  mf.output_dim = config_.output_dim;
  if (mf.kind == MeanKind::Linear) {
    mf.weights = params[mean_weights_];
    mf.bias = params[mean_bias_];
  }
  return mf;
}

ConditionalOutput GPLayer::predict_f(const Var& input, std::span<const Var> params,
                                     bool full_cov,
                                     const JitterPolicy& jitter) const {
  check_input(input, config_.input_dim, "GP layer");
  if (params.size() != parameters().size()) {
    throw Error("GP layer: expected " + std::to_string(parameters().size()) +
                " bound parameters, got " + std::to_string(params.size()));
  }
  ConditionalOutput out = conditional(input, inducing_state(params),
                                      kernel_params(params), full_cov, jitter);
  if (config_.mean_function == MeanKind::Linear) {
    out.mean = add(out.mean, mean_apply(mean_function(params), input));
  }
  return out;
}

Var GPLayer::kl(std::span<const Var> params, const Var& kuu_cholesky) const {
  const Var& q_mu = params[q_mu_];
  Var total;
  for (std::size_t w = 0; w < config_.output_dim; ++w) {
    FullGaussian q{slice(q_mu, 1, w, w + 1), bound_q_sqrt(params, w)};
    Var term = config_.whitened ? kl_whitened(q) : kl_general(q, kuu_cholesky);
    total = total.valid() ? add(total, term) : term;
  }
  return total;
}

LayerOutput GPLayer::forward(const Var& input, std::span<const Var> params,
                             const ForwardContext& ctx) const {
  const ConditionalOutput f = predict_f(input, params, false, ctx.jitter);
  const Var kl_term = kl(params, f.kuu_cholesky);
  if (ctx.mode == OutputMode::Marginals) {
    return {GaussianMarginals{f.mean, f.variance}, kl_term};
  }
  const Var noise = input.tape().constant(ctx.draw_noise(f.mean.shape()));
  return {reparam_sample(f.mean, f.variance, noise), kl_term};
}

// ---------------------------------------------------------------------------
// LatentVariableLayer

LatentVariableLayer::LatentVariableLayer(std::size_t input_dim,
                                         std::size_t latent_dim,
                                         std::size_t num_data)
    : input_dim_(input_dim), latent_dim_(latent_dim), num_data_(num_data) {
  if (latent_dim == 0) throw ShapeError("latent layer needs latent_dim >= 1");
  add_parameter("means", Tensor(Shape{num_data, latent_dim}));
  add_parameter("log_variances", Tensor(Shape{num_data, latent_dim}));
}

std::unique_ptr<Layer> LatentVariableLayer::clone() const {
  return std::make_unique<LatentVariableLayer>(*this);
}

LayerOutput LatentVariableLayer::forward(const Var& input,
                                         std::span<const Var> params,
                                         const ForwardContext& ctx) const {
  check_input(input, input_dim_, "latent layer");
  Tape& tape = input.tape();
  const std::size_t n = input.rows();
  const Shape latent_shape{n, latent_dim_};

  if (ctx.phase == Phase::Predict) {
    const Var w = tape.constant(ctx.draw_noise(latent_shape));
    const Var parts[] = {input, w};
    return {concat(parts, 1), zero_scalar(tape)};
  }

  if (ctx.indices.size() != n) {
    throw ShapeError("latent layer: training needs one dataset index per row (" +
                     std::to_string(n) + " rows, " +
                     std::to_string(ctx.indices.size()) + " indices)");
  }
  for (std::size_t i : ctx.indices) {
    if (i >= num_data_) {
      throw ShapeError("latent layer: datapoint index " + std::to_string(i) +
                       " out of range for " + std::to_string(num_data_) + " rows");
    }
  }
  const Var& means = params[0];
  const Var& log_variances = params[1];
  const Var batch_means = gather_rows(means, ctx.indices);
  const Var batch_vars = exp(gather_rows(log_variances, ctx.indices));
  const Var noise = tape.constant(ctx.draw_noise(latent_shape));
  const Var w = reparam_sample(batch_means, batch_vars, noise);
  const Var parts[] = {input, w};
  return {concat(parts, 1), factorised_kl(means, log_variances)};
}

// ---------------------------------------------------------------------------
// BayesianDenseLayer

BayesianDenseLayer::BayesianDenseLayer(std::size_t input_dim,
                                       std::size_t output_dim,
                                       Activation activation)
    : input_dim_(input_dim), output_dim_(output_dim), activation_(activation) {
  if (input_dim == 0 || output_dim == 0) {
    throw ShapeError("dense layer dimensions must be at least 1");
  }
  add_parameter("weight_means", Tensor(Shape{input_dim, output_dim}));
  add_parameter("weight_log_variances", Tensor(Shape{input_dim, output_dim}));
  add_parameter("bias", Tensor(Shape{output_dim}));
}

std::unique_ptr<Layer> BayesianDenseLayer::clone() const {
  return std::make_unique<BayesianDenseLayer>(*this);
}

LayerOutput BayesianDenseLayer::forward(const Var& input,
                                        std::span<const Var> params,
                                        const ForwardContext& ctx) const {
  check_input(input, input_dim_, "dense layer");
  Tape& tape = input.tape();
  const Var& means = params[0];
  const Var& log_variances = params[1];
  const Var& bias = params[2];
  const Var noise = tape.constant(ctx.draw_noise(means.shape()));
  const Var weights = reparam_sample(means, exp(log_variances), noise);
  Var out = add(matmul(input, weights), bias);
  if (activation_ == Activation::Tanh) out = tanh(out);
  return {out, factorised_kl(means, log_variances)};
}

// ---------------------------------------------------------------------------

Var gaussian_likelihood_loss(const GaussianMarginals& marginals, const Var& y,
                             const Var& noise_variance) {
  if (marginals.mean.shape() != y.shape() ||
      marginals.variance.shape() != y.shape()) {
    throw ShapeError("likelihood: predictions " +
                     marginals.mean.value().shape_string() + " vs targets " +
                     y.value().shape_string());
  }
  return -sum(gaussian_variational_expectation(y, marginals.mean,
                                               marginals.variance, noise_variance));
}

}  // namespace dgp
