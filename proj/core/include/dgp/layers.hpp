#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "dgp/autodiff.hpp"
#include "dgp/conditional.hpp"
#include "dgp/gauss.hpp"
#include "dgp/kernels.hpp"
#include "dgp/random.hpp"

namespace dgp {

enum class LayerKind { GP, Latent, Dense };
enum class OutputMode { Sample, Marginals };
enum class Phase { Train, Predict };
enum class Activation { Identity, Tanh };

std::string to_string(LayerKind kind);
std::string to_string(Activation activation);
Activation parse_activation(std::string_view name);

/// Per-point independent Gaussians, N x W mean and variance.
struct GaussianMarginals {
  Var mean;
  Var variance;
};

struct LayerOutput {
  std::variant<Var, GaussianMarginals> value;
  Var kl;  // scalar, >= 0

  bool is_sample() const { return std::holds_alternative<Var>(value); }
  const Var& sample() const { return std::get<Var>(value); }
  const GaussianMarginals& marginals() const {
    return std::get<GaussianMarginals>(value);
  }
};

/// Per-call settings shared by every layer of a forward pass.
struct ForwardContext {
  Phase phase = Phase::Train;
  OutputMode mode = OutputMode::Sample;
  /// Source of N(0, 1) noise for sampling layers.
  RandomStream* rng = nullptr;
  /// Replace all noise by zeros (deterministic forward pass).
  bool zero_noise = false;
  /// Dataset row of each input row; required by latent layers in training.
  std::span<const std::size_t> indices;
  JitterPolicy jitter;

  Tensor draw_noise(const Shape& shape) const;
};

struct Parameter {
  std::string name;
  Tensor value;
};

/// A stackable Bayesian layer. Parameters are stored as plain tensors and
/// bound onto a tape for each forward pass, so layers are immutable during a
/// pass and only the optimiser mutates them between steps.
class Layer {
 public:
  virtual ~Layer() = default;

  virtual LayerKind kind() const = 0;
  virtual std::size_t input_dim() const = 0;
  virtual std::size_t output_dim() const = 0;
  virtual std::unique_ptr<Layer> clone() const = 0;

  /// `params` are this layer's parameters bound on the tape, in the order of
  /// parameters().
  virtual LayerOutput forward(const Var& input, std::span<const Var> params,
                              const ForwardContext& ctx) const = 0;

  std::vector<Parameter>& parameters() noexcept { return params_; }
  const std::vector<Parameter>& parameters() const noexcept { return params_; }
  Tensor& parameter(std::string_view name);
  const Tensor& parameter(std::string_view name) const;

  /// Registers every parameter as a tape variable named `prefix + name`.
  std::vector<Var> bind(Tape& tape, const std::string& prefix) const;

 protected:
  std::size_t add_parameter(std::string name, Tensor value);

 private:
  std::vector<Parameter> params_;
};

struct GPLayerConfig {
  std::size_t input_dim = 1;
  std::size_t output_dim = 1;
  std::size_t num_inducing = 10;
  KernelFamily kernel = KernelFamily::SquaredExponential;
  MeanKind mean_function = MeanKind::Zero;
  bool whitened = true;

  void validate() const;
};

/// Sparse variational GP layer with W outputs sharing one kernel and one set
/// of inducing inputs.
///
/// Parameters: inducing_inputs (M x D), q_mu (M x W), per output w the
/// strictly-lower part q_sqrt.<w>.lower (M x M) and q_sqrt.<w>.log_diag (M) of
/// the variational cov-sqrt, kernel.log_variance, kernel.log_lengthscales (D),
/// and for a linear mean function mean.weights (D x W) and mean.bias (W).
/// Fresh layers start at the prior: Z = 0, q_mu = 0, cov-sqrt = I, unit
/// kernel hyperparameters, zero linear mean.
class GPLayer : public Layer {
 public:
  explicit GPLayer(GPLayerConfig config);

  LayerKind kind() const override { return LayerKind::GP; }
  std::size_t input_dim() const override { return config_.input_dim; }
  std::size_t output_dim() const override { return config_.output_dim; }
  std::unique_ptr<Layer> clone() const override;
  const GPLayerConfig& config() const noexcept { return config_; }

  void set_inducing_inputs(const Tensor& z);
  void set_q_mu(const Tensor& q_mu);
  /// `lower` must be lower triangular with a positive diagonal.
  void set_q_sqrt(std::size_t output, const Tensor& lower);
  /// Assembled lower-triangular cov-sqrt of one output.
  Tensor q_sqrt(std::size_t output) const;
  void set_kernel_hyperparameters(double variance, std::span<const double> lengthscales);
  void set_mean_function(const Tensor& weights, const Tensor& bias);

  InducingState inducing_state(std::span<const Var> params) const;
  KernelParams kernel_params(std::span<const Var> params) const;
  MeanFunction mean_function(std::span<const Var> params) const;

  /// Conditional of the layer's function values, with the mean function added.
  ConditionalOutput predict_f(const Var& input, std::span<const Var> params,
                              bool full_cov, const JitterPolicy& jitter) const;

  /// Sum over outputs of KL(q(u_w) || p(u_w)).
  Var kl(std::span<const Var> params, const Var& kuu_cholesky) const;

  LayerOutput forward(const Var& input, std::span<const Var> params,
                      const ForwardContext& ctx) const override;

 private:
  Var bound_q_sqrt(std::span<const Var> params, std::size_t output) const;

  GPLayerConfig config_;
  std::size_t z_ = 0;
  std::size_t q_mu_ = 0;
  std::vector<std::size_t> q_lower_;
  std::vector<std::size_t> q_log_diag_;
  std::size_t log_variance_ = 0;
  std::size_t log_lengthscales_ = 0;
  std::size_t mean_weights_ = 0;
  std::size_t mean_bias_ = 0;
};

/// Concatenates a per-datapoint latent variable w_i to each input row.
///
/// Training uses the non-amortised posterior q(w_i) = N(means_i,
/// diag(exp(log_variances_i))) for every row of the dataset, and its KL to
/// N(0, I) summed over all stored rows. Prediction draws w from the prior and
/// contributes no KL.
class LatentVariableLayer : public Layer {
 public:
  LatentVariableLayer(std::size_t input_dim, std::size_t latent_dim,
                      std::size_t num_data);

  LayerKind kind() const override { return LayerKind::Latent; }
  std::size_t input_dim() const override { return input_dim_; }
  std::size_t output_dim() const override { return input_dim_ + latent_dim_; }
  std::size_t latent_dim() const noexcept { return latent_dim_; }
  std::size_t num_data() const noexcept { return num_data_; }
  std::unique_ptr<Layer> clone() const override;

  LayerOutput forward(const Var& input, std::span<const Var> params,
                      const ForwardContext& ctx) const override;

 private:
  std::size_t input_dim_;
  std::size_t latent_dim_;
  std::size_t num_data_;
};

/// Mean-field variational dense layer: each weight has an independent
/// Gaussian posterior, one weight sample is drawn per forward pass, and the
/// bias is deterministic.
class BayesianDenseLayer : public Layer {
 public:
  BayesianDenseLayer(std::size_t input_dim, std::size_t output_dim,
                     Activation activation);

  LayerKind kind() const override { return LayerKind::Dense; }
  std::size_t input_dim() const override { return input_dim_; }
  std::size_t output_dim() const override { return output_dim_; }
  Activation activation() const noexcept { return activation_; }
  std::unique_ptr<Layer> clone() const override;

  LayerOutput forward(const Var& input, std::span<const Var> params,
                      const ForwardContext& ctx) const override;

 private:
  std::size_t input_dim_;
  std::size_t output_dim_;
  Activation activation_;
};

/// Negative Gaussian data-fit: -sum_{i,p} E_q[log N(y_ip; f_ip, noise_var)].
Var gaussian_likelihood_loss(const GaussianMarginals& marginals, const Var& y,
                             const Var& noise_variance);

}  // namespace dgp
