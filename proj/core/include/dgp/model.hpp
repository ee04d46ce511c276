#pragma once

#include <cstddef>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "dgp/layers.hpp"

namespace dgp {

/// Named handle to a model parameter, e.g. "layers.0.q_mu".
struct ParameterRef {
  std::string name;
  Tensor* value;
};

/// Ordered stack of layers F = f_L(... f_1(x)) with a Gaussian likelihood.
///
/// Owns every trainable parameter: the layers' parameters plus
/// likelihood.log_noise_variance.
class DeepGP {
 public:
  DeepGP(std::vector<std::unique_ptr<Layer>> layers, double noise_variance,
         std::size_t num_data);
  DeepGP(const DeepGP& other);
  DeepGP& operator=(const DeepGP& other);
  DeepGP(DeepGP&&) noexcept = default;
  DeepGP& operator=(DeepGP&&) noexcept = default;

  std::size_t num_layers() const noexcept { return layers_.size(); }
  Layer& layer(std::size_t i) { return *layers_.at(i); }
  const Layer& layer(std::size_t i) const { return *layers_.at(i); }
  std::size_t input_dim() const { return layers_.front()->input_dim(); }
  std::size_t output_dim() const { return layers_.back()->output_dim(); }

  std::size_t num_data() const noexcept { return num_data_; }
  void set_num_data(std::size_t n) { num_data_ = n; }
  std::size_t num_mc_samples() const noexcept { return num_mc_samples_; }
  void set_num_mc_samples(std::size_t s);

  double noise_variance() const;
  void set_noise_variance(double variance);

  std::vector<ParameterRef> parameters();
  std::vector<std::pair<std::string, Tensor>> parameter_values() const;
  void set_parameter_values(const std::vector<std::pair<std::string, Tensor>>& values);

  /// Parameters bound as tape variables, grouped per layer.
  struct Bound {
    std::vector<std::vector<Var>> layers;
    Var log_noise_variance;
    Var noise_variance;
  };
  Bound bind(Tape& tape) const;
  /// Groups variables already on a tape, keyed by parameter name.
  Bound bind(const std::map<std::string, Var>& vars) const;
  /// Current parameter values keyed by name, for check_gradients.
  Bindings bindings() const;

 private:
  void check_widths() const;

  std::vector<std::unique_ptr<Layer>> layers_;
  Tensor log_noise_variance_;
  std::size_t num_data_;
  std::size_t num_mc_samples_ = 1;
};

struct Propagation {
  /// Final-layer Gaussian marginals (a sample with zero variance when the
  /// last layer is not a GP layer).
  GaussianMarginals output;
  /// Sum of every layer's KL term.
  Var kl;
};

/// One stochastic pass: every layer samples except a final GP layer, which
/// returns marginals. Layer failures are rethrown naming the layer.
Propagation propagate(const DeepGP& model, const DeepGP::Bound& bound,
                      const Var& x, const ForwardContext& ctx);

struct ElboTerms {
  Var elbo;
  Var data_fit;  // scaled by N / batch, averaged over MC samples
  Var kl;
};

/// Monte-Carlo ELBO for a minibatch: (N/|B|) * mean_s sum_i E[log p(y_i|h_i)]
/// minus the unscaled sum of layer KLs. `indices` are the dataset rows of the
/// batch.
ElboTerms elbo_terms(const DeepGP& model, const DeepGP::Bound& bound,
                     const Var& x, const Var& y,
                     std::span<const std::size_t> indices, RandomStream& rng,
                     const JitterPolicy& jitter = {});

Var elbo(const DeepGP& model, const DeepGP::Bound& bound, const Var& x,
         const Var& y, std::span<const std::size_t> indices, RandomStream& rng,
         const JitterPolicy& jitter = {});

/// -ELBO as a function of the model's parameters with the MC noise frozen:
/// every evaluation replays `noise` from the same position.
TapeFunction negative_elbo_objective(const DeepGP& model, Tensor x, Tensor y,
                                     std::vector<std::size_t> indices,
                                     RandomStream noise,
                                     const JitterPolicy& jitter = {});

/// Builds a tape and evaluates the ELBO value only.
double elbo_value(const DeepGP& model, const Tensor& x, const Tensor& y,
                  std::span<const std::size_t> indices, RandomStream& rng,
                  const JitterPolicy& jitter = {});

/// Predictive distribution as an equally weighted Gaussian mixture over S
/// propagations. Component variances include the likelihood noise.
struct PredictiveMixture {
  Tensor mean;      // N x P mixture mean
  Tensor variance;  // N x P mixture variance
  std::vector<Tensor> component_means;
  std::vector<Tensor> component_variances;
};

PredictiveMixture predict(const DeepGP& model, const Tensor& x,
                          std::size_t num_samples, RandomStream& rng,
                          const JitterPolicy& jitter = {});

/// Moment-matches a set of components (used by predict).
PredictiveMixture mixture_from_components(std::vector<Tensor> means,
                                          std::vector<Tensor> variances);

struct Metrics {
  double rmse = 0.0;
  double nlpd = 0.0;
};

/// RMSE of the mixture mean and the negative log predictive density of the
/// mixture, averaged over rows.
Metrics mixture_metrics(const PredictiveMixture& mixture, const Tensor& y);

Metrics evaluate(const DeepGP& model, const Tensor& x, const Tensor& y,
                 std::size_t num_samples, RandomStream& rng,
                 const JitterPolicy& jitter = {});

}  // namespace dgp
