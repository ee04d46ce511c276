#include "dgp/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dgp/errors.hpp"
#include "dgp/ops.hpp"

namespace dgp {

DeepGP::DeepGP(std::vector<std::unique_ptr<Layer>> layers, double noise_variance,
               std::size_t num_data)
    : layers_(std::move(layers)), num_data_(num_data) {
  if (layers_.empty()) throw ShapeError("a model needs at least one layer");
  check_widths();
  set_noise_variance(noise_variance);
}

DeepGP::DeepGP(const DeepGP& other)
    : log_noise_variance_(other.log_noise_variance_),
      num_data_(other.num_data_),
      num_mc_samples_(other.num_mc_samples_) {
  for (const auto& l : other.layers_) layers_.push_back(l->clone());
}

DeepGP& DeepGP::operator=(const DeepGP& other) {
  if (this != &other) {
    DeepGP copy(other);
    *this = std::move(copy);
  }
  return *this;
}

void DeepGP::check_widths() const {
  for (std::size_t i = 0; i + 1 < layers_.size(); ++i) {
    if (layers_[i]->output_dim() != layers_[i + 1]->input_dim()) {
      throw ShapeError("layer " + std::to_string(i) + " emits " +
                       std::to_string(layers_[i]->output_dim()) +
                       " columns but layer " + std::to_string(i + 1) +
                       " expects " + std::to_string(layers_[i + 1]->input_dim()));
    }
  }
}

void DeepGP::set_num_mc_samples(std::size_t s) {
  if (s == 0) throw Error("num_mc_samples must be at least 1");
  num_mc_samples_ = s;
}

double DeepGP::noise_variance() const {
  return std::exp(log_noise_variance_.item());
}

void DeepGP::set_noise_variance(double variance) {
  if (!(variance > 0.0) || !std::isfinite(variance)) {
    throw NumericalError("likelihood noise variance must be positive");
  }
  log_noise_variance_ = Tensor::scalar(std::log(variance));
}

std::vector<ParameterRef> DeepGP::parameters() {
  std::vector<ParameterRef> refs;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const std::string prefix = "layers." + std::to_string(i) + ".";
    for (auto& p : layers_[i]->parameters()) {
      refs.push_back(ParameterRef{prefix + p.name, &p.value});
    }
  }
  refs.push_back(ParameterRef{"likelihood.log_noise_variance", &log_noise_variance_});
  return refs;
}

std::vector<std::pair<std::string, Tensor>> DeepGP::parameter_values() const {
  std::vector<std::pair<std::string, Tensor>> values;
  for (auto& ref : const_cast<DeepGP*>(this)->parameters()) {
    values.emplace_back(ref.name, *ref.value);
  }
  return values;
}

void DeepGP::set_parameter_values(
    const std::vector<std::pair<std::string, Tensor>>& values) {
  auto refs = parameters();
  if (values.size() != refs.size()) {
    throw Error("expected " + std::to_string(refs.size()) + " parameters, got " +
                std::to_string(values.size()));
  }
  for (std::size_t i = 0; i < refs.size(); ++i) {
    if (values[i].first != refs[i].name ||
        values[i].second.shape() != refs[i].value->shape()) {
      throw Error("parameter mismatch at '" + refs[i].name + "'");
    }
  }
  for (std::size_t i = 0; i < refs.size(); ++i) *refs[i].value = values[i].second;
}

DeepGP::Bound DeepGP::bind(Tape& tape) const {
  Bound bound;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    bound.layers.push_back(
        layers_[i]->bind(tape, "layers." + std::to_string(i) + "."));
  }
  bound.log_noise_variance =
      tape.variable("likelihood.log_noise_variance", log_noise_variance_);
  bound.noise_variance = exp(bound.log_noise_variance);
  return bound;
}

DeepGP::Bound DeepGP::bind(const std::map<std::string, Var>& vars) const {
  auto lookup = [&](const std::string& name) {
    auto it = vars.find(name);
    if (it == vars.end()) throw Error("no bound variable for parameter '" + name + "'");
    return it->second;
  };
  Bound bound;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const std::string prefix = "layers." + std::to_string(i) + ".";
    std::vector<Var> layer_vars;
    for (const auto& p : layers_[i]->parameters()) layer_vars.push_back(lookup(prefix + p.name));
    bound.layers.push_back(std::move(layer_vars));
  }
  bound.log_noise_variance = lookup("likelihood.log_noise_variance");
  bound.noise_variance = exp(bound.log_noise_variance);
  return bound;
}

Bindings DeepGP::bindings() const {
  Bindings b;
  for (auto& [name, value] : parameter_values()) b.emplace(name, value);
  return b;
}

Propagation propagate(const DeepGP& model, const DeepGP::Bound& bound,
                      const Var& x, const ForwardContext& ctx) {
  Var h = x;
  Var kl;
  Propagation result;
  const std::size_t n = model.num_layers();
  for (std::size_t i = 0; i < n; ++i) {
    const Layer& layer = model.layer(i);
    const bool last = i + 1 == n;
    ForwardContext layer_ctx = ctx;
    layer_ctx.mode = last && layer.kind() == LayerKind::GP ? OutputMode::Marginals
                                                           : OutputMode::Sample;
    const std::string where =
        "layer " + std::to_string(i) + " (" + to_string(layer.kind()) + "): ";
    LayerOutput out;
    try {
      out = layer.forward(h, bound.layers[i], layer_ctx);
    } catch (const NotPositiveDefiniteError& e) {
      throw NotPositiveDefiniteError(where + e.what(), e.ladder());
    } catch (const NumericalError& e) {
      throw NumericalError(where + e.what());
    } catch (const ShapeError& e) {
      throw ShapeError(where + e.what());
    }
    kl = kl.valid() ? add(kl, out.kl) : out.kl;
    if (last) {
      if (out.is_sample()) {
        const Var& s = out.sample();
        result.output = {s, s.tape().constant(Tensor(s.shape()))};
      } else {
        result.output = out.marginals();
      }
    } else {
      h = out.is_sample()
              ? out.sample()
              : reparam_sample(out.marginals().mean, out.marginals().variance,
                               h.tape().constant(ctx.draw_noise(
                                   out.marginals().mean.shape())));
    }
  }
  result.kl = kl;
  return result;
}

ElboTerms elbo_terms(const DeepGP& model, const DeepGP::Bound& bound,
                     const Var& x, const Var& y,
                     std::span<const std::size_t> indices, RandomStream& rng,
                     const JitterPolicy& jitter) {
  const std::size_t batch = x.rows();
  if (batch == 0) throw ShapeError("elbo: empty batch");
  if (y.rows() != batch) {
    throw ShapeError("elbo: " + std::to_string(batch) + " inputs but " +
                     std::to_string(y.rows()) + " targets");
  }
  ForwardContext ctx;
  ctx.phase = Phase::Train;
  ctx.rng = &rng;
  ctx.indices = indices;
  ctx.jitter = jitter;

  const std::size_t samples = model.num_mc_samples();
  Var fit_sum;
  Var kl;
  for (std::size_t s = 0; s < samples; ++s) {
    const Propagation prop = propagate(model, bound, x, ctx);
    const Var fit = -gaussian_likelihood_loss(prop.output, y, bound.noise_variance);
    fit_sum = fit_sum.valid() ? add(fit_sum, fit) : fit;
    if (s == 0) kl = prop.kl;
  }
  const double scale = static_cast<double>(model.num_data()) /
                       (static_cast<double>(batch) * static_cast<double>(samples));
  ElboTerms terms;
  terms.data_fit = fit_sum * scale;
  terms.kl = kl;
  terms.elbo = terms.data_fit - kl;
  return terms;
}

Var elbo(const DeepGP& model, const DeepGP::Bound& bound, const Var& x,
         const Var& y, std::span<const std::size_t> indices, RandomStream& rng,
         const JitterPolicy& jitter) {
  return elbo_terms(model, bound, x, y, indices, rng, jitter).elbo;
}

TapeFunction negative_elbo_objective(const DeepGP& model, Tensor x, Tensor y,
                                     std::vector<std::size_t> indices,
                                     RandomStream noise, const JitterPolicy& jitter) {
  return [&model, x = std::move(x), y = std::move(y), indices = std::move(indices),
          noise, jitter](Tape& tape, const std::map<std::string, Var>& vars) {
    RandomStream rng = noise;
    const auto bound = model.bind(vars);
    return neg(elbo(model, bound, tape.constant(x), tape.constant(y), indices, rng, jitter));
  };
}

double elbo_value(const DeepGP& model, const Tensor& x, const Tensor& y,
                  std::span<const std::size_t> indices, RandomStream& rng,
                  const JitterPolicy& jitter) {
  Tape tape;
  const auto bound = model.bind(tape);
  return elbo(model, bound, tape.constant(x), tape.constant(y), indices, rng, jitter)
      .value()
      .item();
}

PredictiveMixture mixture_from_components(std::vector<Tensor> means,
                                          std::vector<Tensor> variances) {
  if (means.empty() || means.size() != variances.size()) {
    throw Error("mixture needs matching, non-empty component lists");
  }
  const double s = static_cast<double>(means.size());
  PredictiveMixture mix;
  mix.mean = Tensor(means[0].shape());
  mix.variance = Tensor(means[0].shape());
  for (const auto& m : means) mix.mean.matrix() += m.matrix();
  mix.mean.matrix() /= s;
  // avg(var_s) + avg((mean_s - mean)^2), i.e. avg(var + mean^2) - mean^2.
  for (std::size_t k = 0; k < means.size(); ++k) {
    mix.variance.matrix().array() +=
        variances[k].matrix().array() +
        (means[k].matrix() - mix.mean.matrix()).array().square();
  }
  mix.variance.matrix() /= s;
  mix.component_means = std::move(means);
  mix.component_variances = std::move(variances);
  return mix;
}

PredictiveMixture predict(const DeepGP& model, const Tensor& x,
                          std::size_t num_samples, RandomStream& rng,
                          const JitterPolicy& jitter) {
  if (num_samples == 0) throw Error("predict needs at least one sample");
  if (x.rank() != 2 || x.cols() != model.input_dim()) {
    throw ShapeError("predict: inputs " + x.shape_string() + " but model expects " +
                     std::to_string(model.input_dim()) + " columns");
  }
  ForwardContext ctx;
  ctx.phase = Phase::Predict;
  ctx.rng = &rng;
  ctx.jitter = jitter;
  const double noise = model.noise_variance();

  std::vector<Tensor> means;
  std::vector<Tensor> variances;
  for (std::size_t s = 0; s < num_samples; ++s) {
    Tape tape;
    const auto bound = model.bind(tape);
    const Propagation prop = propagate(model, bound, tape.constant(x), ctx);
    means.push_back(prop.output.mean.value());
    Tensor var = prop.output.variance.value();
    for (auto& v : var.data()) v += noise;
    variances.push_back(std::move(var));
  }
  return mixture_from_components(std::move(means), std::move(variances));
}

Metrics mixture_metrics(const PredictiveMixture& mixture, const Tensor& y) {
  if (mixture.mean.shape() != y.shape()) {
    throw ShapeError("metrics: predictions " + mixture.mean.shape_string() +
                     " vs targets " + y.shape_string());
  }
  const std::size_t n = y.rows();
  const std::size_t p = y.cols();
  const std::size_t s = mixture.component_means.size();
  if (n == 0) throw DataError("metrics on an empty dataset");

  double sq = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double r = mixture.mean[i] - y[i];
    sq += r * r;
  }
  Metrics m;
  m.rmse = std::sqrt(sq / static_cast<double>(y.size()));

  std::vector<double> logs(s);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < s; ++k) {
      double lp = 0.0;
      for (std::size_t j = 0; j < p; ++j) {
        lp += gaussian_logpdf(y(i, j), mixture.component_means[k](i, j),
                              mixture.component_variances[k](i, j));
      }
      logs[k] = lp;
    }
    const double top = *std::max_element(logs.begin(), logs.end());
    double acc = 0.0;
    for (double l : logs) acc += std::exp(l - top);
    total += top + std::log(acc) - std::log(static_cast<double>(s));
  }
  m.nlpd = -total / static_cast<double>(n);
  return m;
}

Metrics evaluate(const DeepGP& model, const Tensor& x, const Tensor& y,
                 std::size_t num_samples, RandomStream& rng,
                 const JitterPolicy& jitter) {
  return mixture_metrics(predict(model, x, num_samples, rng, jitter), y);
}

}  // namespace dgp
