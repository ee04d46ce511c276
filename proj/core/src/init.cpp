#include "dgp/init.hpp"

#include <cmath>
#include <limits>

#include <Eigen/SVD>

#include "dgp/errors.hpp"
#include "dgp/ops.hpp"

namespace dgp {
namespace {

bool is_last(std::size_t i, const std::vector<LayerSpec>& layers) {
  return i + 1 == layers.size();
}

MeanKind resolved_mean(const LayerSpec& spec, bool last) {
  if (spec.mean_function) return *spec.mean_function;
  return last ? MeanKind::Zero : MeanKind::Linear;
}

double squared_distance(const Tensor& a, std::size_t i, const Tensor& b,
                        std::size_t j) {
  double d = 0.0;
  for (std::size_t c = 0; c < a.cols(); ++c) {
    const double t = a(i, c) - b(j, c);
    d += t * t;
  }
  return d;
}

Tensor matmul_values(const Tensor& a, const Tensor& b) {
  Tensor out(Shape{a.rows(), b.cols()});
  out.matrix() = a.matrix() * b.matrix();
  return out;
}

Tensor kuu_cholesky(const GPLayer& layer, const JitterPolicy& jitter) {
  Tape tape;
  const auto params = layer.bind(tape, "");
  const KernelParams kernel = layer.kernel_params(params);
  const Var z = params[0];
  return cholesky_with_jitter(kernel_matrix(kernel, z, z), jitter).factor.value();
}

}  // namespace

std::vector<std::size_t> infer_layer_widths(const std::vector<LayerSpec>& layers,
                                            std::size_t input_dim,
                                            std::size_t output_dim) {
  if (layers.empty()) throw DataError("model needs at least one layer");
  std::vector<std::size_t> widths{input_dim};
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerSpec& spec = layers[i];
    const std::size_t in = widths.back();
    std::size_t out = 0;
    if (spec.kind == LayerKind::Latent) {
      out = in + spec.latent_dim;
    } else if (spec.output_dim) {
      out = *spec.output_dim;
    } else {
      out = is_last(i, layers) ? output_dim : in;
    }
    widths.push_back(out);
  }
  if (widths.back() != output_dim) {
    throw DataError("model emits " + std::to_string(widths.back()) +
                    " columns but the data has " + std::to_string(output_dim) +
                    " targets");
  }
  return widths;
}

DeepGP build_model(const ModelSpec& spec, std::size_t input_dim,
                   std::size_t output_dim, std::size_t num_data) {
  const auto widths = infer_layer_widths(spec.layers, input_dim, output_dim);
  std::vector<std::unique_ptr<Layer>> layers;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& ls = spec.layers[i];
    switch (ls.kind) {
      case LayerKind::GP: {
        GPLayerConfig cfg;
        cfg.input_dim = widths[i];
        cfg.output_dim = widths[i + 1];
        cfg.num_inducing = ls.num_inducing;
        cfg.kernel = ls.kernel;
        cfg.mean_function = resolved_mean(ls, is_last(i, spec.layers));
        cfg.whitened = ls.whitened;
        auto layer = std::make_unique<GPLayer>(cfg);
        const std::vector<double> lengthscales(widths[i], ls.lengthscale);
        layer->set_kernel_hyperparameters(ls.variance, lengthscales);
        layers.push_back(std::move(layer));
        break;
      }
      case LayerKind::Latent:
        layers.push_back(
            std::make_unique<LatentVariableLayer>(widths[i], ls.latent_dim, num_data));
        break;
      case LayerKind::Dense:
        layers.push_back(std::make_unique<BayesianDenseLayer>(
            widths[i], widths[i + 1], ls.activation));
        break;
    }
  }
  return DeepGP(std::move(layers), spec.noise_variance.value_or(1.0), num_data);
}

DeepGP initialise_model(const ModelSpec& spec, const Tensor& x, const Tensor& y,
                        std::uint64_t seed) {
  if (x.rank() != 2 || y.rank() != 2 || x.rows() != y.rows() || x.rows() == 0) {
    throw ShapeError("initialise_model: inputs " + x.shape_string() +
                     " and targets " + y.shape_string() + " are incompatible");
  }
  const std::size_t n = x.rows();
  DeepGP model = build_model(spec, x.cols(), y.cols(), n);
  RandomStream rng = RandomStream::derive(seed, "init");

  Tensor h = x;
  for (std::size_t i = 0; i < model.num_layers(); ++i) {
    const bool last = is_last(i, spec.layers);
    const LayerSpec& ls = spec.layers[i];
    Layer& base = model.layer(i);
    switch (ls.kind) {
      case LayerKind::GP: {
        auto& layer = static_cast<GPLayer&>(base);
        const GPLayerConfig& cfg = layer.config();
        layer.set_inducing_inputs(kmeans(h, cfg.num_inducing, rng));
        const Tensor projection = linear_mean_projection(h, cfg.output_dim);
        if (cfg.mean_function == MeanKind::Linear) {
          layer.set_mean_function(projection, Tensor(Shape{cfg.output_dim}));
        }
        const double scale = ls.q_sqrt_scale.value_or(last ? 1.0 : 1e-5);
        Tensor q_sqrt(Shape{cfg.num_inducing, cfg.num_inducing});
        if (cfg.whitened) {
          q_sqrt = Tensor::identity(cfg.num_inducing);
        } else {
          q_sqrt = kuu_cholesky(layer, spec.jitter);
        }
        for (auto& v : q_sqrt.data()) v *= scale;
        for (std::size_t w = 0; w < cfg.output_dim; ++w) layer.set_q_sqrt(w, q_sqrt);
        if (!last) h = matmul_values(h, projection);
        break;
      }
      case LayerKind::Latent: {
        const double var = ls.latent_init_variance;
        Tensor& log_vars = base.parameter("log_variances");
        for (auto& v : log_vars.data()) v = std::log(var);
        Tensor next(Shape{n, h.cols() + ls.latent_dim});
        for (std::size_t r = 0; r < n; ++r) {
          for (std::size_t c = 0; c < h.cols(); ++c) next(r, c) = h(r, c);
          for (std::size_t c = 0; c < ls.latent_dim; ++c) {
            next(r, h.cols() + c) = std::sqrt(var) * rng.normal();
          }
        }
        h = std::move(next);
        break;
      }
      case LayerKind::Dense: {
        Tensor& means = base.parameter("weight_means");
        const double sd = 1.0 / std::sqrt(static_cast<double>(means.rows()));
        for (auto& v : means.data()) v = sd * rng.normal();
        for (auto& v : base.parameter("weight_log_variances").data()) v = std::log(1e-3);
        h = matmul_values(h, means);
        if (ls.activation == Activation::Tanh) {
          for (auto& v : h.data()) v = std::tanh(v);
        }
        break;
      }
    }
  }

  if (spec.noise_variance) {
    model.set_noise_variance(*spec.noise_variance);
  } else {
    const ColumnStats stats = compute_stats(y);
    double var = 0.0;
    for (double s : stats.std) var += s * s;
    var /= static_cast<double>(stats.std.size());
    model.set_noise_variance(std::max(0.01 * var, 1e-6));
  }
  return model;
}

Tensor kmeans(const Tensor& points, std::size_t k, RandomStream& rng,
              std::size_t iterations) {
  const std::size_t n = points.rows();
  const std::size_t d = points.cols();
  if (n == 0 || k == 0) throw ShapeError("kmeans needs points and k >= 1");
  if (k == n) return points;

  Tensor centres(Shape{k, d});
  if (k > n) {
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t c = 0; c < d; ++c) centres(r, c) = points(r, c);
    }
    for (std::size_t r = n; r < k; ++r) {
      const std::size_t src = rng.uniform_index(n);
      for (std::size_t c = 0; c < d; ++c) {
        centres(r, c) = points(src, c) + 1e-3 * rng.normal();
      }
    }
    return centres;
  }

  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
  auto copy_row = [&](std::size_t dst, std::size_t src) {
    for (std::size_t c = 0; c < d; ++c) centres(dst, c) = points(src, c);
  };
  copy_row(0, rng.uniform_index(n));
  for (std::size_t j = 1; j < k; ++j) {
    double total = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
      nearest[r] = std::min(nearest[r], squared_distance(points, r, centres, j - 1));
      total += nearest[r];
    }
    std::size_t pick = n - 1;
    if (total > 0.0) {
      double u = rng.uniform() * total;
      for (std::size_t r = 0; r < n; ++r) {
        u -= nearest[r];
        if (u <= 0.0) {
          pick = r;
          break;
        }
      }
    } else {
      pick = rng.uniform_index(n);
    }
    copy_row(j, pick);
  }

  std::vector<std::size_t> assignment(n, k);
  for (std::size_t it = 0; it < iterations; ++it) {
    bool changed = false;
    for (std::size_t r = 0; r < n; ++r) {
      std::size_t best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < k; ++j) {
        const double dist = squared_distance(points, r, centres, j);
        if (dist < best_d) {
          best_d = dist;
          best = j;
        }
      }
      if (assignment[r] != best) {
        assignment[r] = best;
        changed = true;
      }
    }
    if (!changed) break;
    Tensor sums(Shape{k, d});
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t r = 0; r < n; ++r) {
      ++counts[assignment[r]];
      for (std::size_t c = 0; c < d; ++c) sums(assignment[r], c) += points(r, c);
    }
    for (std::size_t j = 0; j < k; ++j) {
      if (counts[j] == 0) continue;
      for (std::size_t c = 0; c < d; ++c) {
        centres(j, c) = sums(j, c) / static_cast<double>(counts[j]);
      }
    }
  }
  return centres;
}

Tensor linear_mean_projection(const Tensor& x, std::size_t output_dim) {
  const std::size_t d = x.cols();
  Tensor p(Shape{d, output_dim});
  if (d <= output_dim) {
    for (std::size_t i = 0; i < d; ++i) p(i, i) = 1.0;
    return p;
  }
  Eigen::MatrixXd m = x.matrix();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeThinV);
  const Eigen::MatrixXd& v = svd.matrixV();
  for (std::size_t c = 0; c < output_dim; ++c) {
    Eigen::Index arg = 0;
    v.col(static_cast<Eigen::Index>(c)).cwiseAbs().maxCoeff(&arg);
    const double sign = v(arg, static_cast<Eigen::Index>(c)) < 0.0 ? -1.0 : 1.0;
    for (std::size_t r = 0; r < d; ++r) {
      p(r, c) = sign * v(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
    }
  }
  return p;
}

}  // namespace dgp
