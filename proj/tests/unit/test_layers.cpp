#include <cmath>

#include <gtest/gtest.h>

#include "dgp/errors.hpp"
#include "dgp/gradient_check.hpp"
#include "dgp/init.hpp"
#include "dgp/layers.hpp"
#include "dgp/ops.hpp"
#include "test_support.hpp"

using namespace dgp;
using dgp::testing::Gen;
using Vars = std::map<std::string, Var>;

namespace {

Bindings layer_bindings(const Layer& layer) {
  Bindings b;
  for (const auto& p : layer.parameters()) b.emplace(p.name, p.value);
  return b;
}

std::vector<Var> ordered(const Layer& layer, const Vars& v) {
  std::vector<Var> out;
  for (const auto& p : layer.parameters()) out.push_back(v.at(p.name));
  return out;
}

GPLayer random_gp(Gen& gen, std::size_t d, std::size_t w, std::size_t m, bool whitened,
                  MeanKind mean = MeanKind::Zero) {
  GPLayer layer({d, w, m, KernelFamily::SquaredExponential, mean, whitened});
  layer.set_inducing_inputs(gen.normal_tensor({m, d}));
  layer.set_q_mu(gen.normal_tensor({m, w}));
  for (std::size_t i = 0; i < w; ++i) layer.set_q_sqrt(i, gen.lower(m));
  std::vector<double> ls(d);
  for (auto& l : ls) l = gen.uniform(0.5, 2.0);
  layer.set_kernel_hyperparameters(gen.uniform(0.5, 2.0), ls);
  if (mean == MeanKind::Linear) {
    layer.set_mean_function(gen.normal_tensor({d, w}), gen.normal_tensor({w}));
  }
  return layer;
}

}  // namespace

TEST(GPLayer, FreshLayerIsThePrior) {
  Gen gen(0);
  GPLayer layer({2, 3, 5});
  layer.set_inducing_inputs(gen.normal_tensor({5, 2}));
  Tape tape;
  const auto params = layer.bind(tape, "");
  const Var x = tape.constant(gen.normal_tensor({4, 2}));
  ForwardContext ctx;
  ctx.mode = OutputMode::Marginals;
  const LayerOutput out = layer.forward(x, params, ctx);
  const Tensor kd = kernel_diag(layer.kernel_params(params), x).value();
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t w = 0; w < 3; ++w) {
      EXPECT_EQ(out.marginals().mean.value()(i, w), 0.0);
      EXPECT_NEAR(out.marginals().variance.value()(i, w), kd[i], 1e-8);
    }
  EXPECT_EQ(out.kl.value().item(), 0.0);
}

TEST(GPLayer, ZeroNoiseSampleIsTheMean) {
  Gen gen(1);
  const GPLayer layer = random_gp(gen, 2, 2, 4, true, MeanKind::Linear);
  Tape tape;
  const auto params = layer.bind(tape, "");
  const Var x = tape.constant(gen.normal_tensor({5, 2}));
  ForwardContext marg;
  marg.mode = OutputMode::Marginals;
  ForwardContext zero;
  zero.zero_noise = true;
  EXPECT_EQ(layer.forward(x, params, zero).sample().value(),
            layer.forward(x, params, marg).marginals().mean.value());
}

TEST(GPLayer, MarginalsIncludeMeanFunction) {
  Gen gen(2);
  const GPLayer layer = random_gp(gen, 2, 2, 4, true, MeanKind::Linear);
  Tape tape;
  const auto params = layer.bind(tape, "");
  const Var x = tape.constant(gen.normal_tensor({5, 2}));
  ForwardContext ctx;
  ctx.mode = OutputMode::Marginals;
  const auto out = layer.forward(x, params, ctx);
  const auto f = conditional(x, layer.inducing_state(params), layer.kernel_params(params),
                             false);
  const Tensor expected = add(f.mean, mean_apply(layer.mean_function(params), x)).value();
  EXPECT_LE(dgp::testing::max_abs_diff(dgp::testing::dense(out.marginals().mean.value()),
                                       dgp::testing::dense(expected)),
            1e-14);
  EXPECT_EQ(out.marginals().variance.value(), f.variance.value());
}

TEST(GPLayer, KlIsSumOfPerOutputKls) {
  for (bool whitened : {true, false}) {
    Gen gen(whitened ? 3 : 4);
    const GPLayer layer = random_gp(gen, 2, 3, 4, whitened);
    Tape tape;
    const auto params = layer.bind(tape, "");
    ForwardContext ctx;
    ctx.mode = OutputMode::Marginals;
    const auto out = layer.forward(tape.constant(gen.normal_tensor({2, 2})), params, ctx);

    const Var z = tape.constant(layer.parameter("inducing_inputs"));
    const Var lk =
        cholesky_with_jitter(kernel_matrix(layer.kernel_params(params), z, z)).factor;
    double expected = 0;
    const Tensor& mu = layer.parameter("q_mu");
    for (std::size_t w = 0; w < 3; ++w) {
      Tensor m(Shape{4});
      for (std::size_t i = 0; i < 4; ++i) m[i] = mu(i, w);
      const FullGaussian q{tape.constant(m), tape.constant(layer.q_sqrt(w))};
      expected += (whitened ? kl_whitened(q) : kl_general(q, lk)).value().item();
    }
    EXPECT_EQ(out.kl.value().item(), expected);
    EXPECT_GE(out.kl.value().item(), 0.0);
  }
}

TEST(GPLayer, MarginalsModeUsesNoRandomness) {
  Gen gen(5);
  const GPLayer layer = random_gp(gen, 2, 1, 3, true);
  Tape tape;
  RandomStream rng(9);
  ForwardContext ctx;
  ctx.mode = OutputMode::Marginals;
  ctx.rng = &rng;
  (void)layer.forward(tape.constant(gen.normal_tensor({3, 2})), layer.bind(tape, ""), ctx);
  EXPECT_EQ(rng.counter(), 0u);
}

TEST(GPLayer, QSqrtRoundTrips) {
  Gen gen(6);
  GPLayer layer({1, 1, 4});
  const Tensor l = gen.lower(4);
  layer.set_q_sqrt(0, l);
  EXPECT_LE(dgp::testing::max_abs_diff(dgp::testing::dense(layer.q_sqrt(0)),
                                       dgp::testing::dense(l)),
            1e-15);
  Tensor bad = l;
  bad(2, 2) = -1;
  EXPECT_THROW(layer.set_q_sqrt(0, bad), Error);
}

TEST(GPLayer, WrongInputWidth) {
  GPLayer layer({2, 1, 3});
  Tape tape;
  EXPECT_THROW((void)layer.forward(tape.constant(Tensor(Shape{2, 3})), layer.bind(tape, ""),
                                   ForwardContext{}),
               ShapeError);
}

TEST(LatentLayer, WidthIsInputPlusLatent) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Gen gen(seed);
    const std::size_t d = gen.index(1, 4), dw = gen.index(1, 3), n = gen.index(1, 6);
    LatentVariableLayer layer(d, dw, n);
    EXPECT_EQ(layer.output_dim(), d + dw);
    Tape tape;
    RandomStream rng(seed);
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = gen.index(0, n - 1);
    ForwardContext ctx;
    ctx.rng = &rng;
    ctx.indices = idx;
    const auto out = layer.forward(tape.constant(gen.normal_tensor({n, d})),
                                   layer.bind(tape, ""), ctx);
    EXPECT_EQ(out.sample().shape(), (Shape{n, d + dw}));
    ctx.phase = Phase::Predict;
    Tape predict_tape;
    EXPECT_EQ(layer.forward(predict_tape.constant(gen.normal_tensor({n, d})),
                            layer.bind(predict_tape, ""), ctx)
                  .sample()
                  .shape(),
              (Shape{n, d + dw}));
  }
}

TEST(LatentLayer, PriorPosteriorHasZeroKl) {
  LatentVariableLayer layer(1, 2, 5);
  Tape tape;
  RandomStream rng(1);
  const std::size_t idx[] = {0, 3};
  ForwardContext ctx;
  ctx.rng = &rng;
  ctx.indices = idx;
  EXPECT_EQ(layer.forward(tape.constant(Tensor(Shape{2, 1})), layer.bind(tape, ""), ctx)
                .kl.value()
                .item(),
            0.0);
}

TEST(LatentLayer, SingleDatapointKl) {
  LatentVariableLayer layer(1, 2, 1);
  layer.parameter("means") = Tensor::matrix(1, 2, {1, 0});
  Tape tape;
  const std::size_t idx[] = {0};
  ForwardContext ctx;
  ctx.zero_noise = true;
  ctx.indices = idx;
  const auto out = layer.forward(tape.constant(Tensor(Shape{1, 1}, 4.0)),
                                 layer.bind(tape, ""), ctx);
  EXPECT_EQ(out.kl.value().item(), 0.5);
  EXPECT_EQ(out.sample().value(), Tensor::matrix(1, 3, {4, 1, 0}));
}

TEST(LatentLayer, PredictionDrawsFromPriorWithoutKl) {
  LatentVariableLayer layer(1, 1, 3);
  layer.parameter("means") = Tensor(Shape{3, 1}, 5.0);
  Tape tape;
  RandomStream rng(3), copy(3);
  ForwardContext ctx;
  ctx.phase = Phase::Predict;
  ctx.rng = &rng;
  const auto out = layer.forward(tape.constant(Tensor(Shape{2, 1})), layer.bind(tape, ""), ctx);
  EXPECT_EQ(out.kl.value().item(), 0.0);
  const Tensor draw = copy.normal_tensor({2, 1});
  EXPECT_EQ(out.sample().value()(0, 1), draw[0]);
  EXPECT_EQ(out.sample().value()(1, 1), draw[1]);
}

TEST(LatentLayer, IndexErrors) {
  LatentVariableLayer layer(1, 1, 3);
  Tape tape;
  const auto params = layer.bind(tape, "");
  const Var x = tape.constant(Tensor(Shape{2, 1}));
  ForwardContext ctx;
  ctx.zero_noise = true;
  const std::size_t out_of_range[] = {0, 3};
  ctx.indices = out_of_range;
  EXPECT_THROW((void)layer.forward(x, params, ctx), ShapeError);
  const std::size_t too_few[] = {0};
  ctx.indices = too_few;
  EXPECT_THROW((void)layer.forward(x, params, ctx), ShapeError);
}

TEST(DenseLayer, PriorWeightsHaveZeroKl) {
  Gen gen(7);
  BayesianDenseLayer layer(3, 2, Activation::Identity);
  Tape tape;
  RandomStream rng(4), copy(4);
  ForwardContext ctx;
  ctx.rng = &rng;
  const Tensor x = gen.normal_tensor({4, 3});
  const auto out = layer.forward(tape.constant(x), layer.bind(tape, ""), ctx);
  EXPECT_EQ(out.kl.value().item(), 0.0);
  const Tensor w = copy.normal_tensor({3, 2});
  EXPECT_LE(dgp::testing::max_abs_diff(dgp::testing::dense(out.sample().value()),
                                       x.matrix() * w.matrix()),
            1e-14);
}

TEST(DenseLayer, ZeroNoiseIsDeterministic) {
  Gen gen(8);
  for (auto act : {Activation::Identity, Activation::Tanh}) {
    BayesianDenseLayer layer(3, 2, act);
    layer.parameter("weight_means") = gen.normal_tensor({3, 2});
    layer.parameter("bias") = gen.normal_tensor({2});
    const Tensor x = gen.normal_tensor({4, 3});
    Tape tape;
    ForwardContext ctx;
    ctx.zero_noise = true;
    const Tensor out = layer.forward(tape.constant(x), layer.bind(tape, ""), ctx).sample().value();
    const Tensor& wm = layer.parameter("weight_means");
    const Tensor& b = layer.parameter("bias");
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 2; ++j) {
        double h = b[j];
        for (std::size_t k = 0; k < 3; ++k) h += x(i, k) * wm(k, j);
        EXPECT_NEAR(out(i, j), act == Activation::Tanh ? std::tanh(h) : h, 1e-14);
      }
  }
}

TEST(DenseLayer, SingleWeightKl) {
  BayesianDenseLayer layer(1, 1, Activation::Identity);
  layer.parameter("weight_means") = Tensor::matrix(1, 1, {1});
  Tape tape;
  ForwardContext ctx;
  ctx.zero_noise = true;
  EXPECT_EQ(layer.forward(tape.constant(Tensor(Shape{1, 1})), layer.bind(tape, ""), ctx)
                .kl.value()
                .item(),
            0.5);
}

TEST(Likelihood, ExactPredictionUnitNoise) {
  Tape tape;
  const GaussianMarginals m{tape.constant(Tensor::matrix(1, 1, {0.3})),
                            tape.constant(Tensor::matrix(1, 1, {0}))};
  const double loss =
      gaussian_likelihood_loss(m, tape.constant(Tensor::matrix(1, 1, {0.3})),
                               tape.constant(Tensor::scalar(1)))
          .value()
          .item();
  EXPECT_NEAR(loss, 0.5 * std::log(2 * M_PI), 1e-15);
  EXPECT_NEAR(loss, 0.91894, 1e-5);
}

TEST(Likelihood, AdditiveOverRowsAndMatchesPointwise) {
  Gen gen(9);
  const Tensor mean = gen.normal_tensor({3, 2}), y = gen.normal_tensor({3, 2});
  const Tensor var = gen.uniform_tensor({3, 2}, 0.1, 1.0);
  const double noise = 0.3;
  Tape tape;
  const auto loss = [&](const Tensor& mu, const Tensor& v, const Tensor& t) {
    return gaussian_likelihood_loss({tape.constant(mu), tape.constant(v)}, tape.constant(t),
                                    tape.constant(Tensor::scalar(noise)))
        .value()
        .item();
  };
  double pointwise = 0;
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t p = 0; p < 2; ++p)
      pointwise -= gaussian_variational_expectation(y(i, p), mean(i, p), var(i, p), noise);
  EXPECT_NEAR(loss(mean, var, y), pointwise, 1e-12);

  const auto twice = [](const Tensor& t) {
    Tensor out(Shape{2 * t.rows(), t.cols()});
    for (std::size_t i = 0; i < out.rows(); ++i)
      for (std::size_t j = 0; j < t.cols(); ++j) out(i, j) = t(i % t.rows(), j);
    return out;
  };
  EXPECT_NEAR(loss(twice(mean), twice(var), twice(y)), 2 * loss(mean, var, y), 1e-12);
}

TEST(Likelihood, WidthMismatch) {
  Tape tape;
  const GaussianMarginals m{tape.constant(Tensor(Shape{2, 2})), tape.constant(Tensor(Shape{2, 2}))};
  EXPECT_THROW((void)gaussian_likelihood_loss(m, tape.constant(Tensor(Shape{2, 1})),
                                              tape.constant(Tensor::scalar(1))),
               ShapeError);
}

TEST(LayerGradients, EveryLayerKind) {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    Gen gen(seed);
    std::vector<std::unique_ptr<Layer>> layers;
    layers.push_back(std::make_unique<GPLayer>(
        random_gp(gen, 2, 2, 3, seed % 2 == 0, MeanKind::Linear)));
    auto latent = std::make_unique<LatentVariableLayer>(2, 1, 4);
    latent->parameter("means") = gen.normal_tensor({4, 1});
    latent->parameter("log_variances") = gen.uniform_tensor({4, 1}, -1, 0);
    layers.push_back(std::move(latent));
    auto dense = std::make_unique<BayesianDenseLayer>(2, 2, Activation::Tanh);
    dense->parameter("weight_means") = gen.normal_tensor({2, 2});
    dense->parameter("weight_log_variances") = gen.uniform_tensor({2, 2}, -2, 0);
    dense->parameter("bias") = gen.normal_tensor({2});
    layers.push_back(std::move(dense));

    const Tensor x = gen.normal_tensor({3, 2});
    const std::size_t idx[] = {0, 2, 3};
    for (const auto& layer : layers) {
      const RandomStream base(seed + 100);
      const Tensor weights = gen.normal_tensor({3, layer->output_dim()});
      const auto f = [&](Tape& tape, const Vars& v) {
        RandomStream rng = base;
        ForwardContext ctx;
        ctx.rng = &rng;
        ctx.indices = idx;
        const auto out = layer->forward(v.at("input"), ordered(*layer, v), ctx);
        return sum(mul(out.sample(), tape.constant(weights))) + out.kl;
      };
      Bindings b = layer_bindings(*layer);
      b.emplace("input", x);
      GradientCheckOptions opts;
      opts.atol = 1e-8;
      const auto report = check_gradients(f, b, opts);
      EXPECT_LT(report.max_rel_error, 1e-5) << to_string(layer->kind()) << " seed " << seed;
    }
  }
}

TEST(LayerStacks, OutputWidthsFollowShapeInference) {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    Gen gen(seed);
    const std::size_t in = gen.index(1, 3), out = gen.index(1, 3), n = 6;
    ModelSpec spec;
    const std::size_t depth = gen.index(1, 4);
    for (std::size_t i = 0; i < depth; ++i) {
      LayerSpec l;
      const std::size_t kind = i + 1 == depth ? 0 : gen.index(0, 2);
      l.kind = kind == 0 ? LayerKind::GP : kind == 1 ? LayerKind::Latent : LayerKind::Dense;
      l.num_inducing = gen.index(1, 4);
      l.latent_dim = gen.index(1, 2);
      if (l.kind != LayerKind::Latent && i + 1 < depth && gen.index(0, 1)) {
        l.output_dim = gen.index(1, 4);
      }
      spec.layers.push_back(l);
    }
    const auto widths = infer_layer_widths(spec.layers, in, out);
    ASSERT_EQ(widths.size(), depth + 1);
    EXPECT_EQ(widths.front(), in);
    EXPECT_EQ(widths.back(), out);

    const DeepGP model = build_model(spec, in, out, n);
    Gen data(seed + 1000);
    Tape tape;
    const auto bound = model.bind(tape);
    RandomStream rng(seed);
    const std::size_t idx[] = {0, 1, 2, 3, 4, 5};
    ForwardContext ctx;
    ctx.rng = &rng;
    ctx.indices = idx;
    Var h = tape.constant(data.normal_tensor({n, in}));
    for (std::size_t i = 0; i < depth; ++i) {
      const auto o = model.layer(i).forward(h, bound.layers[i], ctx);
      h = o.sample();
      EXPECT_EQ(h.cols(), widths[i + 1]) << "layer " << i << " seed " << seed;
      EXPECT_GE(o.kl.value().item(), 0.0);
    }
  }
}

TEST(LayerStacks, LastWidthMustMatchTargets) {
  LayerSpec dense;
  dense.kind = LayerKind::Dense;
  dense.output_dim = 3;
  EXPECT_THROW((void)infer_layer_widths({dense}, 2, 1), DataError);
  LayerSpec latent;
  latent.kind = LayerKind::Latent;
  EXPECT_THROW((void)infer_layer_widths({latent}, 2, 2), DataError);
}

TEST(LayerStacks, PriorModelHasZeroKl) {
  ModelSpec spec;
  LayerSpec gp;
  gp.num_inducing = 4;
  LayerSpec latent;
  latent.kind = LayerKind::Latent;
  LayerSpec dense;
  dense.kind = LayerKind::Dense;
  spec.layers = {latent, gp, dense, gp};
  spec.layers[1].output_dim = 2;
  DeepGP model = build_model(spec, 2, 1, 5);
  // Dense weights at N(0, 1).
  model.layer(2).parameter("weight_log_variances") = Tensor(Shape{2, 2});
  Tape tape;
  const auto bound = model.bind(tape);
  RandomStream rng(0);
  const std::size_t idx[] = {0, 1, 2, 3, 4};
  ForwardContext ctx;
  ctx.rng = &rng;
  ctx.indices = idx;
  Gen gen(0);
  const auto prop = propagate(model, bound, tape.constant(gen.normal_tensor({5, 2})), ctx);
  EXPECT_NEAR(prop.kl.value().item(), 0.0, 1e-10);
}
