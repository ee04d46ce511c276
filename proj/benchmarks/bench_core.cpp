#include <benchmark/benchmark.h>

#include <cmath>
#include <numeric>

#include "dgp/conditional.hpp"
#include "dgp/init.hpp"
#include "dgp/kernels.hpp"
#include "dgp/model.hpp"

namespace {

dgp::Tensor random_inputs(std::size_t n, std::size_t d, std::uint64_t key) {
  dgp::RandomStream rng(key);
  dgp::Tensor x(dgp::Shape{n, d});
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.normal();
  return x;
}

void BM_KernelMatrix(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const dgp::Tensor x = random_inputs(n, 4, 1);
  for (auto _ : state) {
    dgp::Tape tape;
    dgp::KernelParams k{dgp::KernelFamily::SquaredExponential,
                        tape.constant(dgp::Tensor::scalar(1.0)),
                        tape.constant(dgp::Tensor::vector({1.0, 1.0, 1.0, 1.0}))};
    const dgp::Var xv = tape.constant(x);
    benchmark::DoNotOptimize(dgp::kernel_matrix(k, xv, xv).value()[0]);
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_KernelMatrix)->RangeMultiplier(2)->Range(64, 512)->Complexity();

void BM_Conditional(benchmark::State& state) {
  const auto m = static_cast<std::size_t>(state.range(0));
  const dgp::Tensor z = random_inputs(m, 2, 2);
  const dgp::Tensor x = random_inputs(256, 2, 3);
  for (auto _ : state) {
    dgp::Tape tape;
    dgp::InducingState s{tape.variable("z", z),
                         tape.variable("q_mu", dgp::Tensor(dgp::Shape{m, 1})),
                         {tape.variable("q_sqrt", dgp::Tensor::identity(m))},
                         true};
    dgp::KernelParams k{dgp::KernelFamily::SquaredExponential,
                        tape.variable("var", dgp::Tensor::scalar(1.0)),
                        tape.variable("ls", dgp::Tensor::vector({1.0, 1.0}))};
    const auto out = dgp::conditional(tape.constant(x), s, k, false, {});
    benchmark::DoNotOptimize(out.variance.value()[0]);
  }
}
BENCHMARK(BM_Conditional)->Arg(16)->Arg(64)->Arg(128);

void BM_ElboStep(benchmark::State& state) {
  const std::size_t n = 256;
  const dgp::Tensor x = random_inputs(n, 2, 4);
  dgp::Tensor y(dgp::Shape{n, 1});
  for (std::size_t i = 0; i < n; ++i) y[i] = std::sin(3.0 * x(i, 0)) + x(i, 1);

  dgp::ModelSpec spec;
  const auto layers = static_cast<std::size_t>(state.range(0));
  for (std::size_t l = 0; l < layers; ++l) {
    dgp::LayerSpec layer;
    layer.num_inducing = 32;
    spec.layers.push_back(layer);
  }
  const dgp::DeepGP model = dgp::initialise_model(spec, x, y, 7);
  std::vector<std::size_t> indices(n);
  std::iota(indices.begin(), indices.end(), std::size_t{0});
  dgp::RandomStream rng(11);
  for (auto _ : state) {
    dgp::Tape tape;
    const auto bound = model.bind(tape);
    const dgp::Var elbo = dgp::elbo(model, bound, tape.constant(x),
                                    tape.constant(y), indices, rng);
    benchmark::DoNotOptimize(tape.backward(elbo).size());
  }
}
BENCHMARK(BM_ElboStep)->Arg(1)->Arg(2)->Arg(3)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
