#pragma once

#include <cstddef>
#include <vector>

#include "dgp/config.hpp"
#include "dgp/model.hpp"
#include "dgp/random.hpp"

namespace dgp {

/// Widths between layers: entry 0 is the input width, entry i+1 the output
/// width of layer i. Throws DataError when the last width cannot equal
/// `output_dim`.
std::vector<std::size_t> infer_layer_widths(const std::vector<LayerSpec>& layers,
                                            std::size_t input_dim,
                                            std::size_t output_dim);

/// Model with every parameter at its prior value (no data needed). Used to
/// give checkpoints a skeleton to load into.
DeepGP build_model(const ModelSpec& spec, std::size_t input_dim,
                   std::size_t output_dim, std::size_t num_data);

/// Data-dependent initialisation, a pure function of (spec, X, Y, seed):
/// inducing inputs by k-means on the features reaching each layer, inner
/// linear mean functions as identity / principal projection / zero padding,
/// inner cov-sqrts 1e-5 I and the last one I, noise 0.01 var(Y).
DeepGP initialise_model(const ModelSpec& spec, const Tensor& x, const Tensor& y,
                        std::uint64_t seed);

/// k centres of the rows of `points`. k == N returns the rows unchanged;
/// k > N appends jittered copies of random rows; k < N runs k-means++
/// seeding followed by Lloyd iterations.
Tensor kmeans(const Tensor& points, std::size_t k, RandomStream& rng,
              std::size_t iterations = 50);

/// D x W projection for a linear mean function: identity when D == W, the
/// top-W right singular vectors of `x` when D > W, [I, 0] when D < W.
Tensor linear_mean_projection(const Tensor& x, std::size_t output_dim);

}  // namespace dgp
