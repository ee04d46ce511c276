#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dgp/gauss.hpp"
#include "dgp/kernels.hpp"
#include "dgp/layers.hpp"
#include "dgp/training.hpp"

namespace dgp {

/// One entry of the model's layer list.
struct LayerSpec {
  LayerKind kind = LayerKind::GP;
  /// Width of the layer's output. Defaults to the target count for the last
  /// layer and to the incoming width otherwise. Ignored for latent layers,
  /// whose output width is input + latent_dim.
  std::optional<std::size_t> output_dim;

  // gp
  std::size_t num_inducing = 20;
  KernelFamily kernel = KernelFamily::SquaredExponential;
  /// Empty means "auto": linear for inner layers, zero for the last layer.
  std::optional<MeanKind> mean_function;
  bool whitened = true;
  double variance = 1.0;
  double lengthscale = 1.0;
  /// Initial cov-sqrt scale; 1e-5 for inner layers and 1 for the last by default.
  std::optional<double> q_sqrt_scale;

  // latent
  std::size_t latent_dim = 1;
  double latent_init_variance = 0.1;

  // dense
  Activation activation = Activation::Identity;
};

struct ModelSpec {
  std::vector<LayerSpec> layers;
  /// Initial likelihood noise variance; 0.01 * var(Y) when unset.
  std::optional<double> noise_variance;
  JitterPolicy jitter;
};

struct DataSpec {
  std::filesystem::path train;
  std::optional<std::filesystem::path> validation;
  std::vector<std::string> targets;
  bool normalise = true;
};

struct ExperimentConfig {
  DataSpec data;
  ModelSpec model;
  TrainConfig training;
  std::filesystem::path output_dir = "output";
};

/// Parses a JSON configuration document. Unknown keys and ill-typed or
/// out-of-range values raise DataError naming the offending key. Relative
/// paths are resolved against `base_dir`.
ExperimentConfig parse_config(std::string_view text,
                              const std::filesystem::path& base_dir = {});

ExperimentConfig load_config(const std::filesystem::path& path);

/// Canonical JSON rendering, accepted back by parse_config.
std::string config_to_json(const ExperimentConfig& config);

}  // namespace dgp
