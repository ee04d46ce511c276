#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dgp/dataset.hpp"
#include "dgp/gauss.hpp"
#include "dgp/model.hpp"
#include "dgp/optimizer.hpp"
#include "dgp/random.hpp"

namespace dgp {

struct PlateauConfig {
  std::size_t patience = 20;
  double factor = 0.5;
  double min_lr = 1e-5;
  /// Improvement (nats) needed to reset the patience counter.
  double min_delta = 1e-4;
  /// The monitored value is the mean ELBO over the last `window` epochs.
  std::size_t window = 5;

  void validate() const;
};

struct TrainConfig {
  double learning_rate = 0.01;
  std::size_t batch_size = 64;
  std::size_t epochs = 500;
  std::uint64_t seed = 0;
  std::size_t mc_samples = 1;
  std::size_t eval_samples = 100;
  /// Compute rmse/nlpd every this many epochs (and always on the last); 0 = never.
  std::size_t metrics_every = 1;
  PlateauConfig plateau;
  JitterPolicy jitter;
  /// Parameters whose name starts with one of these prefixes are not trained.
  std::vector<std::string> frozen;

  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double elbo = 0.0;      // mean of the epoch's minibatch estimates
  double learning_rate = 0.0;
  double seconds = 0.0;   // wall time since fit() started
  std::optional<double> rmse;
  std::optional<double> nlpd;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
};

/// Learning rate to use after the last epoch of `history`.
///
/// Replays a reduce-on-plateau schedule over the smoothed ELBO: once the best
/// value has not improved by min_delta for `patience` epochs the rate is
/// multiplied by `factor` (never below min_lr) and a cooldown of `patience`
/// epochs follows. Returns `current_lr` unless the reduction fires on the
/// final epoch.
double reduce_lr_on_plateau(std::span<const EpochRecord> history,
                            double current_lr, const PlateauConfig& config);

/// Mutable training state carried across fit() calls and checkpoints.
struct TrainingState {
  AdamState optimizer;
  RandomStream shuffle;
  RandomStream sampling;
  std::size_t epochs_completed = 0;
  double best_elbo = -std::numeric_limits<double>::infinity();

  static TrainingState fresh(const TrainConfig& config);
};

struct TrainCallbacks {
  /// Data for the rmse/nlpd columns; the training set when null.
  const Dataset* metrics_data = nullptr;
  /// Metric log rewritten (atomically) after every epoch.
  std::optional<std::filesystem::path> metrics_csv;
  /// Called whenever the epoch ELBO reaches a new best.
  std::function<void(const DeepGP&, const TrainingState&)> on_best;
  /// Where on_best stores its checkpoint; named when training aborts.
  std::optional<std::filesystem::path> best_checkpoint;
  std::function<void(const EpochRecord&)> on_epoch;
};

/// Minibatch Adam ascent on the ELBO. Each epoch draws a permutation from the
/// shuffle stream; MC noise comes from the separate sampling stream. Given
/// the same seed and inputs the history is bit-identical apart from the
/// `seconds` column. A non-finite ELBO aborts with a NumericalError naming
/// the last good checkpoint.
TrainHistory fit(DeepGP& model, const Dataset& data, const TrainConfig& config,
                 const TrainCallbacks& callbacks = {},
                 TrainingState* state = nullptr);

/// Mixture metrics in original target units. Uses a fresh stream derived
/// from `seed`, so repeated calls agree exactly.
Metrics evaluate_dataset(const DeepGP& model, const Dataset& data,
                         std::size_t num_samples, std::uint64_t seed,
                         const JitterPolicy& jitter = {});

/// Predictive mixture mapped back through the dataset's target statistics.
PredictiveMixture denormalise(PredictiveMixture mixture,
                              const std::optional<ColumnStats>& y_stats);

inline constexpr const char* kMetricsHeader = "epoch,elbo,lr,rmse,nlpd,seconds";

std::string format_metrics_csv(const TrainHistory& history);

}  // namespace dgp
