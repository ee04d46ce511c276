#include "dgp/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "dgp/errors.hpp"
#include "dgp/ops.hpp"

namespace dgp {
namespace {

double smoothed_elbo(std::span<const EpochRecord> history, std::size_t end,
                     std::size_t window) {
  const std::size_t begin = end + 1 >= window ? end + 1 - window : 0;
  double s = 0.0;
  for (std::size_t i = begin; i <= end; ++i) s += history[i].elbo;
  return s / static_cast<double>(end + 1 - begin);
}

bool is_frozen(const std::string& name, const std::vector<std::string>& frozen) {
  return std::any_of(frozen.begin(), frozen.end(), [&](const std::string& prefix) {
    return name.compare(0, prefix.size(), prefix) == 0;
  });
}

Tensor gather(const Tensor& m, std::span<const std::size_t> rows) {
  Tensor out(Shape{rows.size(), m.cols()});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t c = 0; c < m.cols(); ++c) out(i, c) = m(rows[i], c);
  }
  return out;
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

[[noreturn]] void abort_training(std::size_t epoch, const std::string& what,
                                 const TrainCallbacks& callbacks,
                                 const TrainingState& state) {
  std::string msg = "training aborted at epoch " + std::to_string(epoch) + ": " + what;
  if (callbacks.best_checkpoint && std::isfinite(state.best_elbo)) {
    msg += "; last good checkpoint: " + callbacks.best_checkpoint->string();
  }
  throw NumericalError(msg);
}

}  // namespace

void PlateauConfig::validate() const {
  if (!(factor > 0.0 && factor < 1.0)) {
    throw DataError("plateau factor must lie in (0, 1)");
  }
  if (!(min_lr >= 0.0)) throw DataError("plateau min_lr must be non-negative");
  if (window == 0) throw DataError("plateau window must be at least 1");
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw DataError("learning_rate must be positive");
  if (batch_size == 0) throw DataError("batch_size must be at least 1");
  if (mc_samples == 0) throw DataError("mc_samples must be at least 1");
  if (eval_samples == 0) throw DataError("eval_samples must be at least 1");
  plateau.validate();
  jitter.validate();
}

double reduce_lr_on_plateau(std::span<const EpochRecord> history,
                            double current_lr, const PlateauConfig& config) {
  config.validate();
  double best = -std::numeric_limits<double>::infinity();
  std::size_t wait = 0;
  std::size_t cooldown = 0;
  bool fired_last = false;
  for (std::size_t e = 0; e < history.size(); ++e) {
    fired_last = false;
    const double value = smoothed_elbo(history, e, config.window);
    const bool cooling = cooldown > 0;
    if (cooling) {
      --cooldown;
      wait = 0;
    }
    if (value > best + config.min_delta) {
      best = value;
      wait = 0;
    } else if (!cooling) {
      ++wait;
      if (wait >= config.patience) {
        if (history[e].learning_rate > config.min_lr) fired_last = true;
        cooldown = config.patience;
        wait = 0;
      }
    }
  }
  if (!fired_last) return current_lr;
  return std::max(current_lr * config.factor, config.min_lr);
}

TrainingState TrainingState::fresh(const TrainConfig& config) {
  TrainingState state;
  state.optimizer.learning_rate = config.learning_rate;
  state.shuffle = RandomStream::derive(config.seed, "shuffle");
  state.sampling = RandomStream::derive(config.seed, "sampling");
  return state;
}

PredictiveMixture denormalise(PredictiveMixture mixture,
                              const std::optional<ColumnStats>& y_stats) {
  if (!y_stats) return mixture;
  mixture.mean = unstandardise(mixture.mean, *y_stats);
  mixture.variance = unstandardise_variance(mixture.variance, *y_stats);
  for (auto& m : mixture.component_means) m = unstandardise(m, *y_stats);
  for (auto& v : mixture.component_variances) v = unstandardise_variance(v, *y_stats);
  return mixture;
}

Metrics evaluate_dataset(const DeepGP& model, const Dataset& data,
                         std::size_t num_samples, std::uint64_t seed,
                         const JitterPolicy& jitter) {
  if (data.y.cols() != model.output_dim()) {
    throw DataError("evaluation data has " + std::to_string(data.y.cols()) +
                    " target columns, model predicts " +
                    std::to_string(model.output_dim()));
  }
  RandomStream rng = RandomStream::derive(seed, "eval");
  PredictiveMixture mix = predict(model, data.x, num_samples, rng, jitter);
  return mixture_metrics(denormalise(std::move(mix), data.y_stats),
                         data.raw_targets());
}

std::string format_metrics_csv(const TrainHistory& history) {
  std::string out = kMetricsHeader;
  out += '\n';
  for (const auto& r : history.epochs) {
    out += std::to_string(r.epoch);
    out += ',' + format_double(r.elbo);
    out += ',' + format_double(r.learning_rate);
    out += ',' + (r.rmse ? format_double(*r.rmse) : std::string());
    out += ',' + (r.nlpd ? format_double(*r.nlpd) : std::string());
    out += ',' + format_double(r.seconds);
    out += '\n';
  }
  return out;
}

TrainHistory fit(DeepGP& model, const Dataset& data, const TrainConfig& config,
                 const TrainCallbacks& callbacks, TrainingState* state_in) {
  config.validate();
  const std::size_t n = data.size();
  if (n == 0) throw DataError("cannot fit on an empty dataset");
  if (data.input_dim() != model.input_dim() || data.output_dim() != model.output_dim()) {
    throw ShapeError("dataset is " + std::to_string(data.input_dim()) + " -> " +
                     std::to_string(data.output_dim()) + " but model is " +
                     std::to_string(model.input_dim()) + " -> " +
                     std::to_string(model.output_dim()));
  }
  TrainingState local = TrainingState::fresh(config);
  TrainingState& state = state_in ? *state_in : local;
  model.set_num_data(n);
  model.set_num_mc_samples(config.mc_samples);

  std::vector<ParameterRef> trainable;
  for (const auto& p : model.parameters()) {
    if (!is_frozen(p.name, config.frozen)) trainable.push_back(p);
  }

  const Dataset& metrics_data = callbacks.metrics_data ? *callbacks.metrics_data : data;
  const std::size_t batch = std::min(config.batch_size, n);
  const auto start = std::chrono::steady_clock::now();
  TrainHistory history;
  std::vector<std::size_t> order(n);

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    state.shuffle.shuffle(order);

    const double lr = state.optimizer.learning_rate;
    double elbo_sum = 0.0;
    std::size_t steps = 0;
    for (std::size_t begin = 0; begin < n; begin += batch) {
      const std::span<const std::size_t> rows(order.data() + begin,
                                              std::min(batch, n - begin));
      double step_elbo = std::numeric_limits<double>::quiet_NaN();
      Gradients grads;
      try {
        Tape tape;
        const auto bound = model.bind(tape);
        const Var e = elbo(model, bound, tape.constant(gather(data.x, rows)),
                           tape.constant(gather(data.y, rows)), rows,
                           state.sampling, config.jitter);
        step_elbo = e.value().item();
        grads = tape.backward(neg(e));
      } catch (const NumericalError& err) {
        abort_training(state.epochs_completed + 1, err.what(), callbacks, state);
      }
      for (const auto& [name, g] : grads) {
        if (!g.all_finite()) {
          abort_training(state.epochs_completed + 1, "non-finite gradient for " + name,
                         callbacks, state);
        }
      }
      adam_step(trainable, grads, state.optimizer);
      elbo_sum += step_elbo;
      ++steps;
    }

    EpochRecord record;
    record.epoch = state.epochs_completed + 1;
    record.elbo = elbo_sum / static_cast<double>(steps);
    record.learning_rate = lr;
    if (!std::isfinite(record.elbo)) {
      abort_training(record.epoch, "non-finite ELBO", callbacks, state);
    }
    const bool last = epoch + 1 == config.epochs;
    if (config.metrics_every > 0 &&
        ((epoch + 1) % config.metrics_every == 0 || last)) {
      const Metrics m = evaluate_dataset(model, metrics_data, config.eval_samples,
                                         config.seed, config.jitter);
      record.rmse = m.rmse;
      record.nlpd = m.nlpd;
    }
    record.seconds = std::chrono::duration<double>(
                         std::chrono::steady_clock::now() - start)
                         .count();
    history.epochs.push_back(record);
    state.epochs_completed += 1;

    state.optimizer.learning_rate =
        reduce_lr_on_plateau(history.epochs, lr, config.plateau);
    if (record.elbo > state.best_elbo) {
      state.best_elbo = record.elbo;
      if (callbacks.on_best) callbacks.on_best(model, state);
    }
    if (callbacks.metrics_csv) {
      write_file_atomically(*callbacks.metrics_csv, format_metrics_csv(history));
    }
    if (callbacks.on_epoch) callbacks.on_epoch(record);
  }
  return history;
}

}  // namespace dgp
