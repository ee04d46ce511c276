#include "dgp_cli/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "dgp/checkpoint.hpp"
#include "dgp/config.hpp"
#include "dgp/errors.hpp"
#include "dgp/gradient_check.hpp"
#include "dgp/init.hpp"
#include "dgp/training.hpp"

namespace dgp::cli {
namespace {

namespace fs = std::filesystem;

constexpr const char* kOutputEnv = "DGP_OUTPUT_DIR";

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

Dataset load_labelled(const fs::path& path, const CheckpointMeta& meta) {
  Dataset data = load_csv_with_schema(path, meta.feature_names, meta.target_names,
                                      meta.x_stats, meta.y_stats);
  if (data.output_dim() != meta.target_names.size()) {
    std::string names;
    for (const auto& t : meta.target_names) names += (names.empty() ? "" : ", ") + t;
    throw DataError(path.string() + ": target column(s) " + names + " missing");
  }
  return data;
}

int run_train(const fs::path& config_path, const std::optional<fs::path>& output,
              std::ostream& out) {
  ExperimentConfig config = load_config(config_path);
  if (output) {
    config.output_dir = *output;
  } else if (const char* env = std::getenv(kOutputEnv); env && *env) {
    config.output_dir = env;
  }
  const Dataset data = load_csv(config.data.train, config.data.targets,
                                config.data.normalise);
  std::optional<Dataset> validation;
  if (config.data.validation) {
    CheckpointMeta schema;
    schema.feature_names = data.feature_names;
    schema.target_names = data.target_names;
    schema.x_stats = data.x_stats;
    schema.y_stats = data.y_stats;
    validation = load_labelled(*config.data.validation, schema);
  }

  DeepGP model = initialise_model(config.model, data.x, data.y, config.training.seed);
  CheckpointMeta meta;
  meta.config = config;
  meta.feature_names = data.feature_names;
  meta.target_names = data.target_names;
  meta.x_stats = data.x_stats;
  meta.y_stats = data.y_stats;

  fs::create_directories(config.output_dir);
  const fs::path best = config.output_dir / "best.ckpt";
  const fs::path final_ckpt = config.output_dir / "model.ckpt";
  const fs::path metrics = config.output_dir / "metrics.csv";

  TrainCallbacks callbacks;
  callbacks.metrics_data = validation ? &*validation : nullptr;
  callbacks.metrics_csv = metrics;
  callbacks.best_checkpoint = best;
  callbacks.on_best = [&](const DeepGP& m, const TrainingState& state) {
    CheckpointMeta snapshot = meta;
    snapshot.state = state;
    save_checkpoint(best, m, snapshot);
  };
  TrainConfig training = config.training;
  training.jitter = config.model.jitter;
  TrainingState state = TrainingState::fresh(training);
  const TrainHistory history = fit(model, data, training, callbacks, &state);
  write_file_atomically(metrics, format_metrics_csv(history));
  meta.state = state;
  save_checkpoint(final_ckpt, model, meta);

  out << "trained " << history.epochs.size() << " epochs";
  if (!history.epochs.empty()) out << ", final elbo " << num(history.epochs.back().elbo);
  out << "; wrote " << final_ckpt.string() << ", " << metrics.string() << "\n";
  return kSuccess;
}

int run_predict(const fs::path& checkpoint, const fs::path& data_path,
                const fs::path& out_path, std::optional<std::size_t> samples,
                std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  const CheckpointMeta& meta = ckpt.meta;
  const Dataset data = load_csv_with_schema(data_path, meta.feature_names,
                                            meta.target_names, meta.x_stats,
                                            meta.y_stats);
  const std::size_t s = samples.value_or(meta.config.training.eval_samples);
  RandomStream rng = RandomStream::derive(meta.config.training.seed, "eval");
  const PredictiveMixture mix = denormalise(
      predict(ckpt.model, data.x, s, rng, meta.config.model.jitter), meta.y_stats);

  const std::size_t p = ckpt.model.output_dim();
  std::string text;
  for (std::size_t j = 0; j < p; ++j) text += (j ? ",mean_" : "mean_") + std::to_string(j + 1);
  for (std::size_t j = 0; j < p; ++j) text += ",var_" + std::to_string(j + 1);
  text += '\n';
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (std::size_t j = 0; j < p; ++j) text += (j ? "," : "") + num(mix.mean(i, j));
    for (std::size_t j = 0; j < p; ++j) text += "," + num(mix.variance(i, j));
    text += '\n';
  }
  write_file_atomically(out_path, text);
  out << "wrote " << data.size() << " predictions to " << out_path.string() << "\n";
  return kSuccess;
}

int run_evaluate(const fs::path& checkpoint, const fs::path& data_path,
                 std::optional<std::size_t> samples, std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  const CheckpointMeta& meta = ckpt.meta;
  const Dataset data = load_labelled(data_path, meta);
  const std::size_t s = samples.value_or(meta.config.training.eval_samples);
  const Metrics m = evaluate_dataset(ckpt.model, data, s, meta.config.training.seed,
                                     meta.config.model.jitter);
  out << "{\"rmse\":" << num(m.rmse) << ",\"nlpd\":" << num(m.nlpd) << "}\n";
  return kSuccess;
}

int run_check_grads(const fs::path& config_path, std::size_t rows, double rtol,
                    double atol, double step, std::ostream& out) {
  const ExperimentConfig config = load_config(config_path);
  const Dataset data = load_csv(config.data.train, config.data.targets,
                                config.data.normalise);
  const DeepGP model =
      initialise_model(config.model, data.x, data.y, config.training.seed);
  const std::size_t n = std::min(rows, data.size());
  std::vector<std::size_t> indices(n);
  for (std::size_t i = 0; i < n; ++i) indices[i] = i;
  const Dataset batch = data.subset(indices);
  const TapeFunction objective = negative_elbo_objective(
      model, batch.x, batch.y, indices,
      RandomStream::derive(config.training.seed, "sampling"), config.model.jitter);

  GradientCheckOptions options;
  options.atol = atol;
  options.step = step;
  const GradientCheckReport report = check_gradients(objective, model.bindings(), options);
  for (const auto& p : report.parameters) {
    out << (p.max_rel_error < rtol ? "ok   " : "FAIL ") << p.name << " entries="
        << p.entries << " max_rel=" << num(p.max_rel_error)
        << " max_abs=" << num(p.max_abs_error) << "\n";
  }
  const bool ok = report.passed(rtol);
  out << (ok ? "gradient check passed" : "gradient check FAILED")
      << ": max relative error " << num(report.max_rel_error) << " (tolerance "
      << num(rtol) << ")\n";
  return ok ? kSuccess : kNumericalFailure;
}

}  // namespace

int cli_main(const std::vector<std::string>& args, std::ostream& out,
             std::ostream& err) {
  CLI::App app{"Deep Gaussian process regression"};
  app.name("dgp");
  app.require_subcommand(1);

  fs::path config_path;
  std::optional<fs::path> output;
  auto* train = app.add_subcommand("train", "fit a model described by a config file");
  train->add_option("--config", config_path, "JSON config file")->required();
  train->add_option("--output", output, "output directory (overrides config and $DGP_OUTPUT_DIR)");

  fs::path checkpoint, data_path, out_path;
  std::optional<std::size_t> samples;
  auto* pred = app.add_subcommand("predict", "write predictive means and variances");
  pred->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  pred->add_option("--data", data_path, "CSV with the training feature columns")->required();
  pred->add_option("--out", out_path, "output CSV")->required();
  pred->add_option("--samples", samples, "propagation samples (default: config eval_samples)");

  auto* eval = app.add_subcommand("evaluate", "print rmse and nlpd as one JSON line");
  eval->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  eval->add_option("--data", data_path, "CSV with feature and target columns")->required();
  eval->add_option("--samples", samples, "propagation samples (default: config eval_samples)");

  std::size_t rows = 16;
  double rtol = 1e-4;
  double atol = 1e-7;
  double step = 1e-4;
  auto* grads = app.add_subcommand("check-grads", "compare autodiff and finite differences");
  grads->add_option("--config", config_path, "JSON config file")->required();
  grads->add_option("--rows", rows, "number of training rows in the batch");
  grads->add_option("--rtol", rtol, "maximum relative error");
  grads->add_option("--atol", atol, "absolute error ignored in the relative check");
  grads->add_option("--step", step, "central-difference step");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    err << app.help();
    return kUsageError;
  }

  try {
    if (*train) return run_train(config_path, output, out);
    if (*pred) return run_predict(checkpoint, data_path, out_path, samples, out);
    if (*eval) return run_evaluate(checkpoint, data_path, samples, out);
    if (*grads) return run_check_grads(config_path, rows, rtol, atol, step, out);
  } catch (const NumericalError& e) {
    err << "error: " << e.what() << "\n";
    return kNumericalFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kDataError;
  }
  err << app.help();
  return kUsageError;
}

}  // namespace dgp::cli
