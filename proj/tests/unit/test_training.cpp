#include <cmath>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "dgp/errors.hpp"
#include "dgp/init.hpp"
#include "dgp/training.hpp"
#include "test_support.hpp"

using namespace dgp;
namespace fs = std::filesystem;

namespace {

Dataset toy() {
  const std::string targets[] = {"y"};
  return load_csv(fs::path(DGP_SOURCE_DIR) / "data" / "toy_1d.csv", targets, true);
}

ModelSpec two_gp_layers() {
  LayerSpec gp;
  gp.num_inducing = 10;
  ModelSpec spec;
  spec.layers = {gp, gp};
  return spec;
}

TrainConfig quick(std::size_t epochs) {
  TrainConfig c;
  c.epochs = epochs;
  c.batch_size = 32;
  c.seed = 3;
  c.eval_samples = 10;
  c.metrics_every = 5;
  return c;
}

}  // namespace

TEST(Fit, ZeroEpochsChangesNothing) {
  const Dataset data = toy();
  DeepGP model = initialise_model(two_gp_layers(), data.x, data.y, 1);
  const auto before = model.parameter_values();
  const TrainHistory h = fit(model, data, quick(0));
  EXPECT_TRUE(h.epochs.empty());
  const auto after = model.parameter_values();
  ASSERT_EQ(before.size(), after.size());
  for (std::size_t i = 0; i < before.size(); ++i) EXPECT_EQ(before[i].second, after[i].second);
}

TEST(Fit, BitReproducible) {
  const Dataset data = toy();
  const auto run = [&] {
    DeepGP model = initialise_model(two_gp_layers(), data.x, data.y, 9);
    TrainHistory h = fit(model, data, quick(15));
    return std::pair{std::move(h), model.parameter_values()};
  };
  const auto [h1, p1] = run();
  const auto [h2, p2] = run();
  ASSERT_EQ(h1.epochs.size(), 15u);
  ASSERT_EQ(h1.epochs.size(), h2.epochs.size());
  for (std::size_t i = 0; i < h1.epochs.size(); ++i) {
    EXPECT_EQ(h1.epochs[i].epoch, i + 1);
    EXPECT_EQ(h1.epochs[i].elbo, h2.epochs[i].elbo);
    EXPECT_EQ(h1.epochs[i].learning_rate, h2.epochs[i].learning_rate);
    EXPECT_EQ(h1.epochs[i].rmse, h2.epochs[i].rmse);
    EXPECT_EQ(h1.epochs[i].nlpd, h2.epochs[i].nlpd);
  }
  for (std::size_t i = 0; i < p1.size(); ++i) EXPECT_EQ(p1[i].second, p2[i].second);
}

TEST(Fit, ElboTrendsUpOnToyData) {
  const Dataset data = toy();
  DeepGP model = initialise_model(two_gp_layers(), data.x, data.y, 1);
  const TrainHistory h = fit(model, data, quick(100));
  double tail = 0;
  for (std::size_t i = 90; i < 100; ++i) tail += h.epochs[i].elbo;
  EXPECT_GT(tail / 10, h.epochs.front().elbo);
}

TEST(Fit, MetricsEveryAndLastEpoch) {
  const Dataset data = toy();
  DeepGP model = initialise_model(two_gp_layers(), data.x, data.y, 1);
  const TrainHistory h = fit(model, data, quick(7));
  for (const auto& r : h.epochs) {
    const bool expected = r.epoch % 5 == 0 || r.epoch == 7;
    EXPECT_EQ(r.rmse.has_value(), expected) << r.epoch;
    EXPECT_EQ(r.nlpd.has_value(), expected) << r.epoch;
  }
}

TEST(Fit, FrozenParametersStayPut) {
  const Dataset data = toy();
  DeepGP model = initialise_model(two_gp_layers(), data.x, data.y, 1);
  const auto before = model.parameter_values();
  TrainConfig c = quick(3);
  c.frozen = {"layers.0.", "likelihood."};
  (void)fit(model, data, c);
  const auto after = model.parameter_values();
  std::size_t moved = 0;
  for (std::size_t i = 0; i < before.size(); ++i) {
    const bool frozen = before[i].first.rfind("layers.0.", 0) == 0 ||
                        before[i].first.rfind("likelihood.", 0) == 0;
    if (frozen) EXPECT_EQ(before[i].second, after[i].second) << before[i].first;
    else moved += before[i].second != after[i].second;
  }
  EXPECT_GT(moved, 0u);
}

TEST(Fit, ResumingMatchesOneRun) {
  const Dataset data = toy();
  TrainConfig c = quick(12);
  c.metrics_every = 0;
  c.plateau.patience = 1000;
  DeepGP once = initialise_model(two_gp_layers(), data.x, data.y, 4);
  const TrainHistory full = fit(once, data, c);

  DeepGP split = initialise_model(two_gp_layers(), data.x, data.y, 4);
  TrainingState state = TrainingState::fresh(c);
  c.epochs = 5;
  const TrainHistory first = fit(split, data, c, {}, &state);
  c.epochs = 7;
  const TrainHistory second = fit(split, data, c, {}, &state);
  EXPECT_EQ(state.epochs_completed, 12u);
  EXPECT_EQ(second.epochs.front().epoch, 6u);
  EXPECT_EQ(second.epochs.back().elbo, full.epochs.back().elbo);
  const auto a = once.parameter_values(), b = split.parameter_values();
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].second, b[i].second);
}

TEST(Fit, OnBestAndEpochCallbacks) {
  const Dataset data = toy();
  DeepGP model = initialise_model(two_gp_layers(), data.x, data.y, 1);
  std::size_t epochs = 0, bests = 0;
  double best = -INFINITY;
  TrainCallbacks cb;
  cb.on_epoch = [&](const EpochRecord&) { ++epochs; };
  cb.on_best = [&](const DeepGP&, const TrainingState& s) {
    ++bests;
    EXPECT_GT(s.best_elbo, best);
    best = s.best_elbo;
  };
  const TrainHistory h = fit(model, data, quick(10), cb);
  EXPECT_EQ(epochs, 10u);
  EXPECT_GE(bests, 1u);
  double running = -INFINITY;
  std::size_t improvements = 0;
  for (const auto& r : h.epochs)
    if (r.elbo > running) {
      running = r.elbo;
      ++improvements;
    }
  EXPECT_EQ(bests, improvements);
  EXPECT_EQ(best, running);
}

TEST(Fit, MetricsCsvWritten) {
  const Dataset data = toy();
  DeepGP model = initialise_model(two_gp_layers(), data.x, data.y, 1);
  const fs::path dir = fs::temp_directory_path() / "dgp_training_test";
  fs::create_directories(dir);
  TrainCallbacks cb;
  cb.metrics_csv = dir / "metrics.csv";
  (void)fit(model, data, quick(6), cb);
  std::ifstream in(dir / "metrics.csv");
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, kMetricsHeader);
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), 5) << line;
  }
  EXPECT_EQ(rows, 6u);
  fs::remove_all(dir);
}

TEST(Fit, RejectsBadConfig) {
  const Dataset data = toy();
  DeepGP model = initialise_model(two_gp_layers(), data.x, data.y, 1);
  TrainConfig c = quick(1);
  c.batch_size = 0;
  EXPECT_THROW((void)fit(model, data, c), DataError);
  c = quick(1);
  c.learning_rate = -1;
  EXPECT_THROW((void)fit(model, data, c), DataError);
}

TEST(Fit, NonFiniteObjectiveIsNumericalError) {
  const Dataset data = toy();
  DeepGP model = initialise_model(two_gp_layers(), data.x, data.y, 1);
  TrainCallbacks cb;
  cb.best_checkpoint = "somewhere/best.ckpt";
  TrainingState state = TrainingState::fresh(quick(2));
  const auto corrupt = [&] {
    for (auto& p : model.parameters())
      if (p.name == "layers.1.q_mu") (*p.value)[0] = 1e300;
  };
  const auto message = [&] {
    try {
      (void)fit(model, data, quick(2), cb, &state);
    } catch (const NumericalError& e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };

  DeepGP pristine = model;
  corrupt();
  // Nothing has been saved yet, so no checkpoint is named.
  std::string what = message();
  EXPECT_NE(what.find("epoch 1"), std::string::npos) << what;
  EXPECT_EQ(what.find("best.ckpt"), std::string::npos) << what;

  model = pristine;
  state = TrainingState::fresh(quick(2));
  ASSERT_EQ(message(), "no error");
  corrupt();
  what = message();
  EXPECT_NE(what.find("epoch 3"), std::string::npos) << what;
  EXPECT_NE(what.find("last good checkpoint: somewhere/best.ckpt"), std::string::npos) << what;
}

TEST(Evaluate, RepeatableAndInTargetUnits) {
  const Dataset data = toy();
  DeepGP model = initialise_model(two_gp_layers(), data.x, data.y, 1);
  const Metrics a = evaluate_dataset(model, data, 20, 5);
  const Metrics b = evaluate_dataset(model, data, 20, 5);
  EXPECT_EQ(a.rmse, b.rmse);
  EXPECT_EQ(a.nlpd, b.nlpd);

  // Same model on unnormalised targets shifts nlpd by the mean log std.
  Dataset raw = data;
  raw.y_stats.reset();
  raw.y = data.raw_targets();
  RandomStream rng = RandomStream::derive(5, "eval");
  const auto mix = predict(model, data.x, 20, rng);
  const Metrics standard = mixture_metrics(mix, data.y);
  EXPECT_NEAR(a.rmse, standard.rmse * data.y_stats->std[0], 1e-12);
  EXPECT_NEAR(a.nlpd, standard.nlpd + std::log(data.y_stats->std[0]), 1e-10);
}

TEST(MetricsCsv, EmptyCellsWhenAbsent) {
  TrainHistory h;
  h.epochs.push_back({1, -2.5, 0.01, 0.5, std::nullopt, std::nullopt});
  h.epochs.push_back({2, -1.5, 0.01, 0.75, 0.25, 1.0});
  std::istringstream in(format_metrics_csv(h));
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, kMetricsHeader);
  std::getline(in, line);
  EXPECT_EQ(line, "1,-2.5,0.01,,,0.5");
  std::getline(in, line);
  EXPECT_EQ(line, "2,-1.5,0.01,0.25,1,0.75");
}
