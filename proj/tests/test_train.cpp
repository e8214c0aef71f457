#include "kanwx/train.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>

using namespace kanwx;

namespace {

namespace fs = std::filesystem;

// Smooth deterministic multivariate daily series.
WeatherSeries sine_series(std::size_t n) {
  WeatherSeries s;
  s.city = "synthetic";
  s.days.resize(n);
  s.values.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    s.days[i] = days_from_civil(2010, 1, 1) + static_cast<std::int64_t>(i);
    for (std::size_t f = 0; f < kFeatureCount; ++f)
      s.values[i][f] = 10.0 + static_cast<double>(f) +
                       3.0 * std::sin(0.07 * static_cast<double>(i) +
                                      0.9 * static_cast<double>(f));
  }
  return s;
}

WindowedDataset small_dataset(ScalingFamily family, std::size_t n = 160,
                              std::size_t window = 6) {
  return build_dataset(sine_series(n), family, window, 1, 0);
}

TrainConfig small_config(ModelKind kind, std::size_t window = 6) {
  TrainConfig cfg;
  cfg.kind = kind;
  cfg.window = window;
  cfg.epochs = 3;
  cfg.batch_size = 16;
  cfg.patience = 3;
  cfg.seed = 42;
  cfg.target = "T2M";
  cfg.hp.hidden = 4;
  cfg.hp.dropout = 0.2;
  cfg.hp.kan_hidden = {4};
  return cfg;
}

fs::path temp_file(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "kanwx_train_tests";
  fs::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST(TrainConfig, InvariantsEnforced) {
  TrainConfig cfg = small_config(ModelKind::gru);
  cfg.batch_size = 0;
  EXPECT_THROW(cfg.validate(), ContractError);
  cfg = small_config(ModelKind::gru);
  cfg.patience = cfg.epochs + 1;
  EXPECT_THROW(cfg.validate(), ContractError);
}

TEST(Train, ZeroLearningRateIsNoOpWithFlatHistory) {
  const WindowedDataset ds = small_dataset(ScalingFamily::rnn);
  TrainConfig cfg = small_config(ModelKind::gru);
  cfg.lr = 0.0;
  cfg.hp.dropout = 0.0;
  cfg.epochs = 3;
  cfg.patience = 3;
  auto [model, result] = train_model(cfg, ds);

  // Parameters identical to a freshly initialized model with the same seed.
  Rng rng(cfg.seed);
  auto fresh = make_model(cfg.kind, cfg.features, cfg.window, cfg.hp, rng);
  const auto trained = model->parameters();
  const auto init = fresh->parameters();
  ASSERT_EQ(trained.size(), init.size());
  for (std::size_t i = 0; i < trained.size(); ++i) {
    const auto a = trained[i].tensor.values_copy();
    const auto b = init[i].tensor.values_copy();
    EXPECT_EQ(0, std::memcmp(a.data(), b.data(), a.size() * sizeof(double)));
  }
  for (const EpochStats& e : result.history.epochs) {
    EXPECT_DOUBLE_EQ(e.train_mse, result.history.epochs[0].train_mse);
    EXPECT_DOUBLE_EQ(e.val_mse, result.history.epochs[0].val_mse);
  }
}

TEST(Train, SingleLayerModelFitsNoiselessLinearData) {
  // Target is an exact linear function of the window; a single KAN layer
  // represents it and Adam drives the train MSE below 1e-6.
  WeatherSeries s = sine_series(100);
  // Make feature 0 tomorrow a linear blend of today's features.
  for (std::size_t i = 1; i < s.size(); ++i)
    s.values[i][0] = 0.4 * s.values[i - 1][1] + 0.3 * s.values[i - 1][2] + 5.0;
  WindowedDataset ds = build_dataset(s, ScalingFamily::spline, 4, 1, 0);

  TrainConfig cfg;
  cfg.kind = ModelKind::kan;
  cfg.window = 4;
  cfg.epochs = 500;
  cfg.batch_size = 64;
  cfg.lr = 0.05;
  cfg.patience = 500;
  cfg.seed = 7;
  cfg.target = "T2M";
  cfg.hp.kan_hidden = {};  // single 40 -> 1 layer
  auto [model, result] = train_model(cfg, ds);
  double best = std::numeric_limits<double>::infinity();
  for (const EpochStats& e : result.history.epochs)
    best = std::min(best, e.train_mse);
  EXPECT_LT(best, 1e-6);
}

TEST(Train, SameSeedGivesIdenticalHistoryAndCheckpoint) {
  const WindowedDataset ds = small_dataset(ScalingFamily::rnn);
  const TrainConfig cfg = small_config(ModelKind::lstm);
  auto [m1, r1] = train_model(cfg, ds);
  auto [m2, r2] = train_model(cfg, ds);
  ASSERT_EQ(r1.history.epochs.size(), r2.history.epochs.size());
  for (std::size_t i = 0; i < r1.history.epochs.size(); ++i) {
    EXPECT_EQ(r1.history.epochs[i].train_mse, r2.history.epochs[i].train_mse);
    EXPECT_EQ(r1.history.epochs[i].val_mse, r2.history.epochs[i].val_mse);
  }
  const auto p1 = temp_file("a.ckpt");
  const auto p2 = temp_file("b.ckpt");
  r1.checkpoint.save(p1.string());
  r2.checkpoint.save(p2.string());
  std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
  const std::string b1((std::istreambuf_iterator<char>(f1)), {});
  const std::string b2((std::istreambuf_iterator<char>(f2)), {});
  EXPECT_EQ(b1, b2);
}

TEST(Train, DifferentSeedsDiverge) {
  const WindowedDataset ds = small_dataset(ScalingFamily::rnn);
  TrainConfig cfg = small_config(ModelKind::lstm);
  auto [m1, r1] = train_model(cfg, ds);
  cfg.seed = cfg.seed + 1;
  auto [m2, r2] = train_model(cfg, ds);
  EXPECT_NE(r1.history.epochs[0].train_mse, r2.history.epochs[0].train_mse);
}

TEST(Train, DivergenceRaisesTrainingError) {
  const WindowedDataset ds = small_dataset(ScalingFamily::spline);
  TrainConfig cfg = small_config(ModelKind::kan);
  cfg.lr = 1e160;
  cfg.epochs = 10;
  cfg.patience = 10;
  EXPECT_THROW(train_model(cfg, ds), TrainingError);
}

TEST(Train, EarlyStoppingOnPatience) {
  const WindowedDataset ds = small_dataset(ScalingFamily::rnn);
  TrainConfig cfg = small_config(ModelKind::gru);
  cfg.lr = 0.0;  // validation MSE can never improve after the first epoch
  cfg.hp.dropout = 0.0;
  cfg.epochs = 10;
  cfg.patience = 1;
  auto [model, result] = train_model(cfg, ds);
  EXPECT_EQ(result.history.epochs.size(), 2u);
  EXPECT_EQ(result.history.best_epoch, 0u);
}

TEST(Train, BestValidationIsRunningMinimum) {
  const WindowedDataset ds = small_dataset(ScalingFamily::rnn);
  TrainConfig cfg = small_config(ModelKind::gru);
  cfg.epochs = 6;
  cfg.patience = 6;
  auto [model, result] = train_model(cfg, ds);
  double running = std::numeric_limits<double>::infinity();
  for (const EpochStats& e : result.history.epochs)
    running = std::min(running, e.val_mse);
  EXPECT_EQ(running, result.history.best_val);
}

TEST(Checkpoint, SaveLoadRoundTripsBitExactly) {
  const WindowedDataset ds = small_dataset(ScalingFamily::spline);
  TrainConfig cfg = small_config(ModelKind::tkan);
  cfg.hp.hidden = 3;
  cfg.hp.sub_hidden = 3;
  auto [model, result] = train_model(cfg, ds);
  const auto path = temp_file("roundtrip.ckpt");
  result.checkpoint.save(path.string());
  const Checkpoint loaded = Checkpoint::load(path.string());
  EXPECT_EQ(loaded.config_json, result.checkpoint.config_json);
  EXPECT_EQ(loaded.best_val_mse, result.checkpoint.best_val_mse);
  EXPECT_EQ(loaded.best_epoch, result.checkpoint.best_epoch);
  ASSERT_EQ(loaded.tensors.size(), result.checkpoint.tensors.size());
  for (std::size_t i = 0; i < loaded.tensors.size(); ++i) {
    EXPECT_EQ(loaded.tensors[i].name, result.checkpoint.tensors[i].name);
    const auto a = loaded.tensors[i].tensor.values_copy();
    const auto b = result.checkpoint.tensors[i].tensor.values_copy();
    ASSERT_EQ(a.size(), b.size());
    EXPECT_EQ(0, std::memcmp(a.data(), b.data(), a.size() * sizeof(double)));
  }
}

TEST(Checkpoint, ReloadedModelReproducesStoredValidationMse) {
  const WindowedDataset ds = small_dataset(ScalingFamily::rnn);
  TrainConfig cfg = small_config(ModelKind::bigru);
  cfg.epochs = 4;
  cfg.patience = 4;
  auto [model, result] = train_model(cfg, ds);
  const auto path = temp_file("valrepro.ckpt");
  result.checkpoint.save(path.string());
  const Checkpoint loaded = Checkpoint::load(path.string());
  const EvalResult ev = evaluate_checkpoint(loaded, ds, SplitPart::val);
  EXPECT_EQ(ev.scaled.mse, loaded.best_val_mse);
}

TEST(Checkpoint, CorruptMagicRejected) {
  const auto path = temp_file("corrupt.ckpt");
  std::ofstream(path) << "definitely not a checkpoint";
  EXPECT_THROW(Checkpoint::load(path.string()), DataError);
}

TEST(Evaluate, SeriesLengthEqualsSplitSizeAndActualsPassThrough) {
  const WindowedDataset ds = small_dataset(ScalingFamily::rnn);
  TrainConfig cfg = small_config(ModelKind::gru);
  auto [model, result] = train_model(cfg, ds);
  const EvalResult ev =
      evaluate_model(*model, ds, SplitPart::test, cfg.batch_size);
  EXPECT_EQ(ev.series.size(), ds.split().test);
  EXPECT_EQ(ev.original.n, ds.split().test);
  const std::size_t start = ds.split().train + ds.split().val;
  for (std::size_t i = 0; i < ev.series.size(); ++i) {
    EXPECT_EQ(ev.series[i].actual, ds.target_raw(start + i));
    EXPECT_EQ(ev.series[i].date, ds.target_date(start + i));
  }
}

TEST(Evaluate, ConstantZeroModelHasNonPositiveR2) {
  const WindowedDataset ds = small_dataset(ScalingFamily::rnn);
  TrainConfig cfg = small_config(ModelKind::gru);
  Rng rng(0);
  auto model = make_model(cfg.kind, cfg.features, cfg.window, cfg.hp, rng);
  for (auto& p : model->parameters())
    for (std::size_t i = 0; i < p.tensor.numel(); ++i)
      p.tensor.data()[i] = 0.0;
  const EvalResult ev = evaluate_model(*model, ds, SplitPart::test, 16);
  EXPECT_LE(ev.original.r2, 0.0);
}

TEST(Evaluate, CheckpointDatasetMismatchRejected) {
  const WindowedDataset ds_t2m = small_dataset(ScalingFamily::rnn);
  TrainConfig cfg = small_config(ModelKind::gru);
  auto [model, result] = train_model(cfg, ds_t2m);
  // Same series, different target variable.
  WindowedDataset ds_ps =
      build_dataset(sine_series(160), ScalingFamily::rnn, 6, 1,
                    feature_index("PS"));
  EXPECT_THROW(evaluate_checkpoint(result.checkpoint, ds_ps, SplitPart::val),
               ContractError);
}

TEST(LeakageGuard, OutOfRangeSampleRejected) {
  const WindowedDataset ds = small_dataset(ScalingFamily::rnn);
  const std::size_t train = ds.split().train;
  EXPECT_THROW(make_batch(ds, {train}, false, train), ContractError);
  EXPECT_NO_THROW(make_batch(ds, {train - 1}, false, train));
}

TEST(ModelFromCheckpoint, RebuildsEveryKind) {
  for (ModelKind kind :
       {ModelKind::lstm, ModelKind::gru, ModelKind::bilstm, ModelKind::bigru,
        ModelKind::kan, ModelKind::tkan, ModelKind::tkan_gelu,
        ModelKind::tkan_mish}) {
    const WindowedDataset ds = small_dataset(scaling_family(kind));
    TrainConfig cfg = small_config(kind);
    cfg.epochs = 1;
    cfg.patience = 1;
    cfg.hp.sub_hidden = 3;
    cfg.hp.hidden = 3;
    auto [model, result] = train_model(cfg, ds);
    auto reloaded = model_from_checkpoint(result.checkpoint);
    const EvalResult a =
        evaluate_model(*model, ds, SplitPart::val, cfg.batch_size);
    const EvalResult b =
        evaluate_model(*reloaded, ds, SplitPart::val, cfg.batch_size);
    EXPECT_EQ(a.scaled.mse, b.scaled.mse) << model_kind_name(kind);
  }
}
