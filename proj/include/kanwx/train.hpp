#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "kanwx/data.hpp"
#include "kanwx/ensemble.hpp"
#include "kanwx/error.hpp"
#include "kanwx/metrics.hpp"
#include "kanwx/model.hpp"
#include "kanwx/nn.hpp"
#include "kanwx/rng.hpp"
#include "kanwx/tensor.hpp"

namespace kanwx {

struct TrainConfig {
  ModelKind kind = ModelKind::lstm;
  std::size_t epochs = 100;
  std::size_t batch_size = 64;
  double lr = 0.001;
  std::uint64_t seed = 0;
  std::size_t patience = 15;  // epochs without validation improvement
  std::string target = "T2M";
  std::size_t window = 14;
  std::size_t features = kFeatureCount;
  ModelHParams hp;

  void validate() const {
    if (batch_size < 1) throw ContractError("batch_size must be >= 1");
    if (epochs < 1) throw ContractError("epochs must be >= 1");
    if (patience > epochs)
      throw ContractError("patience " + std::to_string(patience) +
                          " exceeds epochs " + std::to_string(epochs));
  }
};

inline nlohmann::json hparams_to_json(const ModelHParams& hp) {
  return {{"hidden", hp.hidden},         {"depth", hp.depth},
          {"dropout", hp.dropout},       {"sub_hidden", hp.sub_hidden},
          {"kan_hidden", hp.kan_hidden}, {"grid", hp.grid},
          {"degree", hp.degree},         {"spline_noise", hp.spline_noise}};
}

inline ModelHParams hparams_from_json(const nlohmann::json& j) {
  ModelHParams hp;
  hp.hidden = j.value("hidden", hp.hidden);
  hp.depth = j.value("depth", hp.depth);
  hp.dropout = j.value("dropout", hp.dropout);
  hp.sub_hidden = j.value("sub_hidden", hp.sub_hidden);
  if (j.contains("kan_hidden"))
    hp.kan_hidden = j.at("kan_hidden").get<std::vector<std::size_t>>();
  hp.grid = j.value("grid", hp.grid);
  hp.degree = j.value("degree", hp.degree);
  hp.spline_noise = j.value("spline_noise", hp.spline_noise);
  return hp;
}

inline nlohmann::json train_config_to_json(const TrainConfig& cfg) {
  return {{"kind", model_kind_name(cfg.kind)},
          {"epochs", cfg.epochs},
          {"batch_size", cfg.batch_size},
          {"lr", cfg.lr},
          {"seed", cfg.seed},
          {"patience", cfg.patience},
          {"target", cfg.target},
          {"window", cfg.window},
          {"features", cfg.features},
          {"hp", hparams_to_json(cfg.hp)}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig cfg;
  cfg.kind = parse_model_kind(j.at("kind").get<std::string>());
  cfg.epochs = j.value("epochs", cfg.epochs);
  cfg.batch_size = j.value("batch_size", cfg.batch_size);
  cfg.lr = j.value("lr", cfg.lr);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.patience = j.value("patience", cfg.patience);
  cfg.target = j.value("target", cfg.target);
  cfg.window = j.value("window", cfg.window);
  cfg.features = j.value("features", cfg.features);
  if (j.contains("hp")) cfg.hp = hparams_from_json(j.at("hp"));
  return cfg;
}

// ---- checkpoint ----

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b, 4);
}

inline void put_u64(std::ostream& os, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b, 8);
}

inline void put_f64(std::ostream& os, double d) {
  put_u64(os, std::bit_cast<std::uint64_t>(d));
}

inline std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4))
    throw DataError("checkpoint: truncated file");
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

inline std::uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8))
    throw DataError("checkpoint: truncated file");
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

inline double get_f64(std::istream& is) {
  return std::bit_cast<double>(get_u64(is));
}

}  // namespace detail

inline constexpr char kCheckpointMagic[8] = {'K', 'W', 'X', 'C',
                                             'K', 'P', 'T', '1'};

// Versioned binary snapshot: config JSON + named tensors, little-endian
// 64-bit floats. Reloading reproduces the stored parameters bit for bit.
struct Checkpoint {
  std::string config_json;
  double best_val_mse = 0;
  std::uint32_t best_epoch = 0;
  std::vector<NamedParam> tensors;

  void save(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot write checkpoint '" + path + "'");
    os.write(kCheckpointMagic, 8);
    detail::put_u32(os, 1);
    detail::put_u64(os, config_json.size());
    os.write(config_json.data(),
             static_cast<std::streamsize>(config_json.size()));
    detail::put_f64(os, best_val_mse);
    detail::put_u32(os, best_epoch);
    detail::put_u32(os, static_cast<std::uint32_t>(tensors.size()));
    for (const NamedParam& p : tensors) {
      detail::put_u32(os, static_cast<std::uint32_t>(p.name.size()));
      os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
      detail::put_u32(os, static_cast<std::uint32_t>(p.tensor.rank()));
      for (std::size_t d : p.tensor.shape()) detail::put_u64(os, d);
      for (std::size_t i = 0; i < p.tensor.numel(); ++i)
        detail::put_f64(os, p.tensor.data()[i]);
    }
    if (!os) throw DataError("write failed for checkpoint '" + path + "'");
  }

  static Checkpoint load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open checkpoint '" + path + "'");
    char magic[8];
    if (!is.read(magic, 8) || std::memcmp(magic, kCheckpointMagic, 8) != 0)
      throw DataError("'" + path + "' is not a checkpoint file");
    const std::uint32_t version = detail::get_u32(is);
    if (version != 1)
      throw DataError("unsupported checkpoint version " +
                      std::to_string(version));
    Checkpoint ck;
    const std::uint64_t json_len = detail::get_u64(is);
    ck.config_json.resize(json_len);
    if (!is.read(ck.config_json.data(),
                 static_cast<std::streamsize>(json_len)))
      throw DataError("checkpoint: truncated config");
    ck.best_val_mse = detail::get_f64(is);
    ck.best_epoch = detail::get_u32(is);
    const std::uint32_t n_tensors = detail::get_u32(is);
    ck.tensors.reserve(n_tensors);
    for (std::uint32_t t = 0; t < n_tensors; ++t) {
      const std::uint32_t name_len = detail::get_u32(is);
      std::string name(name_len, '\0');
      if (!is.read(name.data(), name_len))
        throw DataError("checkpoint: truncated tensor name");
      const std::uint32_t rank = detail::get_u32(is);
      std::vector<std::size_t> shape(rank);
      for (std::uint32_t d = 0; d < rank; ++d)
        shape[d] = static_cast<std::size_t>(detail::get_u64(is));
      Tensor tensor = Tensor::zeros(shape);
      for (std::size_t i = 0; i < tensor.numel(); ++i)
        tensor.data()[i] = detail::get_f64(is);
      ck.tensors.push_back({std::move(name), std::move(tensor)});
    }
    return ck;
  }
};

// ---- training ----

struct EpochStats {
  double train_mse = 0;
  double val_mse = 0;
};

struct History {
  std::vector<EpochStats> epochs;
  std::size_t best_epoch = 0;
  double best_val = std::numeric_limits<double>::infinity();
};

struct TrainResult {
  Checkpoint checkpoint;
  History history;
};

// Scaled-space MSE over samples [start, start+count), batched sequentially.
// Shared by the training loop and evaluation so a reloaded checkpoint
// reproduces its stored validation MSE exactly.
inline double eval_split_mse(Model& model, const WindowedDataset& ds,
                             std::size_t start, std::size_t count,
                             std::size_t batch_size) {
  if (count == 0) throw ContractError("eval_split_mse: empty split");
  double sse = 0;
  for (std::size_t at = 0; at < count; at += batch_size) {
    const std::size_t b = std::min(batch_size, count - at);
    std::vector<std::size_t> idx(b);
    for (std::size_t i = 0; i < b; ++i) idx[i] = start + at + i;
    Batch batch =
        make_batch(ds, idx, model.needs_flat_input(), ds.sample_count());
    Tape::NoGrad no_grad;
    Tensor pred = model.forward(batch, false, nullptr);
    for (std::size_t i = 0; i < b; ++i) {
      const double e = pred.data()[i] - batch.targets.data()[i];
      sse += e * e;
    }
  }
  return sse * (1.0 / static_cast<double>(count));
}

namespace detail {

inline std::vector<std::vector<double>> snapshot_params(
    const std::vector<NamedParam>& params) {
  std::vector<std::vector<double>> out;
  out.reserve(params.size());
  for (const NamedParam& p : params) out.push_back(p.tensor.values_copy());
  return out;
}

inline void restore_params(const std::vector<NamedParam>& params,
                           const std::vector<std::vector<double>>& snap) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor t = params[i].tensor;
    t.assign_values(snap[i]);
  }
}

}  // namespace detail

// Batched MSE minimization with Adam, validation-based checkpointing and
// early stopping. The model comes out holding its best-validation weights.
inline TrainResult train_model_instance(Model& model, const TrainConfig& cfg,
                                        const WindowedDataset& ds, Rng& rng) {
  cfg.validate();
  const SplitCounts& split = ds.split();
  if (split.total() != ds.sample_count())
    throw ContractError("dataset has no splits assigned");
  if (ds.window_size() != cfg.window ||
      ds.feature_count() != cfg.features ||
      ds.target_feature() != feature_index(cfg.target))
    throw ContractError("train config does not match dataset layout");

  Adam opt(model.parameters(), cfg.lr);
  const bool want_flat = model.needs_flat_input();

  History history;
  std::vector<std::vector<double>> best = detail::snapshot_params(
      model.parameters());
  std::size_t bad_epochs = 0;

  std::vector<std::size_t> order(split.train);
  for (std::size_t i = 0; i < split.train; ++i) order[i] = i;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    double train_sse = 0;
    for (std::size_t at = 0; at < split.train; at += cfg.batch_size) {
      const std::size_t b = std::min(cfg.batch_size, split.train - at);
      std::vector<std::size_t> idx(order.begin() + at, order.begin() + at + b);
      // make_batch enforces the no-test-leakage bound.
      Batch batch = make_batch(ds, idx, want_flat, split.train);
      Tape tape;
      double batch_loss;
      {
        Tape::Scope scope(tape);
        Tensor pred = model.forward(batch, true, &rng);
        Tensor loss = mse(pred, batch.targets);
        batch_loss = loss.value();
        if (!std::isfinite(batch_loss))
          throw TrainingError("training diverged at epoch " +
                              std::to_string(epoch));
        tape.backward(loss);
      }
      opt.step();
      train_sse += batch_loss * static_cast<double>(b);
    }

    EpochStats stats;
    stats.train_mse = train_sse * (1.0 / static_cast<double>(split.train));
    stats.val_mse =
        eval_split_mse(model, ds, split.train, split.val, cfg.batch_size);
    history.epochs.push_back(stats);

    if (stats.val_mse < history.best_val) {
      history.best_val = stats.val_mse;
      history.best_epoch = epoch;
      best = detail::snapshot_params(model.parameters());
      bad_epochs = 0;
    } else if (++bad_epochs >= cfg.patience) {
      break;
    }
  }

  detail::restore_params(model.parameters(), best);

  TrainResult result;
  result.history = std::move(history);
  result.checkpoint.config_json = train_config_to_json(cfg).dump();
  result.checkpoint.best_val_mse = result.history.best_val;
  result.checkpoint.best_epoch =
      static_cast<std::uint32_t>(result.history.best_epoch);
  for (const NamedParam& p : model.checkpoint_tensors())
    result.checkpoint.tensors.push_back({p.name, p.tensor.clone()});
  return result;
}

inline std::pair<std::unique_ptr<Model>, TrainResult> train_model(
    const TrainConfig& cfg, const WindowedDataset& ds) {
  Rng rng(cfg.seed);
  std::unique_ptr<Model> model =
      make_model(cfg.kind, cfg.features, cfg.window, cfg.hp, rng);
  TrainResult result = train_model_instance(*model, cfg, ds, rng);
  return {std::move(model), std::move(result)};
}

// ---- checkpoint -> model ----

inline void assign_checkpoint_tensors(Model& model, const Checkpoint& ck) {
  std::vector<NamedParam> live = model.checkpoint_tensors();
  if (live.size() != ck.tensors.size())
    throw DataError("checkpoint has " + std::to_string(ck.tensors.size()) +
                    " tensors, model expects " + std::to_string(live.size()));
  for (const NamedParam& stored : ck.tensors) {
    bool found = false;
    for (NamedParam& p : live) {
      if (p.name != stored.name) continue;
      if (p.tensor.shape() != stored.tensor.shape())
        throw DataError("checkpoint tensor '" + stored.name +
                        "' has shape " + shape_str(stored.tensor.shape()) +
                        ", model expects " + shape_str(p.tensor.shape()));
      p.tensor.assign_values(stored.tensor.values_copy());
      found = true;
      break;
    }
    if (!found)
      throw DataError("checkpoint tensor '" + stored.name +
                      "' has no counterpart in the model");
  }
}

inline std::unique_ptr<Model> model_from_checkpoint(const Checkpoint& ck) {
  const nlohmann::json j = nlohmann::json::parse(ck.config_json);
  const ModelKind kind = parse_model_kind(j.at("kind").get<std::string>());
  std::unique_ptr<Model> model;
  if (kind == ModelKind::ensemble) {
    if (!j.contains("bases") || j.at("bases").size() != kEnsembleSize)
      throw DataError("ensemble checkpoint must carry four base configs");
    std::vector<std::unique_ptr<Model>> bases;
    for (const nlohmann::json& bj : j.at("bases")) {
      const TrainConfig bc = train_config_from_json(bj);
      Rng rng(bc.seed);
      bases.push_back(make_model(bc.kind, bc.features, bc.window, bc.hp, rng));
    }
    model = std::make_unique<EnsembleModel>(std::move(bases));
  } else {
    const TrainConfig cfg = train_config_from_json(j);
    Rng rng(cfg.seed);
    model = make_model(cfg.kind, cfg.features, cfg.window, cfg.hp, rng);
  }
  assign_checkpoint_tensors(*model, ck);
  return model;
}

// ---- evaluation ----

enum class SplitPart { train, val, test };

inline std::pair<std::size_t, std::size_t> split_range(const SplitCounts& s,
                                                       SplitPart part) {
  switch (part) {
    case SplitPart::train: return {0, s.train};
    case SplitPart::val: return {s.train, s.val};
    case SplitPart::test: return {s.train + s.val, s.test};
  }
  throw ContractError("bad split part");
}

struct SeriesPoint {
  std::string date;
  double actual = 0;
  double predicted = 0;
};

// Metrics in original physical units and in scaled space, plus the per-day
// prediction series in original units.
struct EvalResult {
  MetricsReport original;
  MetricsReport scaled;
  std::vector<SeriesPoint> series;
};

inline EvalResult evaluate_model(Model& model, const WindowedDataset& ds,
                                 SplitPart part, std::size_t batch_size) {
  const auto [start, count] = split_range(ds.split(), part);
  if (count == 0) throw ContractError("evaluate: empty split");
  const std::size_t target = ds.target_feature();

  std::vector<double> yt_scaled, yp_scaled, yt_orig, yp_orig;
  yt_scaled.reserve(count);
  yp_scaled.reserve(count);
  yt_orig.reserve(count);
  yp_orig.reserve(count);
  EvalResult result;
  result.series.reserve(count);

  for (std::size_t at = 0; at < count; at += batch_size) {
    const std::size_t b = std::min(batch_size, count - at);
    std::vector<std::size_t> idx(b);
    for (std::size_t i = 0; i < b; ++i) idx[i] = start + at + i;
    Batch batch =
        make_batch(ds, idx, model.needs_flat_input(), ds.sample_count());
    Tape::NoGrad no_grad;
    Tensor pred = model.forward(batch, false, nullptr);
    for (std::size_t i = 0; i < b; ++i) {
      const std::size_t j = idx[i];
      const double ps = pred.data()[i];
      const double po = ds.scaler().inverse(target, ps);
      yt_scaled.push_back(ds.target_scaled(j));
      yp_scaled.push_back(ps);
      yt_orig.push_back(ds.target_raw(j));
      yp_orig.push_back(po);
      result.series.push_back({ds.target_date(j), ds.target_raw(j), po});
    }
  }

  result.original = compute_metrics(yt_orig, yp_orig);
  result.scaled = compute_metrics(yt_scaled, yp_scaled);
  result.original.variable = kFeatureNames[target];
  result.scaled.variable = kFeatureNames[target];
  return result;
}

inline EvalResult evaluate_checkpoint(const Checkpoint& ck,
                                      const WindowedDataset& ds,
                                      SplitPart part) {
  const nlohmann::json j = nlohmann::json::parse(ck.config_json);
  const TrainConfig cfg = train_config_from_json(j);
  if (cfg.window != ds.window_size() || cfg.features != ds.feature_count() ||
      feature_index(cfg.target) != ds.target_feature())
    throw ContractError(
        "checkpoint was trained on a different dataset layout");
  std::unique_ptr<Model> model = model_from_checkpoint(ck);
  EvalResult r = evaluate_model(*model, ds, part, cfg.batch_size);
  r.original.model = model_kind_name(cfg.kind);
  r.scaled.model = model_kind_name(cfg.kind);
  return r;
}

}  // namespace kanwx
