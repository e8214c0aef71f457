#pragma once

#include <memory>
#include <string>
#include <vector>

#include "kanwx/data.hpp"
#include "kanwx/error.hpp"
#include "kanwx/nn.hpp"
#include "kanwx/recurrent.hpp"
#include "kanwx/rng.hpp"
#include "kanwx/spline.hpp"
#include "kanwx/tensor.hpp"
#include "kanwx/tkan.hpp"

namespace kanwx {

enum class ModelKind {
  lstm,
  gru,
  bilstm,
  bigru,
  ensemble,
  kan,
  tkan,
  tkan5,
  tkan_gelu,
  tkan_mish,
};

inline const char* model_kind_name(ModelKind k) {
  switch (k) {
    case ModelKind::lstm: return "LSTM";
    case ModelKind::gru: return "GRU";
    case ModelKind::bilstm: return "BiLSTM";
    case ModelKind::bigru: return "BiGRU";
    case ModelKind::ensemble: return "Ensemble";
    case ModelKind::kan: return "KAN";
    case ModelKind::tkan: return "TKAN";
    case ModelKind::tkan5: return "TKAN5";
    case ModelKind::tkan_gelu: return "TKAN-GELU";
    case ModelKind::tkan_mish: return "TKAN-MISH";
  }
  return "?";
}

inline ModelKind parse_model_kind(const std::string& s) {
  for (ModelKind k :
       {ModelKind::lstm, ModelKind::gru, ModelKind::bilstm, ModelKind::bigru,
        ModelKind::ensemble, ModelKind::kan, ModelKind::tkan, ModelKind::tkan5,
        ModelKind::tkan_gelu, ModelKind::tkan_mish})
    if (s == model_kind_name(k)) return k;
  throw ConfigError("unknown model '" + s + "'");
}

inline bool is_spline_family(ModelKind k) {
  switch (k) {
    case ModelKind::kan:
    case ModelKind::tkan:
    case ModelKind::tkan5:
    case ModelKind::tkan_gelu:
    case ModelKind::tkan_mish:
      return true;
    default:
      return false;
  }
}

inline ScalingFamily scaling_family(ModelKind k) {
  return is_spline_family(k) ? ScalingFamily::spline : ScalingFamily::rnn;
}

struct ModelHParams {
  std::size_t hidden = 64;  // recurrent hidden size / TKAN cell size
  std::size_t depth = 1;    // stacked recurrent layers
  double dropout = 0.2;     // recurrent stack only
  std::size_t sub_hidden = 0;  // TKAN sublayer width; 0 means = hidden
  std::vector<std::size_t> kan_hidden = {64};
  std::size_t grid = 5;
  std::size_t degree = 3;
  double spline_noise = 0.1;
};

// One training batch. `steps` carries the window as per-time matrices for
// recurrent models; `flat` carries the flattened window for KAN.
struct Batch {
  std::vector<Tensor> steps;  // w tensors of [B x d]
  Tensor flat;                // [B x (w*d)]
  Tensor targets;             // [B x 1], scaled space
  std::vector<std::size_t> indices;
  std::size_t size = 0;
};

// Builds a batch from dataset samples. Every index must be below
// `allowed_end`; the training loop passes its split bound here, which is the
// leakage guard: a training batch can never touch validation or test
// targets.
inline Batch make_batch(const WindowedDataset& ds,
                        const std::vector<std::size_t>& indices,
                        bool want_flat, std::size_t allowed_end) {
  if (indices.empty()) throw ContractError("make_batch: empty index set");
  for (std::size_t idx : indices)
    if (idx >= allowed_end)
      throw ContractError("leakage guard: sample " + std::to_string(idx) +
                          " outside allowed range [0, " +
                          std::to_string(allowed_end) + ")");
  const std::size_t b = indices.size();
  const std::size_t w = ds.window_size();
  const std::size_t d = ds.feature_count();

  Batch batch;
  batch.indices = indices;
  batch.size = b;
  std::vector<double> window(w * d);
  if (want_flat) {
    batch.flat = Tensor::zeros({b, w * d});
    for (std::size_t i = 0; i < b; ++i) {
      ds.copy_window(indices[i], window.data());
      std::copy(window.begin(), window.end(), batch.flat.data() + i * w * d);
    }
  } else {
    batch.steps.resize(w);
    for (std::size_t t = 0; t < w; ++t) batch.steps[t] = Tensor::zeros({b, d});
    for (std::size_t i = 0; i < b; ++i) {
      ds.copy_window(indices[i], window.data());
      for (std::size_t t = 0; t < w; ++t)
        for (std::size_t f = 0; f < d; ++f)
          batch.steps[t].data()[i * d + f] = window[t * d + f];
    }
  }
  batch.targets = Tensor::zeros({b, 1});
  for (std::size_t i = 0; i < b; ++i)
    batch.targets.data()[i] = ds.target_scaled(indices[i]);
  return batch;
}

// A trainable forecaster: window in, scalar per sample out.
class Model {
 public:
  virtual ~Model() = default;
  virtual ModelKind kind() const = 0;
  virtual Tensor forward(const Batch& batch, bool training, Rng* rng) = 0;
  virtual std::vector<NamedParam> parameters() const = 0;
  // Tensors that a checkpoint must capture; defaults to the trainable set.
  virtual std::vector<NamedParam> checkpoint_tensors() const {
    return parameters();
  }
  virtual bool needs_flat_input() const { return false; }
};

class SequenceForecaster : public Model {
 public:
  SequenceForecaster(ModelKind kind, std::size_t input_dim,
                     const ModelHParams& hp, Rng& rng)
      : kind_(kind),
        model_(kind == ModelKind::lstm || kind == ModelKind::bilstm
                   ? CellKind::lstm
                   : CellKind::gru,
               kind == ModelKind::bilstm || kind == ModelKind::bigru,
               input_dim, hp.hidden, hp.depth, hp.dropout, rng) {}

  ModelKind kind() const override { return kind_; }

  Tensor forward(const Batch& batch, bool training, Rng* rng) override {
    return model_.forward(batch.steps, training, rng);
  }

  std::vector<NamedParam> parameters() const override {
    return model_.parameters();
  }

  const SequenceModel& sequence_model() const { return model_; }

 private:
  ModelKind kind_;
  SequenceModel model_;
};

// KAN on the flattened window: the network sees all w*d scaled inputs at
// once and maps them straight to the one-day-ahead target.
class KanForecaster : public Model {
 public:
  KanForecaster(std::size_t input_dim, std::size_t window,
                const ModelHParams& hp, Rng& rng) {
    std::vector<std::size_t> widths;
    widths.push_back(window * input_dim);
    for (std::size_t h : hp.kan_hidden) widths.push_back(h);
    widths.push_back(1);
    SplineGrid grid{0.0, 1.0, hp.grid, hp.degree};
    net_ = KanNetwork(widths, grid, Activation::silu, rng, hp.spline_noise);
  }

  ModelKind kind() const override { return ModelKind::kan; }

  Tensor forward(const Batch& batch, bool, Rng*) override {
    return net_.forward(batch.flat);
  }

  std::vector<NamedParam> parameters() const override {
    std::vector<NamedParam> out;
    net_.append_params("kan", out);
    return out;
  }

  bool needs_flat_input() const override { return true; }

  const KanNetwork& network() const { return net_; }

 private:
  KanNetwork net_;
};

class TkanForecaster : public Model {
 public:
  TkanForecaster(ModelKind kind, std::size_t input_dim,
                 const ModelHParams& hp, Rng& rng)
      : kind_(kind) {
    Activation base = Activation::silu;
    if (kind == ModelKind::tkan_gelu) base = Activation::gelu;
    if (kind == ModelKind::tkan_mish) base = Activation::mish;
    const std::size_t sublayers = kind == ModelKind::tkan5 ? 5 : 1;
    const std::size_t sub_hidden =
        hp.sub_hidden == 0 ? hp.hidden : hp.sub_hidden;
    SplineGrid grid{0.0, 1.0, hp.grid, hp.degree};
    model_ = TkanModel(input_dim, hp.hidden, sub_hidden, sublayers, grid, base,
                       rng, hp.spline_noise);
  }

  ModelKind kind() const override { return kind_; }

  Tensor forward(const Batch& batch, bool, Rng*) override {
    return model_.forward(batch.steps);
  }

  std::vector<NamedParam> parameters() const override {
    return model_.parameters();
  }

  const TkanModel& tkan_model() const { return model_; }

 private:
  ModelKind kind_;
  TkanModel model_;
};

// Builds any single-network model. The ensemble is assembled from trained
// bases elsewhere.
inline std::unique_ptr<Model> make_model(ModelKind kind, std::size_t input_dim,
                                         std::size_t window,
                                         const ModelHParams& hp, Rng& rng) {
  switch (kind) {
    case ModelKind::lstm:
    case ModelKind::gru:
    case ModelKind::bilstm:
    case ModelKind::bigru:
      return std::make_unique<SequenceForecaster>(kind, input_dim, hp, rng);
    case ModelKind::kan:
      return std::make_unique<KanForecaster>(input_dim, window, hp, rng);
    case ModelKind::tkan:
    case ModelKind::tkan5:
    case ModelKind::tkan_gelu:
    case ModelKind::tkan_mish:
      return std::make_unique<TkanForecaster>(kind, input_dim, hp, rng);
    case ModelKind::ensemble:
      throw ConfigError(
          "Ensemble is assembled from its trained base models, not built "
          "directly");
  }
  throw ConfigError("make_model: bad kind");
}

}  // namespace kanwx
