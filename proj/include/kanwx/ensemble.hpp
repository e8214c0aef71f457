#pragma once

#include <cmath>
#include <limits>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "kanwx/error.hpp"
#include "kanwx/model.hpp"
#include "kanwx/nn.hpp"
#include "kanwx/tensor.hpp"

namespace kanwx {

inline constexpr std::size_t kEnsembleSize = 4;

// Softmax-weighted combination of four trained recurrent forecasters. The
// bases are frozen: only the coefficient logits train, and base predictions
// are always computed detached from any tape.
class EnsembleModel : public Model {
 public:
  explicit EnsembleModel(std::vector<std::unique_ptr<Model>> bases)
      : bases_(std::move(bases)) {
    if (bases_.size() != kEnsembleSize)
      throw ContractError("EnsembleModel: expected " +
                          std::to_string(kEnsembleSize) + " base models, got " +
                          std::to_string(bases_.size()));
    for (const auto& b : bases_)
      if (!b) throw ContractError("EnsembleModel: missing base model");
    logits_ = Tensor::zeros({kEnsembleSize});
    logits_.set_requires_grad(true);
  }

  ModelKind kind() const override { return ModelKind::ensemble; }

  // Base predictions for a batch, detached: [B x 4].
  Tensor base_predictions(const Batch& batch) {
    Tape::NoGrad no_grad;
    std::vector<Tensor> preds;
    preds.reserve(bases_.size());
    for (auto& b : bases_) preds.push_back(b->forward(batch, false, nullptr));
    return concat(preds, 1);
  }

  // Weighted sum of detached base predictions; differentiable in the logits.
  Tensor forward(const Batch& batch, bool, Rng*) override {
    return combine(base_predictions(batch));
  }

  // P [B x 4] -> [B x 1] through the softmax coefficients.
  Tensor combine(const Tensor& base_preds) {
    Tensor w = softmax(logits_);
    return matmul(base_preds, reshape(w, {kEnsembleSize, 1}));
  }

  std::vector<NamedParam> parameters() const override {
    return {{"logits", logits_}};
  }

  std::vector<NamedParam> checkpoint_tensors() const override {
    std::vector<NamedParam> out = {{"logits", logits_}};
    for (std::size_t i = 0; i < bases_.size(); ++i)
      for (const NamedParam& p : bases_[i]->checkpoint_tensors())
        out.push_back({"base" + std::to_string(i) + "." + p.name, p.tensor});
    return out;
  }

  Tensor logits() const { return logits_; }

  // Current softmax coefficients, detached.
  std::vector<double> coefficients() const {
    Tape::NoGrad no_grad;
    return softmax(logits_).values_copy();
  }

  std::size_t base_count() const { return bases_.size(); }
  Model& base(std::size_t i) { return *bases_[i]; }
  const Model& base(std::size_t i) const { return *bases_[i]; }

 private:
  std::vector<std::unique_ptr<Model>> bases_;
  Tensor logits_;
};

struct EnsembleHistory {
  std::vector<double> train_mse;
  std::vector<double> val_mse;
  std::size_t best_epoch = 0;
  double best_val = std::numeric_limits<double>::infinity();
};

// Trains the coefficient logits against precomputed base predictions
// (scaled space) with Adam on MSE; the best-validation logits are retained.
// P_* are [n x 4], y_* are [n x 1].
inline EnsembleHistory ensemble_fit(EnsembleModel& model, const Tensor& p_train,
                                    const Tensor& y_train, const Tensor& p_val,
                                    const Tensor& y_val, std::size_t epochs,
                                    std::size_t batch_size, double lr,
                                    std::size_t patience, Rng& rng) {
  if (p_train.rank() != 2 || p_train.dim(1) != kEnsembleSize)
    throw ContractError("ensemble_fit: base prediction matrix must be n x 4");
  const std::size_t n = p_train.dim(0);
  Adam opt(model.parameters(), lr);
  EnsembleHistory history;

  auto val_mse = [&] {
    Tape::NoGrad no_grad;
    return mse(model.combine(p_val), y_val).value();
  };

  std::vector<double> best_logits = model.logits().values_copy();
  std::size_t bad_epochs = 0;
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;

  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    rng.shuffle(order);
    double train_sse = 0;
    for (std::size_t at = 0; at < n; at += batch_size) {
      const std::size_t b = std::min(batch_size, n - at);
      Tensor pb = Tensor::zeros({b, kEnsembleSize});
      Tensor yb = Tensor::zeros({b, 1});
      for (std::size_t i = 0; i < b; ++i) {
        const std::size_t src = order[at + i];
        for (std::size_t j = 0; j < kEnsembleSize; ++j)
          pb.at(i, j) = p_train.at(src, j);
        yb.data()[i] = y_train.data()[src];
      }
      Tape tape;
      double batch_loss;
      {
        Tape::Scope scope(tape);
        Tensor loss = mse(model.combine(pb), yb);
        batch_loss = loss.value();
        tape.backward(loss);
      }
      opt.step();
      train_sse += batch_loss * static_cast<double>(b);
    }
    history.train_mse.push_back(train_sse / static_cast<double>(n));
    const double vm = val_mse();
    history.val_mse.push_back(vm);
    if (vm < history.best_val) {
      history.best_val = vm;
      history.best_epoch = epoch;
      best_logits = model.logits().values_copy();
      bad_epochs = 0;
    } else if (++bad_epochs >= patience) {
      break;
    }
  }
  model.logits().assign_values(best_logits);
  return history;
}

}  // namespace kanwx
