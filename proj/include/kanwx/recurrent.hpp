#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "kanwx/error.hpp"
#include "kanwx/nn.hpp"
#include "kanwx/rng.hpp"
#include "kanwx/tensor.hpp"

namespace kanwx {

namespace detail {

// W x_t + U h_{t-1} + b for a batch: x [B x d], w [H x d], h [B x H],
// u [H x H], b [H].
inline Tensor gate_preact(const Tensor& x, const Tensor& w, const Tensor& h,
                          const Tensor& u, const Tensor& b) {
  return add_rowvec(add(matmul_nt(x, w), matmul_nt(h, u)), b);
}

}  // namespace detail

struct LstmCell {
  Tensor w_f, u_f, b_f;
  Tensor w_i, u_i, b_i;
  Tensor w_c, u_c, b_c;
  Tensor w_o, u_o, b_o;
  std::size_t input_dim = 0;
  std::size_t hidden = 0;

  LstmCell() = default;

  LstmCell(std::size_t d, std::size_t h, Rng& rng) : input_dim(d), hidden(h) {
    auto weight = [&](std::size_t rows, std::size_t cols) {
      return init_params({rows, cols}, cols, rng);
    };
    auto bias = [&] {
      Tensor t = Tensor::zeros({h});
      t.set_requires_grad(true);
      return t;
    };
    w_f = weight(h, d); u_f = weight(h, h); b_f = bias();
    w_i = weight(h, d); u_i = weight(h, h); b_i = bias();
    w_c = weight(h, d); u_c = weight(h, h); b_c = bias();
    w_o = weight(h, d); u_o = weight(h, h); b_o = bias();
  }

  // One step: x [B x d], h/c [B x H] -> (h', c').
  std::pair<Tensor, Tensor> step(const Tensor& x, const Tensor& h,
                                 const Tensor& c) const {
    Tensor f = sigmoid(detail::gate_preact(x, w_f, h, u_f, b_f));
    Tensor i = sigmoid(detail::gate_preact(x, w_i, h, u_i, b_i));
    Tensor cand = kanwx::tanh(detail::gate_preact(x, w_c, h, u_c, b_c));
    Tensor o = sigmoid(detail::gate_preact(x, w_o, h, u_o, b_o));
    Tensor c_next = add(mul(f, c), mul(i, cand));
    Tensor h_next = mul(o, kanwx::tanh(c_next));
    return {h_next, c_next};
  }

  void append_params(const std::string& prefix,
                     std::vector<NamedParam>& out) const {
    out.push_back({prefix + ".w_f", w_f});
    out.push_back({prefix + ".u_f", u_f});
    out.push_back({prefix + ".b_f", b_f});
    out.push_back({prefix + ".w_i", w_i});
    out.push_back({prefix + ".u_i", u_i});
    out.push_back({prefix + ".b_i", b_i});
    out.push_back({prefix + ".w_c", w_c});
    out.push_back({prefix + ".u_c", u_c});
    out.push_back({prefix + ".b_c", b_c});
    out.push_back({prefix + ".w_o", w_o});
    out.push_back({prefix + ".u_o", u_o});
    out.push_back({prefix + ".b_o", b_o});
  }
};

struct GruCell {
  Tensor w_z, u_z, b_z;
  Tensor w_r, u_r, b_r;
  Tensor w_h, u_h, b_h;
  std::size_t input_dim = 0;
  std::size_t hidden = 0;

  GruCell() = default;

  GruCell(std::size_t d, std::size_t h, Rng& rng) : input_dim(d), hidden(h) {
    auto weight = [&](std::size_t rows, std::size_t cols) {
      return init_params({rows, cols}, cols, rng);
    };
    auto bias = [&] {
      Tensor t = Tensor::zeros({h});
      t.set_requires_grad(true);
      return t;
    };
    w_z = weight(h, d); u_z = weight(h, h); b_z = bias();
    w_r = weight(h, d); u_r = weight(h, h); b_r = bias();
    w_h = weight(h, d); u_h = weight(h, h); b_h = bias();
  }

  // One step: h' = (1 - z) . h + z . tanh(W x + U (r . h) + b).
  Tensor step(const Tensor& x, const Tensor& h) const {
    Tensor z = sigmoid(detail::gate_preact(x, w_z, h, u_z, b_z));
    Tensor r = sigmoid(detail::gate_preact(x, w_r, h, u_r, b_r));
    Tensor cand = kanwx::tanh(
        add_rowvec(add(matmul_nt(x, w_h), matmul_nt(mul(r, h), u_h)), b_h));
    Tensor ones = Tensor::full(z.shape(), 1.0);
    return add(mul(sub(ones, z), h), mul(z, cand));
  }

  void append_params(const std::string& prefix,
                     std::vector<NamedParam>& out) const {
    out.push_back({prefix + ".w_z", w_z});
    out.push_back({prefix + ".u_z", u_z});
    out.push_back({prefix + ".b_z", b_z});
    out.push_back({prefix + ".w_r", w_r});
    out.push_back({prefix + ".u_r", u_r});
    out.push_back({prefix + ".b_r", b_r});
    out.push_back({prefix + ".w_h", w_h});
    out.push_back({prefix + ".u_h", u_h});
    out.push_back({prefix + ".b_h", b_h});
  }
};

// Unrolls a cell over the window from zero initial state. Outputs are
// indexed by input time position; with reverse=true the cell consumes the
// window back-to-front, so outputs[0] is that direction's final state.
inline std::vector<Tensor> lstm_sequence(const LstmCell& cell,
                                         const std::vector<Tensor>& steps,
                                         bool reverse) {
  if (steps.empty()) throw ContractError("lstm_sequence: empty window");
  const std::size_t batch = steps.front().dim(0);
  Tensor h = Tensor::zeros({batch, cell.hidden});
  Tensor c = Tensor::zeros({batch, cell.hidden});
  std::vector<Tensor> out(steps.size());
  for (std::size_t n = 0; n < steps.size(); ++n) {
    const std::size_t t = reverse ? steps.size() - 1 - n : n;
    auto [h2, c2] = cell.step(steps[t], h, c);
    h = h2;
    c = c2;
    out[t] = h;
  }
  return out;
}

inline std::vector<Tensor> gru_sequence(const GruCell& cell,
                                        const std::vector<Tensor>& steps,
                                        bool reverse) {
  if (steps.empty()) throw ContractError("gru_sequence: empty window");
  const std::size_t batch = steps.front().dim(0);
  Tensor h = Tensor::zeros({batch, cell.hidden});
  std::vector<Tensor> out(steps.size());
  for (std::size_t n = 0; n < steps.size(); ++n) {
    const std::size_t t = reverse ? steps.size() - 1 - n : n;
    h = cell.step(steps[t], h);
    out[t] = h;
  }
  return out;
}

enum class CellKind { lstm, gru };

// Stacked (optionally bidirectional) recurrent network with a scalar head on
// the final hidden state. Dropout applies to the hidden sequence between
// stacked layers and to the head input, during training only.
class SequenceModel {
 public:
  SequenceModel() = default;

  SequenceModel(CellKind kind, bool bidirectional, std::size_t input_dim,
                std::size_t hidden, std::size_t depth, double dropout_p,
                Rng& rng)
      : kind_(kind),
        bidirectional_(bidirectional),
        hidden_(hidden),
        dropout_p_(dropout_p) {
    if (depth < 1) throw ContractError("SequenceModel: depth must be >= 1");
    const std::size_t dir_width = bidirectional ? 2 * hidden : hidden;
    std::size_t d = input_dim;
    for (std::size_t l = 0; l < depth; ++l) {
      Layer layer;
      if (kind == CellKind::lstm) {
        layer.lstm_f = LstmCell(d, hidden, rng);
        if (bidirectional) layer.lstm_b = LstmCell(d, hidden, rng);
      } else {
        layer.gru_f = GruCell(d, hidden, rng);
        if (bidirectional) layer.gru_b = GruCell(d, hidden, rng);
      }
      layers_.push_back(std::move(layer));
      d = dir_width;
    }
    head_ = DenseLayer(dir_width, 1, rng);
  }

  CellKind kind() const { return kind_; }
  bool bidirectional() const { return bidirectional_; }
  std::size_t hidden() const { return hidden_; }
  std::size_t depth() const { return layers_.size(); }

  // steps: window as per-time [B x d] matrices -> [B x 1] predictions.
  Tensor forward(const std::vector<Tensor>& steps, bool training,
                 Rng* dropout_rng) const {
    if (steps.empty()) throw ContractError("SequenceModel: empty window");
    std::vector<Tensor> seq = steps;
    Tensor final_state;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      std::vector<Tensor> fwd = run_direction(layers_[l], seq, false);
      std::vector<Tensor> bwd;
      if (bidirectional_) bwd = run_direction(layers_[l], seq, true);

      if (bidirectional_)
        final_state = concat({fwd.back(), bwd.front()}, 1);
      else
        final_state = fwd.back();

      if (l + 1 < layers_.size()) {
        std::vector<Tensor> next(seq.size());
        for (std::size_t t = 0; t < seq.size(); ++t) {
          Tensor o = bidirectional_ ? concat({fwd[t], bwd[t]}, 1) : fwd[t];
          next[t] = maybe_dropout(o, training, dropout_rng);
        }
        seq = std::move(next);
      }
    }
    return head_.forward(maybe_dropout(final_state, training, dropout_rng));
  }

  std::vector<NamedParam> parameters() const {
    std::vector<NamedParam> out;
    append_params("", out);
    return out;
  }

  void append_params(const std::string& prefix,
                     std::vector<NamedParam>& out) const {
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const std::string base = prefix + "l" + std::to_string(l);
      const Layer& layer = layers_[l];
      if (layer.lstm_f) layer.lstm_f->append_params(base + ".fwd", out);
      if (layer.lstm_b) layer.lstm_b->append_params(base + ".bwd", out);
      if (layer.gru_f) layer.gru_f->append_params(base + ".fwd", out);
      if (layer.gru_b) layer.gru_b->append_params(base + ".bwd", out);
    }
    head_.append_params(prefix + "head", out);
  }

 private:
  struct Layer {
    std::optional<LstmCell> lstm_f, lstm_b;
    std::optional<GruCell> gru_f, gru_b;
  };

  std::vector<Tensor> run_direction(const Layer& layer,
                                    const std::vector<Tensor>& seq,
                                    bool reverse) const {
    if (kind_ == CellKind::lstm)
      return lstm_sequence(reverse ? *layer.lstm_b : *layer.lstm_f, seq,
                           reverse);
    return gru_sequence(reverse ? *layer.gru_b : *layer.gru_f, seq, reverse);
  }

  Tensor maybe_dropout(const Tensor& x, bool training, Rng* rng) const {
    if (!training || dropout_p_ == 0.0) return x;
    if (!rng)
      throw ContractError("SequenceModel: training forward needs an rng");
    return dropout(x, dropout_p_, true, *rng);
  }

  CellKind kind_ = CellKind::lstm;
  bool bidirectional_ = false;
  std::size_t hidden_ = 0;
  double dropout_p_ = 0.0;
  std::vector<Layer> layers_;
  DenseLayer head_;
};

}  // namespace kanwx
