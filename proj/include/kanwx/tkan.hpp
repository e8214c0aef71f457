#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "kanwx/error.hpp"
#include "kanwx/nn.hpp"
#include "kanwx/recurrent.hpp"
#include "kanwx/rng.hpp"
#include "kanwx/spline.hpp"
#include "kanwx/tensor.hpp"

namespace kanwx {

// One KAN sublayer with its own short-term recurrence:
//   s_t   = W_x x_t + W_h state_{t-1}
//   o_t   = phi(s_t)
//   state_t = W_hh state_{t-1} + W_hz o_t
struct TkanSubLayer {
  Tensor w_x;    // [sub_hidden x input_dim]
  Tensor w_h;    // [sub_hidden x sub_hidden]
  KanLayer phi;  // sub_hidden -> sub_hidden
  Tensor w_hh;   // [sub_hidden x sub_hidden]
  Tensor w_hz;   // [sub_hidden x sub_hidden]

  TkanSubLayer() = default;

  TkanSubLayer(std::size_t input_dim, std::size_t sub_hidden, SplineGrid grid,
               Activation base, Rng& rng, double spline_noise)
      : w_x(init_params({sub_hidden, input_dim}, input_dim, rng)),
        w_h(init_params({sub_hidden, sub_hidden}, sub_hidden, rng)),
        phi(sub_hidden, sub_hidden, grid, base, rng, spline_noise),
        w_hh(init_params({sub_hidden, sub_hidden}, sub_hidden, rng)),
        w_hz(init_params({sub_hidden, sub_hidden}, sub_hidden, rng)) {}

  void append_params(const std::string& prefix,
                     std::vector<NamedParam>& out) const {
    out.push_back({prefix + ".w_x", w_x});
    out.push_back({prefix + ".w_h", w_h});
    phi.append_params(prefix + ".phi", out);
    out.push_back({prefix + ".w_hh", w_hh});
    out.push_back({prefix + ".w_hz", w_hz});
  }
};

// Temporal KAN cell: KAN sublayers feeding LSTM-style long-term gating.
// The forget/input/candidate gates read (x_t, h_{t-1}); the output gate reads
// the concatenation of the sublayer KAN outputs.
class TkanCell {
 public:
  struct State {
    Tensor h;                 // [B x hidden]
    Tensor c;                 // [B x hidden]
    std::vector<Tensor> sub;  // L entries of [B x sub_hidden]
  };

  TkanCell() = default;

  TkanCell(std::size_t input_dim, std::size_t hidden, std::size_t sub_hidden,
           std::size_t sub_layers, SplineGrid grid, Activation base, Rng& rng,
           double spline_noise = 0.1)
      : input_dim_(input_dim), hidden_(hidden), sub_hidden_(sub_hidden) {
    if (sub_layers < 1)
      throw ContractError("TkanCell: need at least one sublayer");
    subs_.reserve(sub_layers);
    for (std::size_t l = 0; l < sub_layers; ++l)
      subs_.emplace_back(input_dim, sub_hidden, grid, base, rng, spline_noise);
    auto weight = [&](std::size_t rows, std::size_t cols) {
      return init_params({rows, cols}, cols, rng);
    };
    auto bias = [&] {
      Tensor t = Tensor::zeros({hidden});
      t.set_requires_grad(true);
      return t;
    };
    w_f = weight(hidden, input_dim); u_f = weight(hidden, hidden); b_f = bias();
    w_i = weight(hidden, input_dim); u_i = weight(hidden, hidden); b_i = bias();
    w_c = weight(hidden, input_dim); u_c = weight(hidden, hidden); b_c = bias();
    w_o = weight(hidden, sub_layers * sub_hidden);
    b_o = bias();
  }

  std::size_t input_dim() const { return input_dim_; }
  std::size_t hidden() const { return hidden_; }
  std::size_t sub_hidden() const { return sub_hidden_; }
  std::size_t sub_layers() const { return subs_.size(); }
  std::size_t concat_width() const { return subs_.size() * sub_hidden_; }
  std::vector<TkanSubLayer>& subs() { return subs_; }
  const std::vector<TkanSubLayer>& subs() const { return subs_; }

  State zero_state(std::size_t batch) const {
    State s;
    s.h = Tensor::zeros({batch, hidden_});
    s.c = Tensor::zeros({batch, hidden_});
    s.sub.reserve(subs_.size());
    for (std::size_t l = 0; l < subs_.size(); ++l)
      s.sub.push_back(Tensor::zeros({batch, sub_hidden_}));
    return s;
  }

  // One step: x [B x d] with the previous state -> (h_t, new state).
  std::pair<Tensor, State> step(const Tensor& x, const State& prev) const {
    if (prev.sub.size() != subs_.size())
      throw ContractError("TkanCell::step: expected " +
                          std::to_string(subs_.size()) +
                          " sublayer states, got " +
                          std::to_string(prev.sub.size()));
    State next;
    next.sub.reserve(subs_.size());
    std::vector<Tensor> kan_outs;
    kan_outs.reserve(subs_.size());
    for (std::size_t l = 0; l < subs_.size(); ++l) {
      const TkanSubLayer& sl = subs_[l];
      Tensor s = add(matmul_nt(x, sl.w_x), matmul_nt(prev.sub[l], sl.w_h));
      Tensor o = sl.phi.forward(s);
      kan_outs.push_back(o);
      next.sub.push_back(
          add(matmul_nt(prev.sub[l], sl.w_hh), matmul_nt(o, sl.w_hz)));
    }

    Tensor f = sigmoid(detail::gate_preact(x, w_f, prev.h, u_f, b_f));
    Tensor i = sigmoid(detail::gate_preact(x, w_i, prev.h, u_i, b_i));
    Tensor cand = kanwx::tanh(detail::gate_preact(x, w_c, prev.h, u_c, b_c));
    next.c = add(mul(f, prev.c), mul(i, cand));

    Tensor r = concat(kan_outs, 1);
    Tensor o_gate = sigmoid(add_rowvec(matmul_nt(r, w_o), b_o));
    next.h = mul(o_gate, kanwx::tanh(next.c));
    return {next.h, next};
  }

  void append_params(const std::string& prefix,
                     std::vector<NamedParam>& out) const {
    for (std::size_t l = 0; l < subs_.size(); ++l)
      subs_[l].append_params(prefix + ".sub" + std::to_string(l), out);
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
    out.push_back({prefix + ".b_o", b_o});
  }

  Tensor w_f, u_f, b_f;
  Tensor w_i, u_i, b_i;
  Tensor w_c, u_c, b_c;
  Tensor w_o, b_o;  // output gate reads the sublayer concatenation

 private:
  std::size_t input_dim_ = 0;
  std::size_t hidden_ = 0;
  std::size_t sub_hidden_ = 0;
  std::vector<TkanSubLayer> subs_;
};

// Single TKAN cell unrolled over the window, scalar head on the final
// hidden state. No dropout: dropout is reserved for the plain RNN stack.
class TkanModel {
 public:
  TkanModel() = default;

  TkanModel(std::size_t input_dim, std::size_t hidden, std::size_t sub_hidden,
            std::size_t sub_layers, SplineGrid grid, Activation base, Rng& rng,
            double spline_noise = 0.1)
      : cell_(input_dim, hidden, sub_hidden, sub_layers, grid, base, rng,
              spline_noise),
        head_(hidden, 1, rng) {}

  const TkanCell& cell() const { return cell_; }
  TkanCell& cell() { return cell_; }

  Tensor forward(const std::vector<Tensor>& steps) const {
    if (steps.empty()) throw ContractError("TkanModel: empty window");
    TkanCell::State state = cell_.zero_state(steps.front().dim(0));
    Tensor h;
    for (const Tensor& x : steps) {
      auto [h_t, next] = cell_.step(x, state);
      h = h_t;
      state = std::move(next);
    }
    return head_.forward(h);
  }

  std::vector<NamedParam> parameters() const {
    std::vector<NamedParam> out;
    append_params("", out);
    return out;
  }

  void append_params(const std::string& prefix,
                     std::vector<NamedParam>& out) const {
    cell_.append_params(prefix + "cell", out);
    head_.append_params(prefix + "head", out);
  }

 private:
  TkanCell cell_;
  DenseLayer head_;
};

}  // namespace kanwx
