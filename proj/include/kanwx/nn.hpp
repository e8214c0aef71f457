#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "kanwx/error.hpp"
#include "kanwx/rng.hpp"
#include "kanwx/tensor.hpp"

namespace kanwx {

// ---- activations ----

enum class Activation { silu, gelu, mish, sigmoid, tanh };

inline const char* activation_name(Activation a) {
  switch (a) {
    case Activation::silu: return "silu";
    case Activation::gelu: return "gelu";
    case Activation::mish: return "mish";
    case Activation::sigmoid: return "sigmoid";
    case Activation::tanh: return "tanh";
  }
  return "?";
}

inline Activation parse_activation(const std::string& s) {
  if (s == "silu") return Activation::silu;
  if (s == "gelu") return Activation::gelu;
  if (s == "mish") return Activation::mish;
  if (s == "sigmoid") return Activation::sigmoid;
  if (s == "tanh") return Activation::tanh;
  throw ConfigError("unknown activation '" + s + "'");
}

namespace detail {

inline double silu_s(double x) { return x * sigmoid_s(x); }

inline double silu_ds(double x) {
  const double s = sigmoid_s(x);
  return s * (1.0 + x * (1.0 - s));
}

// Exact erf form of GeLU: x * Phi(x) with Phi the standard normal CDF.
inline double gelu_s(double x) {
  return x * 0.5 * (1.0 + std::erf(x * 0.70710678118654752440));
}

inline double gelu_ds(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * 0.70710678118654752440));
  const double pdf = 0.39894228040143267794 * std::exp(-0.5 * x * x);
  return cdf + x * pdf;
}

inline double mish_s(double x) { return x * std::tanh(softplus_s(x)); }

inline double mish_ds(double x) {
  const double t = std::tanh(softplus_s(x));
  return t + x * (1.0 - t * t) * sigmoid_s(x);
}

inline double tanh_ds(double x) {
  const double t = std::tanh(x);
  return 1.0 - t * t;
}

inline double sigmoid_ds(double x) {
  const double s = sigmoid_s(x);
  return s * (1.0 - s);
}

}  // namespace detail

inline double activation_value(Activation a, double x) {
  switch (a) {
    case Activation::silu: return detail::silu_s(x);
    case Activation::gelu: return detail::gelu_s(x);
    case Activation::mish: return detail::mish_s(x);
    case Activation::sigmoid: return detail::sigmoid_s(x);
    case Activation::tanh: return std::tanh(x);
  }
  return 0.0;
}

inline double activation_deriv(Activation a, double x) {
  switch (a) {
    case Activation::silu: return detail::silu_ds(x);
    case Activation::gelu: return detail::gelu_ds(x);
    case Activation::mish: return detail::mish_ds(x);
    case Activation::sigmoid: return detail::sigmoid_ds(x);
    case Activation::tanh: return detail::tanh_ds(x);
  }
  return 0.0;
}

inline Tensor silu(const Tensor& x) {
  return detail::unary_op(x, detail::silu_s, detail::silu_ds);
}

inline Tensor gelu(const Tensor& x) {
  return detail::unary_op(x, detail::gelu_s, detail::gelu_ds);
}

inline Tensor mish(const Tensor& x) {
  return detail::unary_op(x, detail::mish_s, detail::mish_ds);
}

inline Tensor activation(Activation a, const Tensor& x) {
  switch (a) {
    case Activation::silu: return silu(x);
    case Activation::gelu: return gelu(x);
    case Activation::mish: return mish(x);
    case Activation::sigmoid: return sigmoid(x);
    case Activation::tanh: return tanh(x);
  }
  throw ConfigError("activation: bad kind");
}

// ---- softmax ----

// Numerically stable softmax over a rank-1 tensor.
inline Tensor softmax(const Tensor& logits) {
  if (logits.rank() != 1 || logits.numel() == 0)
    throw DimensionError("softmax: expected nonempty rank-1 tensor, got " +
                         shape_str(logits.shape()));
  const std::size_t n = logits.numel();
  double mx = logits.data()[0];
  for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, logits.data()[i]);
  Tensor out = Tensor::zeros({n});
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    out.data()[i] = std::exp(logits.data()[i] - mx);
    total += out.data()[i];
  }
  for (std::size_t i = 0; i < n; ++i) out.data()[i] /= total;
  if (detail::grad_enabled({&logits})) {
    out.set_requires_grad(true);
    Tensor lc = logits, oc = out;
    Tape::active()->record([lc, oc]() mutable {
      if (!oc.has_grad() || !lc.requires_grad()) return;
      lc.ensure_grad();
      const double* y = oc.data();
      const double* dy = oc.grad();
      const std::size_t m = oc.numel();
      double dot = 0.0;
      for (std::size_t i = 0; i < m; ++i) dot += y[i] * dy[i];
      for (std::size_t i = 0; i < m; ++i)
        lc.grad()[i] += y[i] * (dy[i] - dot);
    });
  }
  return out;
}

// ---- dropout ----

// Inverted dropout: survivors are scaled by 1/(1-p) so the expectation is
// preserved; identity at inference.
inline Tensor dropout(const Tensor& x, double p, bool training, Rng& rng) {
  if (p < 0.0 || p >= 1.0)
    throw ContractError("dropout: rate " + std::to_string(p) +
                        " outside [0, 1)");
  if (!training || p == 0.0) return x;
  const double keep = 1.0 - p;
  const double inv_keep = 1.0 / keep;
  const std::size_t n = x.numel();
  auto mask = std::make_shared<std::vector<double>>(n);
  Tensor out = Tensor::zeros(x.shape());
  for (std::size_t i = 0; i < n; ++i) {
    const double m = rng.bernoulli(p) ? 0.0 : inv_keep;
    (*mask)[i] = m;
    out.data()[i] = x.data()[i] * m;
  }
  if (detail::grad_enabled({&x})) {
    out.set_requires_grad(true);
    Tensor xc = x, oc = out;
    Tape::active()->record([xc, oc, mask]() mutable {
      if (!oc.has_grad() || !xc.requires_grad()) return;
      xc.ensure_grad();
      const double* og = oc.grad();
      double* xg = xc.grad();
      for (std::size_t i = 0; i < oc.numel(); ++i) xg[i] += og[i] * (*mask)[i];
    });
  }
  return out;
}

// ---- parameter initialization ----

// Uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)], marked trainable.
inline Tensor init_params(std::vector<std::size_t> shape, std::size_t fan_in,
                          Rng& rng) {
  if (fan_in < 1) throw ContractError("init_params: fan_in must be >= 1");
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Tensor t = Tensor::zeros(std::move(shape));
  for (std::size_t i = 0; i < t.numel(); ++i)
    t.data()[i] = rng.uniform(-bound, bound);
  t.set_requires_grad(true);
  return t;
}

// ---- dense layer ----

struct NamedParam {
  std::string name;
  Tensor tensor;
};

class DenseLayer {
 public:
  DenseLayer() = default;

  DenseLayer(std::size_t in_dim, std::size_t out_dim, Rng& rng)
      : weight_(init_params({out_dim, in_dim}, in_dim, rng)),
        bias_(Tensor::zeros({out_dim})) {
    bias_.set_requires_grad(true);
  }

  Tensor forward(const Tensor& x) const {
    return add_rowvec(matmul_nt(x, weight_), bias_);
  }

  Tensor weight() const { return weight_; }
  Tensor bias() const { return bias_; }

  void append_params(const std::string& prefix,
                     std::vector<NamedParam>& out) const {
    out.push_back({prefix + ".weight", weight_});
    out.push_back({prefix + ".bias", bias_});
  }

 private:
  Tensor weight_;
  Tensor bias_;
};

// ---- Adam ----

// Adam with bias correction. step() consumes the accumulated gradients and
// zeroes them afterwards.
class Adam {
 public:
  explicit Adam(std::vector<NamedParam> params, double lr = 1e-3,
                double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    slots_.reserve(params.size());
    for (NamedParam& p : params) {
      Slot s;
      s.param = std::move(p);
      s.m.assign(s.param.tensor.numel(), 0.0);
      s.v.assign(s.param.tensor.numel(), 0.0);
      slots_.push_back(std::move(s));
    }
  }

  void step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (Slot& s : slots_) {
      if (!s.param.tensor.has_grad())
        throw ContractError("adam_step: parameter '" + s.param.name +
                            "' has no gradient");
      double* w = s.param.tensor.data();
      double* g = s.param.tensor.grad();
      const std::size_t n = s.param.tensor.numel();
      for (std::size_t i = 0; i < n; ++i) {
        s.m[i] = beta1_ * s.m[i] + (1.0 - beta1_) * g[i];
        s.v[i] = beta2_ * s.v[i] + (1.0 - beta2_) * g[i] * g[i];
        const double mhat = s.m[i] / bc1;
        const double vhat = s.v[i] / bc2;
        w[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
      }
      s.param.tensor.zero_grad();
    }
  }

  long step_count() const { return t_; }
  double lr() const { return lr_; }

 private:
  struct Slot {
    NamedParam param;
    std::vector<double> m, v;
  };

  std::vector<Slot> slots_;
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
};

}  // namespace kanwx
