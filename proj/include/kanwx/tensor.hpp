#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "kanwx/error.hpp"

namespace kanwx {

inline std::string shape_str(const std::vector<std::size_t>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  s += "]";
  return s;
}

// Dense 1-D/2-D array of doubles with an optional gradient buffer.
//
// A Tensor is a cheap handle onto shared storage: copies alias the same
// values, which is what lets optimizer updates be seen by the model and tape
// closures accumulate into parameter gradients. Gradient buffers are
// allocated lazily on first accumulation, so tensors never touched by a
// backward pass keep no gradient at all.
class Tensor {
 public:
  Tensor() : s_(std::make_shared<Storage>()) {}

  static Tensor zeros(std::vector<std::size_t> shape) {
    Tensor t;
    t.s_->shape = std::move(shape);
    t.s_->values.assign(numel_of(t.s_->shape), 0.0);
    return t;
  }

  static Tensor full(std::vector<std::size_t> shape, double value) {
    Tensor t = zeros(std::move(shape));
    for (double& v : t.s_->values) v = value;
    return t;
  }

  static Tensor scalar(double value) { return full({1}, value); }

  static Tensor from_vector(std::vector<double> v) {
    Tensor t;
    t.s_->shape = {v.size()};
    t.s_->values = std::move(v);
    return t;
  }

  static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    Tensor t;
    const std::size_t r = rows.size();
    const std::size_t c = r ? rows.begin()->size() : 0;
    t.s_->shape = {r, c};
    t.s_->values.reserve(r * c);
    for (const auto& row : rows) {
      if (row.size() != c)
        throw DimensionError("from_rows: ragged rows");
      for (double v : row) t.s_->values.push_back(v);
    }
    return t;
  }

  std::size_t rank() const { return s_->shape.size(); }
  const std::vector<std::size_t>& shape() const { return s_->shape; }
  std::size_t dim(std::size_t i) const { return s_->shape.at(i); }
  std::size_t numel() const { return s_->values.size(); }

  double* data() { return s_->values.data(); }
  const double* data() const { return s_->values.data(); }

  double& at(std::size_t i) { return s_->values[i]; }
  double at(std::size_t i) const { return s_->values[i]; }
  double& at(std::size_t i, std::size_t j) { return s_->values[i * dim(1) + j]; }
  double at(std::size_t i, std::size_t j) const { return s_->values[i * dim(1) + j]; }

  // Value of a one-element tensor.
  double value() const {
    if (numel() != 1)
      throw ContractError("Tensor::value: tensor has " +
                          std::to_string(numel()) + " elements, expected 1");
    return s_->values[0];
  }

  bool requires_grad() const { return s_->requires_grad; }
  void set_requires_grad(bool b) { s_->requires_grad = b; }

  bool has_grad() const { return !s_->grad.empty(); }

  void ensure_grad() {
    if (s_->grad.empty()) s_->grad.assign(s_->values.size(), 0.0);
  }

  void zero_grad() {
    for (double& g : s_->grad) g = 0.0;
  }

  // Drops the gradient buffer entirely.
  void clear_grad() { s_->grad.clear(); }

  double* grad() { return s_->grad.data(); }
  const double* grad() const { return s_->grad.data(); }
  double grad_at(std::size_t i) const { return s_->grad[i]; }
  double grad_at(std::size_t i, std::size_t j) const {
    return s_->grad[i * dim(1) + j];
  }

  std::vector<double> values_copy() const { return s_->values; }
  std::vector<double> grad_copy() const { return s_->grad; }
  void assign_values(const std::vector<double>& v) {
    if (v.size() != s_->values.size())
      throw DimensionError("assign_values: size mismatch");
    s_->values = v;
  }

  // Deep copy of values; no gradient, same requires_grad flag.
  Tensor clone() const {
    Tensor t;
    t.s_->shape = s_->shape;
    t.s_->values = s_->values;
    t.s_->requires_grad = s_->requires_grad;
    return t;
  }

  bool same_storage(const Tensor& other) const { return s_ == other.s_; }

 private:
  struct Storage {
    std::vector<std::size_t> shape{0};
    std::vector<double> values;
    std::vector<double> grad;
    bool requires_grad = false;
  };

  static std::size_t numel_of(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
  }

  std::shared_ptr<Storage> s_;
};

// Reverse-mode tape.
//
// Operations append backward closures while a Tape is active on the current
// thread; backward() replays them once in reverse order and then clears the
// list. One training run owns one tape; nothing here is shared across
// threads.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  class Scope {
   public:
    explicit Scope(Tape& t) : prev_(active_) { active_ = &t; }
    ~Scope() { active_ = prev_; }
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Tape* prev_;
  };

  // Suspends recording for its lifetime; values computed inside are
  // detached from any enclosing tape.
  class NoGrad {
   public:
    NoGrad() : prev_(active_) { active_ = nullptr; }
    ~NoGrad() { active_ = prev_; }
    NoGrad(const NoGrad&) = delete;
    NoGrad& operator=(const NoGrad&) = delete;

   private:
    Tape* prev_;
  };

  static Tape* active() { return active_; }

  void record(std::function<void()> fn) { nodes_.push_back(std::move(fn)); }

  std::size_t size() const { return nodes_.size(); }

  // Seeds d(loss)/d(loss) = 1 and replays the recorded closures in reverse
  // append order. The node list is cleared afterwards so each node runs
  // exactly once.
  void backward(Tensor loss) {
    if (loss.numel() != 1)
      throw ContractError("backward: loss must be scalar, got shape " +
                          shape_str(loss.shape()));
    loss.ensure_grad();
    loss.grad()[0] += 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
    nodes_.clear();
  }

  void reset() { nodes_.clear(); }

 private:
  std::vector<std::function<void()>> nodes_;
  inline static thread_local Tape* active_ = nullptr;
};

namespace detail {

inline bool grad_enabled(std::initializer_list<const Tensor*> inputs) {
  if (!Tape::active()) return false;
  for (const Tensor* t : inputs)
    if (t->requires_grad()) return true;
  return false;
}

inline void check_same_shape(const Tensor& a, const Tensor& b,
                             const char* op) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": shape mismatch " +
                         shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

// C (m x n) += op(A) * op(B), all row-major.
inline void gemm_acc(bool trans_a, bool trans_b, std::size_t m, std::size_t n,
                     std::size_t k, const double* a, const double* b,
                     double* c) {
  if (!trans_a && !trans_b) {
    for (std::size_t i = 0; i < m; ++i) {
      double* crow = c + i * n;
      const double* arow = a + i * k;
      for (std::size_t p = 0; p < k; ++p) {
        const double av = arow[p];
        if (av == 0.0) continue;
        const double* brow = b + p * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  } else if (!trans_a && trans_b) {
    for (std::size_t i = 0; i < m; ++i) {
      const double* arow = a + i * k;
      double* crow = c + i * n;
      for (std::size_t j = 0; j < n; ++j) {
        const double* brow = b + j * k;
        double acc = 0.0;
        for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
        crow[j] += acc;
      }
    }
  } else if (trans_a && !trans_b) {
    for (std::size_t p = 0; p < k; ++p) {
      const double* arow = a + p * m;
      const double* brow = b + p * n;
      for (std::size_t i = 0; i < m; ++i) {
        const double av = arow[i];
        if (av == 0.0) continue;
        double* crow = c + i * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  } else {
    for (std::size_t i = 0; i < m; ++i) {
      double* crow = c + i * n;
      for (std::size_t j = 0; j < n; ++j) {
        double acc = 0.0;
        for (std::size_t p = 0; p < k; ++p) acc += a[p * m + i] * b[j * k + p];
        crow[j] += acc;
      }
    }
  }
}

inline double sigmoid_s(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double softplus_s(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

// Elementwise unary with analytic derivative df evaluated at the input.
template <class F, class DF>
Tensor unary_op(const Tensor& x, F f, DF df) {
  Tensor out = Tensor::zeros(x.shape());
  const double* xv = x.data();
  double* ov = out.data();
  const std::size_t n = x.numel();
  for (std::size_t i = 0; i < n; ++i) ov[i] = f(xv[i]);
  if (grad_enabled({&x})) {
    out.set_requires_grad(true);
    Tensor xc = x, oc = out;
    Tape::active()->record([xc, oc, df]() mutable {
      if (!oc.has_grad() || !xc.requires_grad()) return;
      xc.ensure_grad();
      const double* og = oc.grad();
      const double* xv2 = xc.data();
      double* xg = xc.grad();
      const std::size_t m = xc.numel();
      for (std::size_t i = 0; i < m; ++i) xg[i] += og[i] * df(xv2[i]);
    });
  }
  return out;
}

}  // namespace detail

// ---- binary elementwise ops ----

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "add");
  Tensor out = Tensor::zeros(a.shape());
  const std::size_t n = a.numel();
  for (std::size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] + b.data()[i];
  if (detail::grad_enabled({&a, &b})) {
    out.set_requires_grad(true);
    Tensor ac = a, bc = b, oc = out;
    Tape::active()->record([ac, bc, oc]() mutable {
      if (!oc.has_grad()) return;
      const double* og = oc.grad();
      const std::size_t m = oc.numel();
      if (ac.requires_grad()) {
        ac.ensure_grad();
        for (std::size_t i = 0; i < m; ++i) ac.grad()[i] += og[i];
      }
      if (bc.requires_grad()) {
        bc.ensure_grad();
        for (std::size_t i = 0; i < m; ++i) bc.grad()[i] += og[i];
      }
    });
  }
  return out;
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "sub");
  Tensor out = Tensor::zeros(a.shape());
  const std::size_t n = a.numel();
  for (std::size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] - b.data()[i];
  if (detail::grad_enabled({&a, &b})) {
    out.set_requires_grad(true);
    Tensor ac = a, bc = b, oc = out;
    Tape::active()->record([ac, bc, oc]() mutable {
      if (!oc.has_grad()) return;
      const double* og = oc.grad();
      const std::size_t m = oc.numel();
      if (ac.requires_grad()) {
        ac.ensure_grad();
        for (std::size_t i = 0; i < m; ++i) ac.grad()[i] += og[i];
      }
      if (bc.requires_grad()) {
        bc.ensure_grad();
        for (std::size_t i = 0; i < m; ++i) bc.grad()[i] -= og[i];
      }
    });
  }
  return out;
}

// Hadamard product.
inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "mul");
  Tensor out = Tensor::zeros(a.shape());
  const std::size_t n = a.numel();
  for (std::size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] * b.data()[i];
  if (detail::grad_enabled({&a, &b})) {
    out.set_requires_grad(true);
    Tensor ac = a, bc = b, oc = out;
    Tape::active()->record([ac, bc, oc]() mutable {
      if (!oc.has_grad()) return;
      const double* og = oc.grad();
      const std::size_t m = oc.numel();
      if (ac.requires_grad()) {
        ac.ensure_grad();
        for (std::size_t i = 0; i < m; ++i)
          ac.grad()[i] += og[i] * bc.data()[i];
      }
      if (bc.requires_grad()) {
        bc.ensure_grad();
        for (std::size_t i = 0; i < m; ++i)
          bc.grad()[i] += og[i] * ac.data()[i];
      }
    });
  }
  return out;
}

inline Tensor scale(const Tensor& x, double c) {
  return detail::unary_op(
      x, [c](double v) { return c * v; }, [c](double) { return c; });
}

// ---- matrix ops ----

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) +
                         " and " + shape_str(b.shape()));
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor out = Tensor::zeros({m, n});
  detail::gemm_acc(false, false, m, n, k, a.data(), b.data(), out.data());
  if (detail::grad_enabled({&a, &b})) {
    out.set_requires_grad(true);
    Tensor ac = a, bc = b, oc = out;
    Tape::active()->record([ac, bc, oc, m, n, k]() mutable {
      if (!oc.has_grad()) return;
      if (ac.requires_grad()) {
        ac.ensure_grad();  // dA += dC * B^T
        detail::gemm_acc(false, true, m, k, n, oc.grad(), bc.data(), ac.grad());
      }
      if (bc.requires_grad()) {
        bc.ensure_grad();  // dB += A^T * dC
        detail::gemm_acc(true, false, k, n, m, ac.data(), oc.grad(), bc.grad());
      }
    });
  }
  return out;
}

// a [m x k] times b^T where b is [n x k]; the natural product against
// weight matrices stored as [out x in].
inline Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(1))
    throw DimensionError("matmul_nt: incompatible shapes " +
                         shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
  Tensor out = Tensor::zeros({m, n});
  detail::gemm_acc(false, true, m, n, k, a.data(), b.data(), out.data());
  if (detail::grad_enabled({&a, &b})) {
    out.set_requires_grad(true);
    Tensor ac = a, bc = b, oc = out;
    Tape::active()->record([ac, bc, oc, m, n, k]() mutable {
      if (!oc.has_grad()) return;
      if (ac.requires_grad()) {
        ac.ensure_grad();  // dA += dC * B
        detail::gemm_acc(false, false, m, k, n, oc.grad(), bc.data(),
                         ac.grad());
      }
      if (bc.requires_grad()) {
        bc.ensure_grad();  // dB += dC^T * A
        detail::gemm_acc(true, false, n, k, m, oc.grad(), ac.data(), bc.grad());
      }
    });
  }
  return out;
}

// Matrix [r x c] plus a length-c vector broadcast across rows. The only
// broadcast this library performs.
inline Tensor add_rowvec(const Tensor& m, const Tensor& v) {
  const std::size_t cols =
      v.rank() == 1 ? v.dim(0) : (v.dim(0) == 1 ? v.dim(1) : 0);
  if (m.rank() != 2 || cols == 0 || m.dim(1) != cols)
    throw DimensionError("add_rowvec: shape mismatch " + shape_str(m.shape()) +
                         " vs " + shape_str(v.shape()));
  const std::size_t r = m.dim(0), c = m.dim(1);
  Tensor out = Tensor::zeros({r, c});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j)
      out.data()[i * c + j] = m.data()[i * c + j] + v.data()[j];
  if (detail::grad_enabled({&m, &v})) {
    out.set_requires_grad(true);
    Tensor mc = m, vc = v, oc = out;
    Tape::active()->record([mc, vc, oc, r, c]() mutable {
      if (!oc.has_grad()) return;
      const double* og = oc.grad();
      if (mc.requires_grad()) {
        mc.ensure_grad();
        double* mg = mc.grad();
        for (std::size_t i = 0; i < r * c; ++i) mg[i] += og[i];
      }
      if (vc.requires_grad()) {
        vc.ensure_grad();
        double* vg = vc.grad();
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < c; ++j) vg[j] += og[i * c + j];
      }
    });
  }
  return out;
}

// ---- elementwise nonlinearities ----

inline Tensor tanh(const Tensor& x) {
  return detail::unary_op(
      x, [](double v) { return std::tanh(v); },
      [](double v) {
        const double t = std::tanh(v);
        return 1.0 - t * t;
      });
}

inline Tensor sigmoid(const Tensor& x) {
  return detail::unary_op(
      x, [](double v) { return detail::sigmoid_s(v); },
      [](double v) {
        const double s = detail::sigmoid_s(v);
        return s * (1.0 - s);
      });
}

inline Tensor exp(const Tensor& x) {
  return detail::unary_op(
      x, [](double v) { return std::exp(v); },
      [](double v) { return std::exp(v); });
}

inline Tensor log(const Tensor& x) {
  return detail::unary_op(
      x, [](double v) { return std::log(v); },
      [](double v) { return 1.0 / v; });
}

inline Tensor clamp(const Tensor& x, double lo, double hi) {
  if (lo > hi)
    throw ContractError("clamp: lo " + std::to_string(lo) + " > hi " +
                        std::to_string(hi));
  return detail::unary_op(
      x,
      [lo, hi](double v) { return v < lo ? lo : (v > hi ? hi : v); },
      [lo, hi](double v) { return (v >= lo && v <= hi) ? 1.0 : 0.0; });
}

// ---- reductions ----

inline Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.numel(); ++i) s += x.data()[i];
  Tensor out = Tensor::scalar(s);
  if (detail::grad_enabled({&x})) {
    out.set_requires_grad(true);
    Tensor xc = x, oc = out;
    Tape::active()->record([xc, oc]() mutable {
      if (!oc.has_grad() || !xc.requires_grad()) return;
      xc.ensure_grad();
      const double g = oc.grad()[0];
      for (std::size_t i = 0; i < xc.numel(); ++i) xc.grad()[i] += g;
    });
  }
  return out;
}

inline Tensor mean(const Tensor& x) {
  if (x.numel() == 0) throw ContractError("mean: empty tensor");
  const double inv = 1.0 / static_cast<double>(x.numel());
  double s = 0.0;
  for (std::size_t i = 0; i < x.numel(); ++i) s += x.data()[i];
  Tensor out = Tensor::scalar(s * inv);
  if (detail::grad_enabled({&x})) {
    out.set_requires_grad(true);
    Tensor xc = x, oc = out;
    Tape::active()->record([xc, oc, inv]() mutable {
      if (!oc.has_grad() || !xc.requires_grad()) return;
      xc.ensure_grad();
      const double g = oc.grad()[0] * inv;
      for (std::size_t i = 0; i < xc.numel(); ++i) xc.grad()[i] += g;
    });
  }
  return out;
}

// ---- layout ops ----

inline Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw ContractError("concat: no parts");
  if (parts.size() == 1) return parts[0];
  const std::size_t rank = parts[0].rank();
  if (rank == 1) {
    if (axis != 0)
      throw DimensionError("concat: axis " + std::to_string(axis) +
                           " invalid for rank-1 tensors");
  } else if (rank != 2 || (axis != 0 && axis != 1)) {
    throw DimensionError("concat: axis " + std::to_string(axis) +
                         " invalid for rank " + std::to_string(rank));
  }
  for (const Tensor& p : parts) {
    if (p.rank() != rank)
      throw DimensionError("concat: mixed ranks");
    if (rank == 2 && p.dim(1 - axis) != parts[0].dim(1 - axis))
      throw DimensionError("concat: shape mismatch " +
                           shape_str(parts[0].shape()) + " vs " +
                           shape_str(p.shape()));
  }

  Tensor out;
  std::vector<std::size_t> offsets(parts.size());
  if (rank == 1) {
    std::size_t total = 0;
    for (std::size_t i = 0; i < parts.size(); ++i) {
      offsets[i] = total;
      total += parts[i].dim(0);
    }
    out = Tensor::zeros({total});
    for (std::size_t i = 0; i < parts.size(); ++i)
      for (std::size_t j = 0; j < parts[i].numel(); ++j)
        out.data()[offsets[i] + j] = parts[i].data()[j];
  } else if (axis == 0) {
    const std::size_t c = parts[0].dim(1);
    std::size_t total = 0;
    for (std::size_t i = 0; i < parts.size(); ++i) {
      offsets[i] = total;
      total += parts[i].dim(0);
    }
    out = Tensor::zeros({total, c});
    for (std::size_t i = 0; i < parts.size(); ++i)
      for (std::size_t j = 0; j < parts[i].numel(); ++j)
        out.data()[offsets[i] * c + j] = parts[i].data()[j];
  } else {
    const std::size_t r = parts[0].dim(0);
    std::size_t total = 0;
    for (std::size_t i = 0; i < parts.size(); ++i) {
      offsets[i] = total;
      total += parts[i].dim(1);
    }
    out = Tensor::zeros({r, total});
    for (std::size_t i = 0; i < parts.size(); ++i) {
      const std::size_t pc = parts[i].dim(1);
      for (std::size_t row = 0; row < r; ++row)
        for (std::size_t col = 0; col < pc; ++col)
          out.data()[row * total + offsets[i] + col] =
              parts[i].data()[row * pc + col];
    }
  }

  bool any_grad = false;
  for (const Tensor& p : parts)
    if (p.requires_grad()) any_grad = true;
  if (Tape::active() && any_grad) {
    out.set_requires_grad(true);
    std::vector<Tensor> pc = parts;
    Tensor oc = out;
    Tape::active()->record([pc, oc, offsets, axis, rank]() mutable {
      if (!oc.has_grad()) return;
      const double* og = oc.grad();
      for (std::size_t i = 0; i < pc.size(); ++i) {
        if (!pc[i].requires_grad()) continue;
        pc[i].ensure_grad();
        double* pg = pc[i].grad();
        if (rank == 1 || axis == 0) {
          const std::size_t c = rank == 1 ? 1 : pc[i].dim(1);
          const std::size_t base = offsets[i] * c;
          for (std::size_t j = 0; j < pc[i].numel(); ++j) pg[j] += og[base + j];
        } else {
          const std::size_t r = pc[i].dim(0), w = pc[i].dim(1);
          const std::size_t total = oc.dim(1);
          for (std::size_t row = 0; row < r; ++row)
            for (std::size_t col = 0; col < w; ++col)
              pg[row * w + col] += og[row * total + offsets[i] + col];
        }
      }
    });
  }
  return out;
}

inline Tensor slice(const Tensor& x, int axis, std::size_t start,
                    std::size_t len) {
  const std::size_t rank = x.rank();
  if (rank == 1) {
    if (axis != 0 || start + len > x.dim(0))
      throw DimensionError("slice: range [" + std::to_string(start) + ", " +
                           std::to_string(start + len) + ") out of " +
                           shape_str(x.shape()));
  } else if (rank != 2 || (axis != 0 && axis != 1) ||
             start + len > x.dim(static_cast<std::size_t>(axis))) {
    throw DimensionError("slice: range [" + std::to_string(start) + ", " +
                         std::to_string(start + len) + ") on axis " +
                         std::to_string(axis) + " out of " +
                         shape_str(x.shape()));
  }

  Tensor out;
  if (rank == 1) {
    out = Tensor::zeros({len});
    for (std::size_t i = 0; i < len; ++i) out.data()[i] = x.data()[start + i];
  } else if (axis == 0) {
    const std::size_t c = x.dim(1);
    out = Tensor::zeros({len, c});
    for (std::size_t i = 0; i < len * c; ++i)
      out.data()[i] = x.data()[start * c + i];
  } else {
    const std::size_t r = x.dim(0), c = x.dim(1);
    out = Tensor::zeros({r, len});
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < len; ++j)
        out.data()[i * len + j] = x.data()[i * c + start + j];
  }

  if (detail::grad_enabled({&x})) {
    out.set_requires_grad(true);
    Tensor xc = x, oc = out;
    Tape::active()->record([xc, oc, axis, start, rank]() mutable {
      if (!oc.has_grad() || !xc.requires_grad()) return;
      xc.ensure_grad();
      const double* og = oc.grad();
      double* xg = xc.grad();
      if (rank == 1) {
        for (std::size_t i = 0; i < oc.numel(); ++i) xg[start + i] += og[i];
      } else if (axis == 0) {
        const std::size_t c = xc.dim(1);
        for (std::size_t i = 0; i < oc.numel(); ++i) xg[start * c + i] += og[i];
      } else {
        const std::size_t c = xc.dim(1), len = oc.dim(1);
        for (std::size_t i = 0; i < oc.dim(0); ++i)
          for (std::size_t j = 0; j < len; ++j)
            xg[i * c + start + j] += og[i * len + j];
      }
    });
  }
  return out;
}

inline Tensor reshape(const Tensor& x, std::vector<std::size_t> shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  if (n != x.numel())
    throw DimensionError("reshape: " + shape_str(x.shape()) + " has " +
                         std::to_string(x.numel()) + " elements, target " +
                         shape_str(shape) + " has " + std::to_string(n));
  Tensor out = Tensor::zeros(std::move(shape));
  for (std::size_t i = 0; i < n; ++i) out.data()[i] = x.data()[i];
  if (detail::grad_enabled({&x})) {
    out.set_requires_grad(true);
    Tensor xc = x, oc = out;
    Tape::active()->record([xc, oc]() mutable {
      if (!oc.has_grad() || !xc.requires_grad()) return;
      xc.ensure_grad();
      const double* og = oc.grad();
      double* xg = xc.grad();
      for (std::size_t i = 0; i < oc.numel(); ++i) xg[i] += og[i];
    });
  }
  return out;
}

// Mean squared error between same-shape tensors, as a scalar on the tape.
inline Tensor mse(const Tensor& pred, const Tensor& target) {
  Tensor d = sub(pred, target);
  return mean(mul(d, d));
}

}  // namespace kanwx
