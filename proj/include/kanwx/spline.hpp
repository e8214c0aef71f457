#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "kanwx/error.hpp"
#include "kanwx/nn.hpp"
#include "kanwx/rng.hpp"
#include "kanwx/tensor.hpp"

namespace kanwx {

// Uniform extended knot grid on [lo, hi]: `intervals` interior spans plus
// `degree` extrapolated knots beyond each end. Inputs are clamped into the
// domain before evaluation.
struct SplineGrid {
  double lo = 0.0;
  double hi = 1.0;
  std::size_t intervals = 5;  // G
  std::size_t degree = 3;     // k

  void validate() const {
    if (!(lo < hi)) throw ContractError("SplineGrid: lo must be < hi");
    if (intervals < 1) throw ContractError("SplineGrid: intervals must be >= 1");
  }

  double spacing() const { return (hi - lo) / static_cast<double>(intervals); }

  std::size_t knot_count() const { return intervals + 2 * degree + 1; }

  // Knot array index a in [0, intervals + 2*degree]; interior knots are
  // a in [degree, degree + intervals].
  double knot(std::size_t a) const {
    return lo + (static_cast<double>(a) - static_cast<double>(degree)) *
                    spacing();
  }

  std::size_t basis_count() const { return intervals + degree; }

  // Span a with knot(a) <= x < knot(a+1), clamped to valid domain spans.
  std::size_t find_span(double x) const {
    double t = (x - lo) / spacing();
    long j = static_cast<long>(std::floor(t));
    if (j < 0) j = 0;
    if (j >= static_cast<long>(intervals))
      j = static_cast<long>(intervals) - 1;
    return degree + static_cast<std::size_t>(j);
  }
};

namespace detail {

// Cox-de Boor over the nonzero bases at x. Writes degree+1 values (and,
// when derivs != nullptr, derivatives) and returns the index of the first
// nonzero basis. x is clamped into the grid domain.
inline std::size_t eval_bspline_local(const SplineGrid& g, double x,
                                      double* values, double* derivs) {
  const std::size_t k = g.degree;
  double xc = x;
  if (xc < g.lo) xc = g.lo;
  if (xc > g.hi) xc = g.hi;
  const std::size_t span = g.find_span(xc);

  // Inverted-triangle basis recursion.
  auto basis_funs = [&](std::size_t p, double* out) {
    out[0] = 1.0;
    std::vector<double> left(p + 1), right(p + 1);
    for (std::size_t j = 1; j <= p; ++j) {
      left[j] = xc - g.knot(span + 1 - j);
      right[j] = g.knot(span + j) - xc;
      double saved = 0.0;
      for (std::size_t r = 0; r < j; ++r) {
        const double temp = out[r] / (right[r + 1] + left[j - r]);
        out[r] = saved + right[r + 1] * temp;
        saved = left[j - r] * temp;
      }
      out[j] = saved;
    }
  };

  basis_funs(k, values);

  if (derivs) {
    if (k == 0) {
      derivs[0] = 0.0;
    } else {
      std::vector<double> lower(k);  // degree k-1 bases at the same span
      basis_funs(k - 1, lower.data());
      for (std::size_t r = 0; r <= k; ++r) {
        const std::size_t i = span - k + r;
        const double bl = r >= 1 ? lower[r - 1] : 0.0;
        const double br = r <= k - 1 ? lower[r] : 0.0;
        const double dl = g.knot(i + k) - g.knot(i);
        const double dr = g.knot(i + k + 1) - g.knot(i + 1);
        derivs[r] =
            static_cast<double>(k) * (bl / dl - br / dr);
      }
    }
  }
  return span - k;
}

}  // namespace detail

// All basis_count() basis values at x (zero outside the local support).
inline std::vector<double> bspline_basis(const SplineGrid& g, double x) {
  std::vector<double> out(g.basis_count(), 0.0);
  std::vector<double> local(g.degree + 1);
  const std::size_t first = detail::eval_bspline_local(g, x, local.data(), nullptr);
  for (std::size_t j = 0; j <= g.degree; ++j) out[first + j] = local[j];
  return out;
}

inline std::vector<double> bspline_basis_deriv(const SplineGrid& g, double x) {
  std::vector<double> out(g.basis_count(), 0.0);
  std::vector<double> v(g.degree + 1), d(g.degree + 1);
  const std::size_t first = detail::eval_bspline_local(g, x, v.data(), d.data());
  for (std::size_t j = 0; j <= g.degree; ++j) out[first + j] = d[j];
  return out;
}

// One KAN layer: every edge (q, p) carries a learnable univariate function
//   phi_qp(x) = base_w[q,p] * b(x) + spline_w[q,p] * sum_i coeff[q,p,i] B_i(x)
// and output unit q sums phi_qp(x_p) over inputs p. The spline term sees the
// input clamped into the grid domain; the base activation sees it raw.
class KanLayer {
 public:
  KanLayer() = default;

  KanLayer(std::size_t in_dim, std::size_t out_dim, SplineGrid grid,
           Activation base, Rng& rng, double spline_noise = 0.1)
      : in_(in_dim), out_(out_dim), grid_(grid), act_(base) {
    grid_.validate();
    const std::size_t n = grid_.basis_count();
    coeff_ = Tensor::zeros({out_, in_ * n});
    for (std::size_t i = 0; i < coeff_.numel(); ++i)
      coeff_.data()[i] = rng.normal(0.0, spline_noise);
    coeff_.set_requires_grad(true);
    base_w_ = init_params({out_, in_}, in_, rng);
    spline_w_ = Tensor::full({out_, in_}, 1.0);
    spline_w_.set_requires_grad(true);
  }

  std::size_t in_dim() const { return in_; }
  std::size_t out_dim() const { return out_; }
  const SplineGrid& grid() const { return grid_; }
  Activation base_activation() const { return act_; }

  Tensor coeff() const { return coeff_; }
  Tensor base_weight() const { return base_w_; }
  Tensor spline_weight() const { return spline_w_; }

  void append_params(const std::string& prefix,
                     std::vector<NamedParam>& out) const {
    out.push_back({prefix + ".coeff", coeff_});
    out.push_back({prefix + ".base_weight", base_w_});
    out.push_back({prefix + ".spline_weight", spline_w_});
  }

  // x: [batch x in] -> [batch x out]. Single fused tape node.
  Tensor forward(const Tensor& x) const {
    if (x.rank() != 2 || x.dim(1) != in_)
      throw DimensionError("KanLayer::forward: input " + shape_str(x.shape()) +
                           " does not match in_dim " + std::to_string(in_));
    const std::size_t batch = x.dim(0);
    const std::size_t nb = grid_.degree + 1;
    const std::size_t nbasis = grid_.basis_count();

    auto first = std::make_shared<std::vector<std::uint32_t>>(batch * in_);
    auto bval = std::make_shared<std::vector<double>>(batch * in_ * nb);
    auto bder = std::make_shared<std::vector<double>>(batch * in_ * nb);
    auto base_v = std::make_shared<std::vector<double>>(batch * in_);
    auto base_d = std::make_shared<std::vector<double>>(batch * in_);
    auto interior = std::make_shared<std::vector<unsigned char>>(batch * in_);

    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t p = 0; p < in_; ++p) {
        const std::size_t idx = b * in_ + p;
        const double xv = x.data()[idx];
        (*interior)[idx] = (xv >= grid_.lo && xv <= grid_.hi) ? 1 : 0;
        (*first)[idx] = static_cast<std::uint32_t>(detail::eval_bspline_local(
            grid_, xv, bval->data() + idx * nb, bder->data() + idx * nb));
        (*base_v)[idx] = activation_value(act_, xv);
        (*base_d)[idx] = activation_deriv(act_, xv);
      }
    }

    Tensor out = Tensor::zeros({batch, out_});
    const double* wb = base_w_.data();
    const double* ws = spline_w_.data();
    const double* cf = coeff_.data();
    for (std::size_t b = 0; b < batch; ++b) {
      double* orow = out.data() + b * out_;
      for (std::size_t q = 0; q < out_; ++q) {
        double acc = 0.0;
        const double* wbrow = wb + q * in_;
        const double* wsrow = ws + q * in_;
        const double* crow = cf + q * in_ * nbasis;
        for (std::size_t p = 0; p < in_; ++p) {
          const std::size_t idx = b * in_ + p;
          const double* bv = bval->data() + idx * nb;
          const double* cpf = crow + p * nbasis + (*first)[idx];
          double sp = 0.0;
          for (std::size_t j = 0; j < nb; ++j) sp += cpf[j] * bv[j];
          acc += wbrow[p] * (*base_v)[idx] + wsrow[p] * sp;
        }
        orow[q] = acc;
      }
    }

    if (detail::grad_enabled({&x, &coeff_, &base_w_, &spline_w_})) {
      out.set_requires_grad(true);
      Tensor xc = x, oc = out, cfc = coeff_, wbc = base_w_, wsc = spline_w_;
      const std::size_t in_dim = in_, out_dim = out_;
      Tape::active()->record([xc, oc, cfc, wbc, wsc, first, bval, bder, base_v,
                              base_d, interior, in_dim, out_dim, nb,
                              nbasis]() mutable {
        if (!oc.has_grad()) return;
        const std::size_t batch = oc.dim(0);
        const bool need_dx = xc.requires_grad();
        const bool need_dc = cfc.requires_grad();
        const bool need_dwb = wbc.requires_grad();
        const bool need_dws = wsc.requires_grad();
        if (need_dx) xc.ensure_grad();
        if (need_dc) cfc.ensure_grad();
        if (need_dwb) wbc.ensure_grad();
        if (need_dws) wsc.ensure_grad();
        const double* og = oc.grad();
        const double* cf = cfc.data();
        const double* wb = wbc.data();
        const double* ws = wsc.data();
        for (std::size_t b = 0; b < batch; ++b) {
          const double* grow = og + b * out_dim;
          for (std::size_t p = 0; p < in_dim; ++p) {
            const std::size_t idx = b * in_dim + p;
            const double* bv = bval->data() + idx * nb;
            const double* bd = bder->data() + idx * nb;
            const std::uint32_t f = (*first)[idx];
            const bool intr = (*interior)[idx] != 0;
            double dx_acc = 0.0;
            for (std::size_t q = 0; q < out_dim; ++q) {
              const double g = grow[q];
              if (g == 0.0) continue;
              const std::size_t wi = q * in_dim + p;
              const double* cpf = cf + q * in_dim * nbasis + p * nbasis + f;
              double sp = 0.0;
              for (std::size_t j = 0; j < nb; ++j) sp += cpf[j] * bv[j];
              if (need_dwb) wbc.grad()[wi] += g * (*base_v)[idx];
              if (need_dws) wsc.grad()[wi] += g * sp;
              const double w_s = ws[wi];
              if (need_dc) {
                double* cg = cfc.grad() + q * in_dim * nbasis + p * nbasis + f;
                const double gs = g * w_s;
                for (std::size_t j = 0; j < nb; ++j) cg[j] += gs * bv[j];
              }
              if (need_dx) {
                double spd = 0.0;
                if (intr)
                  for (std::size_t j = 0; j < nb; ++j) spd += cpf[j] * bd[j];
                dx_acc += g * (wb[wi] * (*base_d)[idx] + w_s * spd);
              }
            }
            if (need_dx) xc.grad()[idx] += dx_acc;
          }
        }
      });
    }
    return out;
  }

 private:
  std::size_t in_ = 0, out_ = 0;
  SplineGrid grid_;
  Activation act_ = Activation::silu;
  Tensor coeff_;     // [out x in*basis_count]
  Tensor base_w_;    // [out x in]
  Tensor spline_w_;  // [out x in]
};

// Stack of KAN layers; adjacent widths must agree.
class KanNetwork {
 public:
  KanNetwork() = default;

  KanNetwork(const std::vector<std::size_t>& widths, SplineGrid grid,
             Activation base, Rng& rng, double spline_noise = 0.1) {
    if (widths.size() < 2)
      throw ContractError("KanNetwork: need at least two widths");
    widths_ = widths;
    layers_.reserve(widths.size() - 1);
    for (std::size_t l = 0; l + 1 < widths.size(); ++l)
      layers_.emplace_back(widths[l], widths[l + 1], grid, base, rng,
                           spline_noise);
  }

  const std::vector<std::size_t>& widths() const { return widths_; }
  const std::vector<KanLayer>& layers() const { return layers_; }

  Tensor forward(const Tensor& x) const {
    Tensor h = x;
    for (const KanLayer& layer : layers_) h = layer.forward(h);
    return h;
  }

  void append_params(const std::string& prefix,
                     std::vector<NamedParam>& out) const {
    for (std::size_t l = 0; l < layers_.size(); ++l)
      layers_[l].append_params(prefix + ".l" + std::to_string(l), out);
  }

 private:
  std::vector<std::size_t> widths_;
  std::vector<KanLayer> layers_;
};

}  // namespace kanwx
