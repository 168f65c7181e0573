#include "entmlm/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace entmlm {

namespace {

void require_2d(const Tensor& t, const char* what) {
  if (t.rank() != 2) {
    throw ShapeError(std::string(what) + " must be a matrix, got " + shape_string(t.shape()));
  }
}

// Splits a shape into (outer, axis length, inner) for strided reductions.
struct AxisLayout {
  std::size_t outer = 1;
  std::size_t length = 1;
  std::size_t inner = 1;
};

AxisLayout axis_layout(const Tensor& x, std::size_t axis) {
  AxisLayout layout;
  layout.length = x.dim(axis);
  for (std::size_t i = 0; i < axis; ++i) layout.outer *= x.shape()[i];
  for (std::size_t i = axis + 1; i < x.rank(); ++i) layout.inner *= x.shape()[i];
  return layout;
}

}  // namespace

void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  if (!accumulate) std::fill(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(m * n), 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = c.data() + i * n;
    const double* ai = a.data() + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = ai[p];
      if (aip == 0.0) continue;
      const double* bp = b.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
}

void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a.data() + i * k;
    double* ci = c.data() + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const double* bj = b.data() + j * k;
      double sum = 0.0;
      for (std::size_t p = 0; p < k; ++p) sum += ai[p] * bj[p];
      ci[j] = accumulate ? ci[j] + sum : sum;
    }
  }
}

void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  if (!accumulate) std::fill(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(m * n), 0.0);
  for (std::size_t p = 0; p < k; ++p) {
    const double* ap = a.data() + p * m;
    const double* bp = b.data() + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double api = ap[i];
      if (api == 0.0) continue;
      double* ci = c.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += api * bp[j];
    }
  }
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_2d(a, "matmul lhs");
  require_2d(b, "matmul rhs");
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul inner dimensions differ: " + shape_string(a.shape()) + " * " +
                     shape_string(b.shape()));
  }
  Tensor c({a.rows(), b.cols()});
  gemm_nn(a.data(), b.data(), c.data(), a.rows(), a.cols(), b.cols(), false);
  return c;
}

MatmulGrads matmul_backward(const Tensor& a, const Tensor& b, const Tensor& grad_out) {
  if (grad_out.rows() != a.rows() || grad_out.cols() != b.cols()) {
    throw ShapeError("matmul_backward: gradient shape " + shape_string(grad_out.shape()) +
                     " does not match output");
  }
  MatmulGrads g{Tensor(a.shape()), Tensor(b.shape())};
  gemm_nt(grad_out.data(), b.data(), g.a.data(), a.rows(), b.cols(), a.cols(), false);
  gemm_tn(a.data(), grad_out.data(), g.b.data(), a.cols(), a.rows(), b.cols(), false);
  return g;
}

void add_row_bias(Tensor& x, const Tensor& bias) {
  const std::size_t n = x.cols();
  if (bias.size() != n) throw ShapeError("bias length does not match columns");
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto row = x.row(r);
    for (std::size_t j = 0; j < n; ++j) row[j] += bias[j];
  }
}

void accumulate_bias_grad(const Tensor& grad, Tensor& bias_grad) {
  const std::size_t n = grad.cols();
  for (std::size_t r = 0; r < grad.rows(); ++r) {
    auto row = grad.row(r);
    for (std::size_t j = 0; j < n; ++j) bias_grad[j] += row[j];
  }
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  const AxisLayout L = axis_layout(x, axis);
  Tensor y(x.shape());
  const auto in = x.data();
  auto out = y.data();
  for (std::size_t o = 0; o < L.outer; ++o) {
    for (std::size_t i = 0; i < L.inner; ++i) {
      const std::size_t base = o * L.length * L.inner + i;
      double max_val = in[base];
      for (std::size_t t = 1; t < L.length; ++t) max_val = std::max(max_val, in[base + t * L.inner]);
      double sum = 0.0;
      for (std::size_t t = 0; t < L.length; ++t) {
        const double e = std::exp(in[base + t * L.inner] - max_val);
        out[base + t * L.inner] = e;
        sum += e;
      }
      for (std::size_t t = 0; t < L.length; ++t) out[base + t * L.inner] /= sum;
    }
  }
  return y;
}

Tensor softmax_backward(const Tensor& y, const Tensor& grad_y, std::size_t axis) {
  if (!y.same_shape(grad_y)) throw ShapeError("softmax_backward: shape mismatch");
  const AxisLayout L = axis_layout(y, axis);
  Tensor gx(y.shape());
  for (std::size_t o = 0; o < L.outer; ++o) {
    for (std::size_t i = 0; i < L.inner; ++i) {
      const std::size_t base = o * L.length * L.inner + i;
      double dot = 0.0;
      for (std::size_t t = 0; t < L.length; ++t) {
        const std::size_t idx = base + t * L.inner;
        dot += y[idx] * grad_y[idx];
      }
      for (std::size_t t = 0; t < L.length; ++t) {
        const std::size_t idx = base + t * L.inner;
        gx[idx] = y[idx] * (grad_y[idx] - dot);
      }
    }
  }
  return gx;
}

double logsumexp(std::span<const double> row) {
  const double max_val = *std::max_element(row.begin(), row.end());
  double sum = 0.0;
  for (double v : row) sum += std::exp(v - max_val);
  return max_val + std::log(sum);
}

Tensor log_softmax(const Tensor& x) {
  Tensor y(x.shape());
  const std::size_t n = x.shape().back();
  const std::size_t m = x.size() / n;
  for (std::size_t r = 0; r < m; ++r) {
    auto in = x.data().subspan(r * n, n);
    const double lse = logsumexp(in);
    for (std::size_t j = 0; j < n; ++j) y[r * n + j] = in[j] - lse;
  }
  return y;
}

Tensor log_softmax_backward(const Tensor& y, const Tensor& grad_y) {
  if (!y.same_shape(grad_y)) throw ShapeError("log_softmax_backward: shape mismatch");
  Tensor gx(y.shape());
  const std::size_t n = y.shape().back();
  const std::size_t m = y.size() / n;
  for (std::size_t r = 0; r < m; ++r) {
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) total += grad_y[r * n + j];
    for (std::size_t j = 0; j < n; ++j) {
      gx[r * n + j] = grad_y[r * n + j] - std::exp(y[r * n + j]) * total;
    }
  }
  return gx;
}

LayerNormResult layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  const std::size_t n = x.shape().back();
  if (gain.size() != n || bias.size() != n) {
    throw ShapeError("layer_norm: gain/bias length must equal last dimension " + std::to_string(n));
  }
  const std::size_t m = x.size() / n;
  LayerNormResult r{Tensor(x.shape()), Tensor(x.shape()), std::vector<double>(m)};
  for (std::size_t i = 0; i < m; ++i) {
    const double* xi = x.data().data() + i * n;
    double mean = 0.0;
    for (std::size_t j = 0; j < n; ++j) mean += xi[j];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (xi[j] - mean) * (xi[j] - mean);
    var /= static_cast<double>(n);
    const double inv_std = 1.0 / std::sqrt(var + eps);
    r.inv_std[i] = inv_std;
    for (std::size_t j = 0; j < n; ++j) {
      const double xhat = (xi[j] - mean) * inv_std;
      r.normalized[i * n + j] = xhat;
      r.out[i * n + j] = xhat * gain[j] + bias[j];
    }
  }
  return r;
}

LayerNormGrads layer_norm_backward(const LayerNormResult& fwd, const Tensor& gain,
                                   const Tensor& grad_out) {
  const Tensor& xhat = fwd.normalized;
  if (!xhat.same_shape(grad_out)) throw ShapeError("layer_norm_backward: shape mismatch");
  const std::size_t n = xhat.shape().back();
  const std::size_t m = xhat.size() / n;
  LayerNormGrads g{Tensor(xhat.shape()), Tensor(gain.shape()), Tensor(gain.shape())};
  std::vector<double> dxhat(n);
  for (std::size_t i = 0; i < m; ++i) {
    double mean_d = 0.0;
    double mean_dx = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double go = grad_out[i * n + j];
      g.gain[j] += go * xhat[i * n + j];
      g.bias[j] += go;
      dxhat[j] = go * gain[j];
      mean_d += dxhat[j];
      mean_dx += dxhat[j] * xhat[i * n + j];
    }
    mean_d /= static_cast<double>(n);
    mean_dx /= static_cast<double>(n);
    for (std::size_t j = 0; j < n; ++j) {
      g.x[i * n + j] = fwd.inv_std[i] * (dxhat[j] - mean_d - xhat[i * n + j] * mean_dx);
    }
  }
  return g;
}

Tensor gelu(const Tensor& x) {
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double v = x[i];
    y[i] = 0.5 * v * (1.0 + std::erf(v / std::numbers::sqrt2));
  }
  return y;
}

Tensor gelu_backward(const Tensor& x, const Tensor& grad_out) {
  Tensor g(x.shape());
  const double inv_sqrt_2pi = 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double v = x[i];
    const double cdf = 0.5 * (1.0 + std::erf(v / std::numbers::sqrt2));
    const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
    g[i] = grad_out[i] * (cdf + v * pdf);
  }
  return g;
}

}  // namespace entmlm
