#pragma once

#include <cstddef>
#include <span>

#include "entmlm/tensor.hpp"

namespace entmlm {

inline constexpr double kLayerNormEps = 1e-5;

// ---------------------------------------------------------------------------
// Raw row-major kernels. All accumulate into `c` when `accumulate` is set,
// otherwise overwrite it.
// ---------------------------------------------------------------------------

/// c[m x n] (+)= a[m x k] * b[k x n]
void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n, bool accumulate);
/// c[m x n] (+)= a[m x k] * b[n x k]^T
void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n, bool accumulate);
/// c[m x n] (+)= a[k x m]^T * b[k x n]
void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n, bool accumulate);

// ---------------------------------------------------------------------------
// Tensor-level operations with their backward passes.
// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);

struct MatmulGrads {
  Tensor a;
  Tensor b;
};
MatmulGrads matmul_backward(const Tensor& a, const Tensor& b, const Tensor& grad_out);

/// Adds `bias` (length n) to every row of `x` (m x n) in place.
void add_row_bias(Tensor& x, const Tensor& bias);
/// Column sums of `grad` accumulated into `bias_grad`.
void accumulate_bias_grad(const Tensor& grad, Tensor& bias_grad);

/// Numerically stable softmax along `axis` of a tensor of any rank.
Tensor softmax(const Tensor& x, std::size_t axis);
Tensor softmax_backward(const Tensor& y, const Tensor& grad_y, std::size_t axis);

/// Log-softmax along the last axis.
Tensor log_softmax(const Tensor& x);
Tensor log_softmax_backward(const Tensor& y, const Tensor& grad_y);
double logsumexp(std::span<const double> row);

struct LayerNormResult {
  Tensor out;
  Tensor normalized;  // pre-affine values
  std::vector<double> inv_std;
};

/// Normalizes over the last axis, then applies gain and bias elementwise.
LayerNormResult layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                           double eps = kLayerNormEps);

struct LayerNormGrads {
  Tensor x;
  Tensor gain;
  Tensor bias;
};
LayerNormGrads layer_norm_backward(const LayerNormResult& fwd, const Tensor& gain,
                                   const Tensor& grad_out);

/// Exact GELU, x * Phi(x).
Tensor gelu(const Tensor& x);
Tensor gelu_backward(const Tensor& x, const Tensor& grad_out);

}  // namespace entmlm
