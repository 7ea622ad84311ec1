#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "stripereid/tensor.hpp"

namespace stripereid {

enum class Mode { train, eval };

// Elementwise. Operands must have identical shapes; the only broadcast is
// add_channel_bias.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scalar_mul(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
/// |x|, with subgradient 0 at x == 0.
Tensor abs(const Tensor& a);
Tensor pow_scalar(const Tensor& a, double p);
Tensor relu(const Tensor& a);

/// Adds bias[c] along axis 1 of a [n,c] or [n,c,h,w] tensor.
Tensor add_channel_bias(const Tensor& x, const Tensor& bias);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// Dot product of a tensor with a constant weight tensor of the same shape.
Tensor weighted_sum(const Tensor& a, std::span<const double> weights);

Tensor reshape(const Tensor& a, Shape shape);
/// Concatenates [n, d_i] tensors along axis 1.
Tensor concat_columns(std::span<const Tensor> parts);

// Linear algebra.
Tensor matmul(const Tensor& a, const Tensor& b);
/// x[n,in] · weight[in,out] (+ bias[out] when defined).
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias = {});

// Convolution and pooling on NCHW tensors.
struct Conv2dParams {
  std::int64_t stride = 1;
  std::int64_t pad = 0;
};
std::int64_t conv_output_extent(std::int64_t in, std::int64_t kernel, std::int64_t stride, std::int64_t pad);
Tensor conv2d(const Tensor& x, const Tensor& kernel, Conv2dParams params = {});
/// Max pooling without padding; ties route the gradient to the lowest linear index.
Tensor maxpool2d(const Tensor& x, std::int64_t window, std::int64_t stride);
Tensor global_avg_pool(const Tensor& x);
Tensor global_max_pool(const Tensor& x);

// Normalization.
struct BatchNormStats {
  Tensor running_mean;
  Tensor running_var;

  static BatchNormStats initial(std::int64_t channels);
};

struct BatchNormOptions {
  double momentum = 0.1;
  double epsilon = 1e-5;
};

/// Batch normalization over axis 1 of [n,c] or [n,c,h,w] input.
///
/// Train mode normalizes with the biased batch variance and updates the
/// running statistics as new = (1 - momentum) * old + momentum * batch.
/// Eval mode uses the running statistics and does not touch them.
Tensor batchnorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormStats& stats, Mode mode,
                 BatchNormOptions options = {});

/// Row-wise log-softmax of [n,k] logits, k >= 2.
Tensor log_softmax(const Tensor& logits);
/// Row-wise unit-norm scaling of [n,d]; zero rows are an error.
Tensor l2_normalize(const Tensor& x);

namespace detail {

/// Row-major C[m,n] (+)= A[m,k] · B[k,n].
void gemm_nn(std::int64_t m, std::int64_t n, std::int64_t k, const double* a, const double* b, double* c,
             bool accumulate);
/// C[m,n] (+)= A[m,k] · B[n,k]ᵀ.
void gemm_nt(std::int64_t m, std::int64_t n, std::int64_t k, const double* a, const double* b, double* c,
             bool accumulate);
/// C[m,n] (+)= A[k,m]ᵀ · B[k,n].
void gemm_tn(std::int64_t m, std::int64_t n, std::int64_t k, const double* a, const double* b, double* c,
             bool accumulate);

}  // namespace detail

}  // namespace stripereid
