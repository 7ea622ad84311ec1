#include <algorithm>

#include "ops_internal.hpp"
#include "stripereid/ops.hpp"

namespace stripereid {

namespace detail {

void gemm_nn(std::int64_t m, std::int64_t n, std::int64_t k, const double* a, const double* b, double* c,
             bool accumulate) {
  if (!accumulate) std::fill(c, c + m * n, 0.0);
  for (std::int64_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    const double* arow = a + i * k;
    for (std::int64_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      const double* brow = b + p * n;
      for (std::int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void gemm_nt(std::int64_t m, std::int64_t n, std::int64_t k, const double* a, const double* b, double* c,
             bool accumulate) {
  // Four independent accumulators per dot product; the summation order is
  // fixed so results do not depend on the compiler's vectorization choices.
  for (std::int64_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    for (std::int64_t j = 0; j < n; ++j) {
      const double* brow = b + j * k;
      double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
      std::int64_t p = 0;
      for (; p + 4 <= k; p += 4) {
        s0 += arow[p] * brow[p];
        s1 += arow[p + 1] * brow[p + 1];
        s2 += arow[p + 2] * brow[p + 2];
        s3 += arow[p + 3] * brow[p + 3];
      }
      for (; p < k; ++p) s0 += arow[p] * brow[p];
      const double s = (s0 + s1) + (s2 + s3);
      if (accumulate) {
        c[i * n + j] += s;
      } else {
        c[i * n + j] = s;
      }
    }
  }
}

void gemm_tn(std::int64_t m, std::int64_t n, std::int64_t k, const double* a, const double* b, double* c,
             bool accumulate) {
  if (!accumulate) std::fill(c, c + m * n, 0.0);
  for (std::int64_t p = 0; p < k; ++p) {
    const double* arow = a + p * m;
    const double* brow = b + p * n;
    for (std::int64_t i = 0; i < m; ++i) {
      const double av = arow[i];
      if (av == 0.0) continue;
      double* crow = c + i * n;
      for (std::int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace detail

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.dim() != 2 || b.dim() != 2 || a.size(1) != b.size(0)) {
    throw ShapeError("matmul: incompatible shapes " + shape_to_string(a.shape()) + " and " +
                     shape_to_string(b.shape()));
  }
  const auto m = a.size(0);
  const auto k = a.size(1);
  const auto n = b.size(1);
  std::vector<double> out(detail::idx(m * n));
  detail::gemm_nn(m, n, k, a.values().data(), b.values().data(), out.data(), false);
  Tensor result = make_tensor({m, n}, std::move(out));
  record_op(result, {&a, &b}, [ia = a.impl(), ib = b.impl(), m, n, k](std::span<const double> g) {
    if (ia->requires_grad) {
      detail::gemm_nt(m, k, n, g.data(), ib->data.data(), ia->grad_buffer().data(), true);
    }
    if (ib->requires_grad) {
      detail::gemm_tn(k, n, m, ia->data.data(), g.data(), ib->grad_buffer().data(), true);
    }
  });
  return result;
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  Tensor y = matmul(x, weight);
  if (bias.defined()) y = add_channel_bias(y, bias);
  return y;
}

}  // namespace stripereid
