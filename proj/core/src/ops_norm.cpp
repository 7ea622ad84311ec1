#include <cmath>

#include "ops_internal.hpp"
#include "stripereid/ops.hpp"

namespace stripereid {

using detail::idx;

BatchNormStats BatchNormStats::initial(std::int64_t channels) {
  return {Tensor::zeros({channels}), Tensor::ones({channels})};
}

Tensor batchnorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormStats& stats, Mode mode,
                 BatchNormOptions options) {
  if (x.dim() != 2 && x.dim() != 4) throw ShapeError("batchnorm: expected [n,c] or [n,c,h,w] input");
  const auto n = x.size(0);
  const auto c = x.size(1);
  const std::int64_t inner = x.dim() == 4 ? x.size(2) * x.size(3) : 1;
  const Shape channel_shape{c};
  if (gamma.shape() != channel_shape || beta.shape() != channel_shape ||
      stats.running_mean.shape() != channel_shape || stats.running_var.shape() != channel_shape) {
    throw ShapeError("batchnorm: parameter/statistics shape must be [" + std::to_string(c) + "]");
  }
  if (mode == Mode::train && n < 2) throw ShapeError("batchnorm: train mode needs a batch of at least 2");

  const auto xv = x.values();
  const auto gv = gamma.values();
  const auto bv = beta.values();
  const double count = static_cast<double>(n * inner);

  std::vector<double> mean(idx(c)), inv_std(idx(c));
  if (mode == Mode::train) {
    auto rm = stats.running_mean.mutable_values();
    auto rv = stats.running_var.mutable_values();
    for (std::int64_t ch = 0; ch < c; ++ch) {
      double s = 0.0;
      for (std::int64_t i = 0; i < n; ++i) {
        const auto base = idx((i * c + ch) * inner);
        for (std::int64_t k = 0; k < inner; ++k) s += xv[base + idx(k)];
      }
      const double mu = s / count;
      double ss = 0.0;
      for (std::int64_t i = 0; i < n; ++i) {
        const auto base = idx((i * c + ch) * inner);
        for (std::int64_t k = 0; k < inner; ++k) {
          const double d = xv[base + idx(k)] - mu;
          ss += d * d;
        }
      }
      const double var = ss / count;
      mean[idx(ch)] = mu;
      inv_std[idx(ch)] = 1.0 / std::sqrt(var + options.epsilon);
      rm[idx(ch)] = (1.0 - options.momentum) * rm[idx(ch)] + options.momentum * mu;
      rv[idx(ch)] = (1.0 - options.momentum) * rv[idx(ch)] + options.momentum * var;
    }
  } else {
    const auto rm = stats.running_mean.values();
    const auto rv = stats.running_var.values();
    for (std::int64_t ch = 0; ch < c; ++ch) {
      mean[idx(ch)] = rm[idx(ch)];
      inv_std[idx(ch)] = 1.0 / std::sqrt(rv[idx(ch)] + options.epsilon);
    }
  }

  std::vector<double> xhat(xv.size()), out(xv.size());
  for (std::int64_t i = 0; i < n; ++i) {
    for (std::int64_t ch = 0; ch < c; ++ch) {
      const auto base = idx((i * c + ch) * inner);
      for (std::int64_t k = 0; k < inner; ++k) {
        const auto at = base + idx(k);
        xhat[at] = (xv[at] - mean[idx(ch)]) * inv_std[idx(ch)];
        out[at] = gv[idx(ch)] * xhat[at] + bv[idx(ch)];
      }
    }
  }

  Tensor result = make_tensor(x.shape(), std::move(out));
  if (Tape::should_record({&x, &gamma, &beta})) {
    Tape::active()->record(result, [ix = x.impl(), ig = gamma.impl(), ib = beta.impl(), xhat = std::move(xhat),
                                    inv_std = std::move(inv_std), n, c, inner, count,
                                    train = mode == Mode::train](std::span<const double> g) {
      std::vector<double> sum_g(idx(c), 0.0), sum_gx(idx(c), 0.0);
      for (std::int64_t i = 0; i < n; ++i) {
        for (std::int64_t ch = 0; ch < c; ++ch) {
          const auto base = idx((i * c + ch) * inner);
          for (std::int64_t k = 0; k < inner; ++k) {
            sum_g[idx(ch)] += g[base + idx(k)];
            sum_gx[idx(ch)] += g[base + idx(k)] * xhat[base + idx(k)];
          }
        }
      }
      if (ig->requires_grad) {
        auto gg = ig->grad_buffer();
        for (std::int64_t ch = 0; ch < c; ++ch) gg[idx(ch)] += sum_gx[idx(ch)];
      }
      if (ib->requires_grad) {
        auto gb = ib->grad_buffer();
        for (std::int64_t ch = 0; ch < c; ++ch) gb[idx(ch)] += sum_g[idx(ch)];
      }
      if (!ix->requires_grad) return;
      auto gx = ix->grad_buffer();
      for (std::int64_t i = 0; i < n; ++i) {
        for (std::int64_t ch = 0; ch < c; ++ch) {
          const double scale = ig->data[idx(ch)] * inv_std[idx(ch)];
          const auto base = idx((i * c + ch) * inner);
          for (std::int64_t k = 0; k < inner; ++k) {
            const auto at = base + idx(k);
            if (train) {
              gx[at] += scale * (g[at] - sum_g[idx(ch)] / count - xhat[at] * sum_gx[idx(ch)] / count);
            } else {
              gx[at] += scale * g[at];
            }
          }
        }
      }
    });
  }
  return result;
}

Tensor log_softmax(const Tensor& logits) {
  if (logits.dim() != 2 || logits.size(1) < 2) throw ShapeError("log_softmax: expected [n,k] logits with k >= 2");
  const auto n = logits.size(0);
  const auto k = logits.size(1);
  const auto lv = logits.values();
  std::vector<double> out(lv.size());
  for (std::int64_t i = 0; i < n; ++i) {
    const double* row = lv.data() + i * k;
    double mx = row[0];
    for (std::int64_t j = 1; j < k; ++j) mx = std::max(mx, row[j]);
    double s = 0.0;
    for (std::int64_t j = 0; j < k; ++j) s += std::exp(row[j] - mx);
    const double lse = mx + std::log(s);
    for (std::int64_t j = 0; j < k; ++j) out[idx(i * k + j)] = row[j] - lse;
  }
  Tensor result = make_tensor(logits.shape(), out);
  record_op(result, {&logits}, [il = logits.impl(), out = std::move(out), n, k](std::span<const double> g) {
    auto gl = il->grad_buffer();
    for (std::int64_t i = 0; i < n; ++i) {
      double gs = 0.0;
      for (std::int64_t j = 0; j < k; ++j) gs += g[idx(i * k + j)];
      for (std::int64_t j = 0; j < k; ++j) {
        const auto at = idx(i * k + j);
        gl[at] += g[at] - std::exp(out[at]) * gs;
      }
    }
  });
  return result;
}

Tensor l2_normalize(const Tensor& x) {
  if (x.dim() != 2) throw ShapeError("l2_normalize: expected [n,d] input");
  const auto n = x.size(0);
  const auto d = x.size(1);
  const auto xv = x.values();
  std::vector<double> norms(idx(n)), out(xv.size());
  for (std::int64_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::int64_t j = 0; j < d; ++j) s += xv[idx(i * d + j)] * xv[idx(i * d + j)];
    if (s == 0.0) throw NumericError("l2_normalize: row " + std::to_string(i) + " has zero norm");
    norms[idx(i)] = std::sqrt(s);
    for (std::int64_t j = 0; j < d; ++j) out[idx(i * d + j)] = xv[idx(i * d + j)] / norms[idx(i)];
  }
  Tensor result = make_tensor(x.shape(), out);
  record_op(result, {&x}, [ix = x.impl(), out = std::move(out), norms = std::move(norms), n, d](std::span<const double> g) {
    auto gx = ix->grad_buffer();
    for (std::int64_t i = 0; i < n; ++i) {
      double dot = 0.0;
      for (std::int64_t j = 0; j < d; ++j) dot += g[idx(i * d + j)] * out[idx(i * d + j)];
      for (std::int64_t j = 0; j < d; ++j) {
        const auto at = idx(i * d + j);
        gx[at] += (g[at] - out[at] * dot) / norms[idx(i)];
      }
    }
  });
  return result;
}

}  // namespace stripereid
