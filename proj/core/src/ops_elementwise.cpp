#include <cmath>

#include "ops_internal.hpp"
#include "stripereid/ops.hpp"

namespace stripereid {

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) + " vs " +
                     shape_to_string(b.shape()));
  }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  const auto x = a.values();
  const auto y = b.values();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
  Tensor result = make_tensor(a.shape(), std::move(out));
  record_op(result, {&a, &b}, [ia = a.impl(), ib = b.impl()](std::span<const double> g) {
    detail::accumulate(ia, g);
    detail::accumulate(ib, g);
  });
  return result;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  const auto x = a.values();
  const auto y = b.values();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i];
  Tensor result = make_tensor(a.shape(), std::move(out));
  record_op(result, {&a, &b}, [ia = a.impl(), ib = b.impl()](std::span<const double> g) {
    detail::accumulate(ia, g);
    if (ib->requires_grad) {
      auto gb = ib->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
  return result;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  const auto x = a.values();
  const auto y = b.values();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
  Tensor result = make_tensor(a.shape(), std::move(out));
  record_op(result, {&a, &b}, [ia = a.impl(), ib = b.impl()](std::span<const double> g) {
    if (ia->requires_grad) {
      auto ga = ia->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * ib->data[i];
    }
    if (ib->requires_grad) {
      auto gb = ib->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * ia->data[i];
    }
  });
  return result;
}

Tensor scalar_mul(const Tensor& a, double s) {
  const auto x = a.values();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * s;
  Tensor result = make_tensor(a.shape(), std::move(out));
  record_op(result, {&a}, [ia = a.impl(), s](std::span<const double> g) {
    auto ga = ia->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * s;
  });
  return result;
}

Tensor add_scalar(const Tensor& a, double s) {
  const auto x = a.values();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + s;
  Tensor result = make_tensor(a.shape(), std::move(out));
  record_op(result, {&a}, [ia = a.impl()](std::span<const double> g) { detail::accumulate(ia, g); });
  return result;
}

Tensor abs(const Tensor& a) {
  const auto x = a.values();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::fabs(x[i]);
  Tensor result = make_tensor(a.shape(), std::move(out));
  record_op(result, {&a}, [ia = a.impl()](std::span<const double> g) {
    auto ga = ia->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double v = ia->data[i];
      if (v > 0.0) {
        ga[i] += g[i];
      } else if (v < 0.0) {
        ga[i] -= g[i];
      }
    }
  });
  return result;
}

Tensor pow_scalar(const Tensor& a, double p) {
  const auto x = a.values();
  std::vector<double> out(x.size());
  const bool square = p == 2.0;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = square ? x[i] * x[i] : std::pow(x[i], p);
  Tensor result = make_tensor(a.shape(), std::move(out));
  record_op(result, {&a}, [ia = a.impl(), p, square](std::span<const double> g) {
    auto ga = ia->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double v = ia->data[i];
      const double d = square ? 2.0 * v : (p == 1.0 ? 1.0 : p * std::pow(v, p - 1.0));
      ga[i] += g[i] * d;
    }
  });
  return result;
}

Tensor relu(const Tensor& a) {
  const auto x = a.values();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
  Tensor result = make_tensor(a.shape(), std::move(out));
  record_op(result, {&a}, [ia = a.impl()](std::span<const double> g) {
    auto ga = ia->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (ia->data[i] > 0.0) ga[i] += g[i];
    }
  });
  return result;
}

Tensor add_channel_bias(const Tensor& x, const Tensor& bias) {
  if (x.dim() != 2 && x.dim() != 4) throw ShapeError("add_channel_bias: expected [n,c] or [n,c,h,w] input");
  const auto n = x.size(0);
  const auto c = x.size(1);
  if (bias.shape() != Shape{c}) throw ShapeError("add_channel_bias: bias must have shape [c]");
  const std::int64_t inner = x.dim() == 4 ? x.size(2) * x.size(3) : 1;
  const auto xv = x.values();
  const auto bv = bias.values();
  std::vector<double> out(xv.size());
  for (std::int64_t i = 0; i < n; ++i) {
    for (std::int64_t ch = 0; ch < c; ++ch) {
      const auto base = static_cast<std::size_t>((i * c + ch) * inner);
      for (std::int64_t k = 0; k < inner; ++k) out[base + k] = xv[base + k] + bv[ch];
    }
  }
  Tensor result = make_tensor(x.shape(), std::move(out));
  record_op(result, {&x, &bias}, [ix = x.impl(), ib = bias.impl(), n, c, inner](std::span<const double> g) {
    detail::accumulate(ix, g);
    if (ib->requires_grad) {
      auto gb = ib->grad_buffer();
      for (std::int64_t i = 0; i < n; ++i) {
        for (std::int64_t ch = 0; ch < c; ++ch) {
          const auto base = static_cast<std::size_t>((i * c + ch) * inner);
          double s = 0.0;
          for (std::int64_t k = 0; k < inner; ++k) s += g[base + k];
          gb[ch] += s;
        }
      }
    }
  });
  return result;
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (const double v : a.values()) s += v;
  Tensor result = make_tensor({1}, {s});
  record_op(result, {&a}, [ia = a.impl()](std::span<const double> g) {
    auto ga = ia->grad_buffer();
    for (auto& v : ga) v += g[0];
  });
  return result;
}

Tensor mean(const Tensor& a) { return scalar_mul(sum(a), 1.0 / static_cast<double>(a.numel())); }

Tensor weighted_sum(const Tensor& a, std::span<const double> weights) {
  const auto x = a.values();
  if (weights.size() != x.size()) throw ShapeError("weighted_sum: weight count mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * weights[i];
  Tensor result = make_tensor({1}, {s});
  record_op(result, {&a},
            [ia = a.impl(), w = std::vector<double>(weights.begin(), weights.end())](std::span<const double> g) {
              auto ga = ia->grad_buffer();
              for (std::size_t i = 0; i < w.size(); ++i) ga[i] += g[0] * w[i];
            });
  return result;
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw ShapeError("reshape: cannot view " + shape_to_string(a.shape()) + " as " + shape_to_string(shape));
  }
  const auto x = a.values();
  Tensor result = make_tensor(std::move(shape), std::vector<double>(x.begin(), x.end()));
  record_op(result, {&a}, [ia = a.impl()](std::span<const double> g) { detail::accumulate(ia, g); });
  return result;
}

Tensor concat_columns(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat_columns: no inputs");
  const auto n = parts[0].size(0);
  std::int64_t total = 0;
  std::vector<std::int64_t> widths;
  for (const auto& p : parts) {
    if (p.dim() != 2 || p.size(0) != n) throw ShapeError("concat_columns: inputs must be [n, d_i] with equal n");
    widths.push_back(p.size(1));
    total += p.size(1);
  }
  std::vector<double> out(static_cast<std::size_t>(n * total));
  std::int64_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto v = parts[k].values();
    for (std::int64_t i = 0; i < n; ++i) {
      for (std::int64_t j = 0; j < widths[k]; ++j) {
        out[static_cast<std::size_t>(i * total + offset + j)] = v[static_cast<std::size_t>(i * widths[k] + j)];
      }
    }
    offset += widths[k];
  }
  Tensor result = make_tensor({n, total}, std::move(out));
  if (Tape::should_record(parts)) {
    std::vector<std::shared_ptr<detail::TensorImpl>> impls;
    for (const auto& p : parts) impls.push_back(p.impl());
    Tape::active()->record(result, [impls, widths, n, total](std::span<const double> g) {
      std::int64_t off = 0;
      for (std::size_t k = 0; k < impls.size(); ++k) {
        if (impls[k]->requires_grad) {
          auto gk = impls[k]->grad_buffer();
          for (std::int64_t i = 0; i < n; ++i) {
            for (std::int64_t j = 0; j < widths[k]; ++j) {
              gk[static_cast<std::size_t>(i * widths[k] + j)] += g[static_cast<std::size_t>(i * total + off + j)];
            }
          }
        }
        off += widths[k];
      }
    });
  }
  return result;
}

}  // namespace stripereid
