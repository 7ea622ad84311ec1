#include <algorithm>
#include <limits>

#include "ops_internal.hpp"
#include "stripereid/ops.hpp"

namespace stripereid {

using detail::idx;

std::int64_t conv_output_extent(std::int64_t in, std::int64_t kernel, std::int64_t stride, std::int64_t pad) {
  if (stride <= 0 || pad < 0 || kernel <= 0) throw ShapeError("conv: stride/kernel must be positive and pad >= 0");
  const auto span = in + 2 * pad - kernel;
  if (span < 0) throw ShapeError("conv: kernel larger than padded input");
  return span / stride + 1;
}

namespace {

struct ConvGeometry {
  std::int64_t n, cin, h, w, cout, kh, kw, stride, pad, oh, ow;
  std::int64_t patch() const { return cin * kh * kw; }
  std::int64_t positions() const { return oh * ow; }
  bool pointwise() const { return kh == 1 && kw == 1 && stride == 1 && pad == 0; }
};

void im2col(const ConvGeometry& g, const double* image, double* col) {
  const auto positions = g.positions();
  for (std::int64_t c = 0; c < g.cin; ++c) {
    for (std::int64_t ky = 0; ky < g.kh; ++ky) {
      for (std::int64_t kx = 0; kx < g.kw; ++kx) {
        double* row = col + ((c * g.kh + ky) * g.kw + kx) * positions;
        for (std::int64_t oy = 0; oy < g.oh; ++oy) {
          const auto iy = oy * g.stride - g.pad + ky;
          double* dst = row + oy * g.ow;
          if (iy < 0 || iy >= g.h) {
            std::fill(dst, dst + g.ow, 0.0);
            continue;
          }
          const double* src = image + (c * g.h + iy) * g.w;
          for (std::int64_t ox = 0; ox < g.ow; ++ox) {
            const auto ix = ox * g.stride - g.pad + kx;
            dst[ox] = (ix >= 0 && ix < g.w) ? src[ix] : 0.0;
          }
        }
      }
    }
  }
}

void col2im_add(const ConvGeometry& g, const double* col, double* image) {
  const auto positions = g.positions();
  for (std::int64_t c = 0; c < g.cin; ++c) {
    for (std::int64_t ky = 0; ky < g.kh; ++ky) {
      for (std::int64_t kx = 0; kx < g.kw; ++kx) {
        const double* row = col + ((c * g.kh + ky) * g.kw + kx) * positions;
        for (std::int64_t oy = 0; oy < g.oh; ++oy) {
          const auto iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.h) continue;
          double* dst = image + (c * g.h + iy) * g.w;
          const double* src = row + oy * g.ow;
          for (std::int64_t ox = 0; ox < g.ow; ++ox) {
            const auto ix = ox * g.stride - g.pad + kx;
            if (ix >= 0 && ix < g.w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

void require_nchw(const Tensor& x, const char* op) {
  if (x.dim() != 4) throw ShapeError(std::string(op) + ": expected [n,c,h,w] input, got " + shape_to_string(x.shape()));
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& kernel, Conv2dParams params) {
  require_nchw(x, "conv2d");
  if (kernel.dim() != 4 || kernel.size(1) != x.size(1)) {
    throw ShapeError("conv2d: kernel " + shape_to_string(kernel.shape()) + " incompatible with input " +
                     shape_to_string(x.shape()));
  }
  ConvGeometry g{x.size(0), x.size(1), x.size(2), x.size(3), kernel.size(0), kernel.size(2), kernel.size(3),
                 params.stride, params.pad, 0, 0};
  g.oh = conv_output_extent(g.h, g.kh, g.stride, g.pad);
  g.ow = conv_output_extent(g.w, g.kw, g.stride, g.pad);

  const auto in_size = g.cin * g.h * g.w;
  const auto out_size = g.cout * g.positions();
  const auto col_size = g.patch() * g.positions();
  const auto xv = x.values();
  const auto kv = kernel.values();

  std::vector<double> out(idx(g.n * out_size));
  std::vector<double> cols;
  if (!g.pointwise()) cols.resize(idx(g.n * col_size));
  for (std::int64_t i = 0; i < g.n; ++i) {
    const double* col = xv.data() + i * in_size;
    if (!g.pointwise()) {
      im2col(g, xv.data() + i * in_size, cols.data() + i * col_size);
      col = cols.data() + i * col_size;
    }
    detail::gemm_nn(g.cout, g.positions(), g.patch(), kv.data(), col, out.data() + i * out_size, false);
  }

  Tensor result = make_tensor({g.n, g.cout, g.oh, g.ow}, std::move(out));
  if (Tape::should_record({&x, &kernel})) {
    Tape::active()->record(result, [ix = x.impl(), ik = kernel.impl(), g, cols = std::move(cols)](
                                        std::span<const double> grad) {
      const auto in_size = g.cin * g.h * g.w;
      const auto out_size = g.cout * g.positions();
      const auto col_size = g.patch() * g.positions();
      if (ik->requires_grad) {
        auto gk = ik->grad_buffer();
        for (std::int64_t i = 0; i < g.n; ++i) {
          const double* col = g.pointwise() ? ix->data.data() + i * in_size : cols.data() + i * col_size;
          detail::gemm_nt(g.cout, g.patch(), g.positions(), grad.data() + i * out_size, col, gk.data(), true);
        }
      }
      if (ix->requires_grad) {
        auto gx = ix->grad_buffer();
        std::vector<double> dcol(g.pointwise() ? 0 : idx(col_size));
        for (std::int64_t i = 0; i < g.n; ++i) {
          if (g.pointwise()) {
            detail::gemm_tn(g.patch(), g.positions(), g.cout, ik->data.data(), grad.data() + i * out_size,
                            gx.data() + i * in_size, true);
          } else {
            detail::gemm_tn(g.patch(), g.positions(), g.cout, ik->data.data(), grad.data() + i * out_size,
                            dcol.data(), false);
            col2im_add(g, dcol.data(), gx.data() + i * in_size);
          }
        }
      }
    });
  }
  return result;
}

Tensor maxpool2d(const Tensor& x, std::int64_t window, std::int64_t stride) {
  require_nchw(x, "maxpool2d");
  const auto n = x.size(0), c = x.size(1), h = x.size(2), w = x.size(3);
  if (window <= 0 || stride <= 0 || window > h || window > w) {
    throw ShapeError("maxpool2d: invalid window " + std::to_string(window) + " for input " + shape_to_string(x.shape()));
  }
  const auto oh = (h - window) / stride + 1;
  const auto ow = (w - window) / stride + 1;
  const auto xv = x.values();
  std::vector<double> out(idx(n * c * oh * ow));
  std::vector<std::int64_t> argmax(out.size());
  for (std::int64_t plane = 0; plane < n * c; ++plane) {
    const double* src = xv.data() + plane * h * w;
    for (std::int64_t oy = 0; oy < oh; ++oy) {
      for (std::int64_t ox = 0; ox < ow; ++ox) {
        double best = -std::numeric_limits<double>::infinity();
        std::int64_t best_at = -1;
        for (std::int64_t ky = 0; ky < window; ++ky) {
          for (std::int64_t kx = 0; kx < window; ++kx) {
            const auto at = (oy * stride + ky) * w + (ox * stride + kx);
            if (src[at] > best) {
              best = src[at];
              best_at = at;
            }
          }
        }
        const auto o = idx((plane * oh + oy) * ow + ox);
        out[o] = best;
        argmax[o] = plane * h * w + best_at;
      }
    }
  }
  Tensor result = make_tensor({n, c, oh, ow}, std::move(out));
  record_op(result, {&x}, [ix = x.impl(), argmax = std::move(argmax)](std::span<const double> g) {
    auto gx = ix->grad_buffer();
    for (std::size_t o = 0; o < g.size(); ++o) gx[idx(argmax[o])] += g[o];
  });
  return result;
}

Tensor global_avg_pool(const Tensor& x) {
  require_nchw(x, "global_avg_pool");
  const auto n = x.size(0), c = x.size(1), area = x.size(2) * x.size(3);
  const auto xv = x.values();
  std::vector<double> out(idx(n * c));
  for (std::int64_t plane = 0; plane < n * c; ++plane) {
    double s = 0.0;
    for (std::int64_t k = 0; k < area; ++k) s += xv[idx(plane * area + k)];
    out[idx(plane)] = s / static_cast<double>(area);
  }
  Tensor result = make_tensor({n, c}, std::move(out));
  record_op(result, {&x}, [ix = x.impl(), area](std::span<const double> g) {
    auto gx = ix->grad_buffer();
    const double scale = 1.0 / static_cast<double>(area);
    for (std::size_t plane = 0; plane < g.size(); ++plane) {
      for (std::int64_t k = 0; k < area; ++k) gx[plane * idx(area) + idx(k)] += g[plane] * scale;
    }
  });
  return result;
}

Tensor global_max_pool(const Tensor& x) {
  require_nchw(x, "global_max_pool");
  const auto n = x.size(0), c = x.size(1), area = x.size(2) * x.size(3);
  const auto xv = x.values();
  std::vector<double> out(idx(n * c));
  std::vector<std::int64_t> argmax(out.size());
  for (std::int64_t plane = 0; plane < n * c; ++plane) {
    std::int64_t best = plane * area;
    for (std::int64_t k = 1; k < area; ++k) {
      if (xv[idx(plane * area + k)] > xv[idx(best)]) best = plane * area + k;
    }
    out[idx(plane)] = xv[idx(best)];
    argmax[idx(plane)] = best;
  }
  Tensor result = make_tensor({n, c}, std::move(out));
  record_op(result, {&x}, [ix = x.impl(), argmax = std::move(argmax)](std::span<const double> g) {
    auto gx = ix->grad_buffer();
    for (std::size_t o = 0; o < g.size(); ++o) gx[idx(argmax[o])] += g[o];
  });
  return result;
}

}  // namespace stripereid
