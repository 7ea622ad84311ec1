#pragma once

#include <memory>
#include <span>

#include "stripereid/tensor.hpp"

namespace stripereid::detail {

/// grad(impl) += g when impl participates in differentiation.
inline void accumulate(const std::shared_ptr<TensorImpl>& impl, std::span<const double> g) {
  if (!impl->requires_grad) return;
  auto buf = impl->grad_buffer();
  for (std::size_t i = 0; i < g.size(); ++i) buf[i] += g[i];
}

inline std::size_t idx(std::int64_t i) { return static_cast<std::size_t>(i); }

}  // namespace stripereid::detail
