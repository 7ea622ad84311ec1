#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "stripereid/ops.hpp"
#include "stripereid/rng.hpp"
#include "stripereid/tensor.hpp"

namespace stripereid::testing {

using LossFn = std::function<Tensor(const std::vector<Tensor>&)>;

struct GradCheck {
  double max_rel_error = 0.0;
  std::size_t coordinates = 0;
};

/// Reduces any tensor to a scalar with fixed random weights so every output
/// element contributes a distinct gradient.
inline Tensor project(const Tensor& t, std::uint64_t seed) {
  SplitMix64 rng(seed);
  std::vector<double> w(static_cast<std::size_t>(t.numel()));
  for (auto& v : w) v = rng.uniform(-1.0, 1.0);
  return weighted_sum(t, w);
}

/// Compares tape gradients with central differences.
///
/// The error of each input is ||analytic - numeric|| / max(||analytic||,
/// ||numeric||, floor) over the checked coordinates; the worst input is
/// reported. With max_coords > 0 a seeded subset of coordinates is checked.
inline GradCheck check_gradients(const LossFn& fn, std::vector<Tensor> inputs, double h = 1e-6,
                                 std::size_t max_coords = 0, std::uint64_t seed = 7, double floor = 1e-7) {
  for (auto& t : inputs) t.set_requires_grad(true);
  Tape tape;
  Tensor loss;
  {
    Tape::Scope scope(tape);
    loss = fn(inputs);
  }
  tape.backward(loss);

  GradCheck result;
  SplitMix64 rng(seed);
  for (auto& input : inputs) {
    const auto n = static_cast<std::size_t>(input.numel());
    std::vector<std::size_t> coords(n);
    for (std::size_t i = 0; i < n; ++i) coords[i] = i;
    if (max_coords > 0 && max_coords < n) {
      for (std::size_t i = 0; i < max_coords; ++i) {
        std::swap(coords[i], coords[i + static_cast<std::size_t>(rng.uniform_int(n - i))]);
      }
      coords.resize(max_coords);
    }
    const std::vector<double> analytic_all = input.has_grad()
                                                 ? std::vector<double>(input.grad().begin(), input.grad().end())
                                                 : std::vector<double>(n, 0.0);
    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    auto values = input.mutable_values();
    for (const auto i : coords) {
      const double orig = values[i];
      values[i] = orig + h;
      const double up = fn(inputs).item();
      values[i] = orig - h;
      const double down = fn(inputs).item();
      values[i] = orig;
      const double numeric = (up - down) / (2.0 * h);
      const double analytic = analytic_all[i];
      diff2 += (analytic - numeric) * (analytic - numeric);
      a2 += analytic * analytic;
      n2 += numeric * numeric;
    }
    const double denom = std::max({std::sqrt(a2), std::sqrt(n2), floor});
    result.max_rel_error = std::max(result.max_rel_error, std::sqrt(diff2) / denom);
    result.coordinates += coords.size();
  }
  return result;
}

/// Standard-normal tensor whose entries all have magnitude >= min_abs, so
/// that kinks at zero stay far from the finite-difference stencil.
inline Tensor randn_away_from_zero(const Shape& shape, std::uint64_t seed, double min_abs = 1e-2) {
  SplitMix64 rng(seed);
  std::vector<double> v(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& x : v) {
    do {
      x = rng.normal();
    } while (std::fabs(x) < min_abs);
  }
  return Tensor(shape, std::move(v));
}

}  // namespace stripereid::testing
