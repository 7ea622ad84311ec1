#include "stripereid/topdrop.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "stripereid/ops.hpp"
#include "stripereid/rng.hpp"

namespace stripereid::topdrop {

namespace {

std::size_t idx(std::int64_t i) { return static_cast<std::size_t>(i); }

void validate_shape(FeatureShape shape) {
  if (shape.channels < 1 || shape.height < 1 || shape.width < 1) {
    throw ShapeError("feature shape extents must be >= 1");
  }
}

}  // namespace

DropMode parse_drop_mode(std::string_view name) {
  if (name == "top") return DropMode::top;
  if (name == "random") return DropMode::random;
  if (name == "none") return DropMode::none;
  throw std::invalid_argument("unknown drop mode '" + std::string(name) + "'");
}

std::string_view to_string(DropMode mode) {
  switch (mode) {
    case DropMode::top: return "top";
    case DropMode::random: return "random";
    case DropMode::none: return "none";
  }
  return "?";
}

void DropConfig::validate() const {
  if (!(height_ratio > 0.0 && height_ratio <= 1.0)) throw std::invalid_argument("height_ratio must be in (0, 1]");
  if (!(p >= 1.0)) throw std::invalid_argument("activation exponent p must be >= 1");
}

TopDropMask::TopDropMask(FeatureShape shape, std::vector<std::int64_t> dropped_rows)
    : shape_(shape), dropped_rows_(std::move(dropped_rows)) {
  validate_shape(shape_);
  std::sort(dropped_rows_.begin(), dropped_rows_.end());
  if (std::adjacent_find(dropped_rows_.begin(), dropped_rows_.end()) != dropped_rows_.end()) {
    throw std::invalid_argument("TopDropMask: duplicate dropped row");
  }
  for (const auto r : dropped_rows_) {
    if (r < 0 || r >= shape_.height) throw std::out_of_range("TopDropMask: row " + std::to_string(r) + " out of range");
  }
}

bool TopDropMask::keeps_row(std::int64_t row) const {
  return !std::binary_search(dropped_rows_.begin(), dropped_rows_.end(), row);
}

std::vector<double> TopDropMask::expand() const {
  std::vector<double> mask(idx(shape_.numel()), 1.0);
  for (std::int64_t c = 0; c < shape_.channels; ++c) {
    for (const auto r : dropped_rows_) {
      const auto base = idx((c * shape_.height + r) * shape_.width);
      std::fill_n(mask.begin() + static_cast<std::ptrdiff_t>(base), shape_.width, 0.0);
    }
  }
  return mask;
}

std::int64_t top_drop_count(std::int64_t height, double height_ratio) {
  if (height < 1) throw std::invalid_argument("height must be >= 1");
  // The small slack keeps products such as 0.1 * 5 (= 0.5 - 1 ulp) on the
  // "half" side of the rounding boundary.
  const auto rounded = static_cast<std::int64_t>(std::floor(static_cast<double>(height) * height_ratio + 0.5 + 1e-9));
  return std::max<std::int64_t>(1, rounded);
}

std::int64_t block_drop_count(std::int64_t height, double height_ratio) {
  if (height < 1) throw std::invalid_argument("height must be >= 1");
  return static_cast<std::int64_t>(std::floor(static_cast<double>(height) * height_ratio + 1e-9));
}

ActivationMap activation_map(std::span<const double> feature, FeatureShape shape, double p) {
  validate_shape(shape);
  if (static_cast<std::int64_t>(feature.size()) != shape.numel()) throw ShapeError("activation_map: size mismatch");
  if (!(p >= 1.0)) throw std::invalid_argument("activation_map: p must be >= 1");
  ActivationMap a{shape.height, shape.width, std::vector<double>(idx(shape.height * shape.width), 0.0)};
  const auto plane = shape.height * shape.width;
  for (std::int64_t c = 0; c < shape.channels; ++c) {
    for (std::int64_t k = 0; k < plane; ++k) {
      const double v = feature[idx(c * plane + k)];
      if (!std::isfinite(v)) throw NumericError("activation_map: non-finite feature value");
      const double m = std::fabs(v);
      a.values[idx(k)] += p == 2.0 ? m * m : std::pow(m, p);
    }
  }
  return a;
}

ActivationMap activation_map(const Tensor& feature, double p) {
  if (feature.dim() != 3) throw ShapeError("activation_map: expected a [c,h,w] tensor");
  return activation_map(feature.values(), {feature.size(0), feature.size(1), feature.size(2)}, p);
}

StripeRelevance stripe_relevance(const ActivationMap& activation) {
  StripeRelevance r{std::vector<double>(idx(activation.height), 0.0)};
  for (std::int64_t j = 0; j < activation.height; ++j) {
    double s = 0.0;
    for (std::int64_t k = 0; k < activation.width; ++k) s += activation.at(j, k);
    r.rows[idx(j)] = s / static_cast<double>(activation.width);
  }
  return r;
}

TopDropMask top_drop_mask(const StripeRelevance& relevance, const DropConfig& config, FeatureShape shape) {
  config.validate();
  validate_shape(shape);
  const auto h = shape.height;
  if (static_cast<std::int64_t>(relevance.rows.size()) != h) throw ShapeError("top_drop_mask: relevance length != h");
  const auto count = top_drop_count(h, config.height_ratio);
  if (count >= h) {
    throw std::invalid_argument("top_drop_mask: dropping " + std::to_string(count) + " of " + std::to_string(h) +
                                " rows would remove the whole map");
  }
  std::vector<std::int64_t> order(idx(h));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::int64_t a, std::int64_t b) {
    return relevance.rows[idx(a)] > relevance.rows[idx(b)];
  });
  order.resize(idx(count));
  return TopDropMask(shape, std::move(order));
}

std::vector<TopDropMask> top_drop_masks(const Tensor& features, const DropConfig& config) {
  if (features.dim() != 4) throw ShapeError("top_drop_masks: expected [n,c,h,w] features");
  const FeatureShape shape{features.size(1), features.size(2), features.size(3)};
  const auto v = features.values();
  std::vector<TopDropMask> masks;
  masks.reserve(idx(features.size(0)));
  for (std::int64_t i = 0; i < features.size(0); ++i) {
    const auto image = v.subspan(idx(i * shape.numel()), idx(shape.numel()));
    masks.push_back(top_drop_mask(stripe_relevance(activation_map(image, shape, config.p)), config, shape));
  }
  return masks;
}

TopDropMask batch_drop_mask(FeatureShape shape, double height_ratio, std::uint64_t seed) {
  validate_shape(shape);
  if (!(height_ratio > 0.0 && height_ratio <= 1.0)) throw std::invalid_argument("height_ratio must be in (0, 1]");
  const auto block = block_drop_count(shape.height, height_ratio);
  if (block < 1) throw std::invalid_argument("batch_drop_mask: block height rounds to zero rows");
  if (block >= shape.height) throw std::invalid_argument("batch_drop_mask: block covers the whole map");
  SplitMix64 rng(seed);
  const auto start = static_cast<std::int64_t>(rng.uniform_int(static_cast<std::uint64_t>(shape.height - block + 1)));
  std::vector<std::int64_t> rows(idx(block));
  std::iota(rows.begin(), rows.end(), start);
  return TopDropMask(shape, std::move(rows));
}

Tensor apply_mask(const Tensor& g, std::span<const TopDropMask> masks) {
  if (g.dim() != 4) throw ShapeError("apply_mask: expected [n,c,h,w] input");
  const auto n = g.size(0);
  const FeatureShape shape{g.size(1), g.size(2), g.size(3)};
  if (masks.size() != 1 && static_cast<std::int64_t>(masks.size()) != n) {
    throw ShapeError("apply_mask: need one mask per image or a single shared mask");
  }
  std::vector<double> full(idx(n * shape.numel()));
  for (std::int64_t i = 0; i < n; ++i) {
    const auto& m = masks.size() == 1 ? masks[0] : masks[idx(i)];
    if (m.shape() != shape) throw ShapeError("apply_mask: mask shape does not match feature shape");
    const auto e = m.expand();
    std::copy(e.begin(), e.end(), full.begin() + static_cast<std::ptrdiff_t>(i * shape.numel()));
  }
  return mul(g, Tensor(g.shape(), std::move(full)));
}

}  // namespace stripereid::topdrop
