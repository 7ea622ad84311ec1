#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "stripereid/tensor.hpp"

namespace stripereid::topdrop {

/// Extents of a single feature map.
struct FeatureShape {
  std::int64_t channels = 0;
  std::int64_t height = 0;
  std::int64_t width = 0;

  std::int64_t numel() const { return channels * height * width; }
  bool operator==(const FeatureShape&) const = default;
};

/// Per-location energy A[j,k] = sum_i |F[i,j,k]|^p of one feature map.
struct ActivationMap {
  std::int64_t height = 0;
  std::int64_t width = 0;
  std::vector<double> values;  // row-major height x width, all >= 0

  double at(std::int64_t row, std::int64_t col) const { return values[static_cast<std::size_t>(row * width + col)]; }
};

/// Mean activation of each feature-map row.
struct StripeRelevance {
  std::vector<double> rows;
};

enum class DropMode { top, random, none };

DropMode parse_drop_mode(std::string_view name);
std::string_view to_string(DropMode mode);

struct DropConfig {
  double height_ratio = 0.3;
  double p = 2.0;
  DropMode mode = DropMode::top;

  void validate() const;
};

/// Full-width horizontal-stripe mask over a c x h x w feature map.
class TopDropMask {
 public:
  TopDropMask(FeatureShape shape, std::vector<std::int64_t> dropped_rows);
  /// Mask that keeps everything.
  static TopDropMask keep_all(FeatureShape shape) { return TopDropMask(shape, {}); }

  const FeatureShape& shape() const noexcept { return shape_; }
  /// Ascending row indices that are zeroed.
  const std::vector<std::int64_t>& dropped_rows() const noexcept { return dropped_rows_; }
  bool keeps_row(std::int64_t row) const;
  /// Binary c x h x w expansion: 0 on dropped rows, 1 elsewhere.
  std::vector<double> expand() const;

  bool operator==(const TopDropMask&) const = default;

 private:
  FeatureShape shape_;
  std::vector<std::int64_t> dropped_rows_;
};

/// Number of rows dropped in top mode: max(1, round-half-up(h * ratio)).
std::int64_t top_drop_count(std::int64_t height, double height_ratio);
/// Height of the random contiguous block: floor(h * ratio).
std::int64_t block_drop_count(std::int64_t height, double height_ratio);

/// A = sum over channels of |F|^p for one feature map stored as c x h x w.
ActivationMap activation_map(std::span<const double> feature, FeatureShape shape, double p);
/// Convenience overload for a [c,h,w] tensor.
ActivationMap activation_map(const Tensor& feature, double p);

StripeRelevance stripe_relevance(const ActivationMap& activation);

/// Drops the top_drop_count() rows with the largest relevance; equal
/// relevance drops the lower row index first.
TopDropMask top_drop_mask(const StripeRelevance& relevance, const DropConfig& config, FeatureShape shape);

/// Convenience: one independent top mask per image of a [n,c,h,w] batch.
std::vector<TopDropMask> top_drop_masks(const Tensor& features, const DropConfig& config);

/// Random contiguous block of block_drop_count() rows whose start is uniform
/// over all valid positions. One such mask is shared by a whole batch.
TopDropMask batch_drop_mask(FeatureShape shape, double height_ratio, std::uint64_t seed);

/// G ⊙ expand(mask_i) per image. Either one mask per image or a single mask
/// broadcast to the batch.
Tensor apply_mask(const Tensor& g, std::span<const TopDropMask> masks);

}  // namespace stripereid::topdrop
