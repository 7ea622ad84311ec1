#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>

#include "stripereid/network.hpp"
#include "stripereid/tensor.hpp"

namespace stripereid::net {

/// Mean over the batch of -sum_k q_k log softmax_k with
/// q = (1 - epsilon) * onehot(label) + epsilon / K.
Tensor ce_label_smoothing(const Tensor& logits, std::span<const std::int64_t> labels, double epsilon);

/// Batch-hard triplet loss on Euclidean distances.
///
/// For every anchor, the farthest same-identity sample and the nearest
/// other-identity sample are mined (equal distances pick the lowest index);
/// the loss is mean_a max(0, margin + d(a, p*) - d(a, n*)). Every identity
/// must appear at least twice and at least two identities must be present.
Tensor triplet_batch_hard(const Tensor& features, std::span<const std::int64_t> ids, double margin);

struct LossConfig {
  double margin = 0.3;
  double epsilon = 0.1;
  /// Multiplier per stream (global, drop, reg); inactive streams are skipped.
  std::array<double, 3> stream_weights{1.0, 1.0, 1.0};
};

struct LossBreakdown {
  Tensor total;
  std::array<std::optional<double>, 3> cross_entropy;
  std::array<std::optional<double>, 3> triplet;
  std::size_t ce_terms = 0;
  std::size_t triplet_terms = 0;

  /// Weighted CE + triplet value of one stream, if active.
  std::optional<double> stream_loss(Stream s) const;
};

/// Sum over active streams of weight * (CE on logits + triplet on the
/// pre-neck feature).
LossBreakdown total_loss(const ForwardOutputs& outputs, std::span<const std::int64_t> labels, const LossConfig& config);

}  // namespace stripereid::net
