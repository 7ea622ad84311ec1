#include "stripereid/losses.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "ops_internal.hpp"
#include "stripereid/ops.hpp"

namespace stripereid::net {

using detail::idx;

Tensor ce_label_smoothing(const Tensor& logits, std::span<const std::int64_t> labels, double epsilon) {
  if (!(epsilon >= 0.0 && epsilon < 1.0)) throw std::invalid_argument("label smoothing epsilon must be in [0, 1)");
  if (logits.dim() != 2) throw ShapeError("ce_label_smoothing: expected [n,k] logits");
  const auto n = logits.size(0);
  const auto k = logits.size(1);
  if (static_cast<std::int64_t>(labels.size()) != n) throw ShapeError("ce_label_smoothing: label count mismatch");
  std::vector<double> weights(idx(n * k), -epsilon / static_cast<double>(k) / static_cast<double>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    const auto y = labels[idx(i)];
    if (y < 0 || y >= k) throw std::out_of_range("ce_label_smoothing: label " + std::to_string(y) + " out of range");
    weights[idx(i * k + y)] -= (1.0 - epsilon) / static_cast<double>(n);
  }
  return weighted_sum(log_softmax(logits), weights);
}

Tensor triplet_batch_hard(const Tensor& features, std::span<const std::int64_t> ids, double margin) {
  if (features.dim() != 2) throw ShapeError("triplet_batch_hard: expected [n,d] features");
  const auto n = features.size(0);
  const auto d = features.size(1);
  if (static_cast<std::int64_t>(ids.size()) != n) throw ShapeError("triplet_batch_hard: id count mismatch");

  const auto fv = features.values();
  constexpr double kMinSquared = 1e-12;
  std::vector<double> sq(idx(n * n), 0.0), dist(idx(n * n), 0.0);
  for (std::int64_t i = 0; i < n; ++i) {
    for (std::int64_t j = i + 1; j < n; ++j) {
      double s = 0.0;
      for (std::int64_t k = 0; k < d; ++k) {
        const double diff = fv[idx(i * d + k)] - fv[idx(j * d + k)];
        s += diff * diff;
      }
      sq[idx(i * n + j)] = sq[idx(j * n + i)] = s;
      dist[idx(i * n + j)] = dist[idx(j * n + i)] = std::sqrt(std::max(s, kMinSquared));
    }
  }

  std::vector<std::int64_t> hard_pos(idx(n), -1), hard_neg(idx(n), -1);
  std::vector<double> per_anchor(idx(n), 0.0);
  for (std::int64_t a = 0; a < n; ++a) {
    for (std::int64_t j = 0; j < n; ++j) {
      if (j == a) continue;
      const double dj = dist[idx(a * n + j)];
      if (ids[idx(j)] == ids[idx(a)]) {
        if (hard_pos[idx(a)] < 0 || dj > dist[idx(a * n + hard_pos[idx(a)])]) hard_pos[idx(a)] = j;
      } else if (hard_neg[idx(a)] < 0 || dj < dist[idx(a * n + hard_neg[idx(a)])]) {
        hard_neg[idx(a)] = j;
      }
    }
    if (hard_pos[idx(a)] < 0) {
      throw std::invalid_argument("triplet_batch_hard: identity " + std::to_string(ids[idx(a)]) +
                                  " has a single instance in the batch");
    }
    if (hard_neg[idx(a)] < 0) throw std::invalid_argument("triplet_batch_hard: batch contains a single identity");
    per_anchor[idx(a)] = std::max(0.0, margin + dist[idx(a * n + hard_pos[idx(a)])] - dist[idx(a * n + hard_neg[idx(a)])]);
  }
  double total = 0.0;
  for (const double l : per_anchor) total += l;
  Tensor result = make_tensor({1}, {total / static_cast<double>(n)});

  record_op(result, {&features},
            [ifeat = features.impl(), n, d, sq = std::move(sq), dist = std::move(dist), hard_pos = std::move(hard_pos),
             hard_neg = std::move(hard_neg), per_anchor = std::move(per_anchor)](std::span<const double> g) {
              auto gf = ifeat->grad_buffer();
              const auto& f = ifeat->data;
              const double scale = g[0] / static_cast<double>(n);
              // d/dx_i of ||x_i - x_j|| = (x_i - x_j) / ||x_i - x_j||, zero inside the clamp.
              auto push = [&](std::int64_t i, std::int64_t j, double coeff) {
                if (sq[idx(i * n + j)] < kMinSquared) return;
                const double w = coeff / dist[idx(i * n + j)];
                for (std::int64_t k = 0; k < d; ++k) {
                  const double diff = f[idx(i * d + k)] - f[idx(j * d + k)];
                  gf[idx(i * d + k)] += w * diff;
                  gf[idx(j * d + k)] -= w * diff;
                }
              };
              for (std::int64_t a = 0; a < n; ++a) {
                if (per_anchor[idx(a)] <= 0.0) continue;
                push(a, hard_pos[idx(a)], scale);
                push(a, hard_neg[idx(a)], -scale);
              }
            });
  return result;
}

std::optional<double> LossBreakdown::stream_loss(Stream s) const {
  const auto i = static_cast<std::size_t>(s);
  if (!cross_entropy[i]) return std::nullopt;
  return *cross_entropy[i] + *triplet[i];
}

LossBreakdown total_loss(const ForwardOutputs& outputs, std::span<const std::int64_t> labels, const LossConfig& config) {
  LossBreakdown out;
  std::vector<Tensor> terms;
  for (const auto s : kAllStreams) {
    const auto i = static_cast<std::size_t>(s);
    if (!outputs.streams[i]) continue;
    const auto& so = *outputs.streams[i];
    const Tensor ce = ce_label_smoothing(so.logits, labels, config.epsilon);
    const Tensor tri = triplet_batch_hard(so.triplet_feature, labels, config.margin);
    const double w = config.stream_weights[i];
    out.cross_entropy[i] = w * ce.item();
    out.triplet[i] = w * tri.item();
    ++out.ce_terms;
    ++out.triplet_terms;
    terms.push_back(scalar_mul(add(ce, tri), w));
  }
  if (terms.empty()) throw std::invalid_argument("total_loss: no active stream");
  Tensor total = terms[0];
  for (std::size_t k = 1; k < terms.size(); ++k) total = add(total, terms[k]);
  out.total = total;
  return out;
}

}  // namespace stripereid::net
