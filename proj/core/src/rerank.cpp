#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "stripereid/eval.hpp"

namespace stripereid::eval {

namespace {

std::size_t idx(std::int64_t i) { return static_cast<std::size_t>(i); }

using Ranking = std::vector<std::vector<std::int64_t>>;

/// Members c of the first k + 1 neighbours of i that also hold i among
/// their own first k + 1 neighbours.
std::vector<std::int64_t> k_reciprocal(const Ranking& ranking, std::int64_t i, std::int64_t k) {
  std::vector<std::int64_t> out;
  const auto& forward = ranking[idx(i)];
  for (std::int64_t a = 0; a <= k; ++a) {
    const auto c = forward[idx(a)];
    const auto& back = ranking[idx(c)];
    if (std::find(back.begin(), back.begin() + k + 1, i) != back.begin() + k + 1) out.push_back(c);
  }
  return out;
}

std::int64_t half_round_even(std::int64_t k) {
  return static_cast<std::int64_t>(std::nearbyint(static_cast<double>(k) / 2.0));
}

}  // namespace

void RerankParams::validate(std::int64_t total) const {
  if (k1 < 1 || k2 < 1) throw std::invalid_argument("rerank: k1 and k2 must be >= 1");
  if (k2 > k1) throw std::invalid_argument("rerank: k2 must not exceed k1");
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw std::invalid_argument("rerank: lambda must be in [0, 1]");
  if (k1 >= total) {
    throw std::invalid_argument("rerank: k1 = " + std::to_string(k1) + " needs more than " + std::to_string(k1) +
                                " query and gallery samples, got " + std::to_string(total));
  }
}

RerankParams RerankParams::scaled_for(std::int64_t gallery_size) const {
  RerankParams p = *this;
  p.k1 = std::max<std::int64_t>(1, std::min(p.k1, gallery_size / 2));
  p.k2 = std::min(p.k2, p.k1);
  return p;
}

DistanceMatrix rerank(const EmbeddingSet& query, const EmbeddingSet& gallery, const RerankParams& params) {
  query.validate();
  gallery.validate();
  if (query.dim != gallery.dim) throw std::invalid_argument("rerank: query and gallery dimensions differ");
  const auto nq = query.size();
  const auto n = nq + gallery.size();
  params.validate(n);
  auto row = [&](std::int64_t i) { return i < nq ? query.row(i) : gallery.row(i - nq); };

  std::vector<double> dist(idx(n * n), 0.0);
  for (std::int64_t i = 0; i < n; ++i) {
    for (std::int64_t j = i + 1; j < n; ++j) {
      const auto a = row(i);
      const auto b = row(j);
      double s = 0.0;
      for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
      dist[idx(i * n + j)] = dist[idx(j * n + i)] = s;
    }
  }
  for (std::int64_t i = 0; i < n; ++i) {
    const auto begin = dist.begin() + i * n;
    const double m = *std::max_element(begin, begin + n);
    if (m > 0.0) std::transform(begin, begin + n, begin, [m](double v) { return v / m; });
  }
  auto d = [&](std::int64_t i, std::int64_t j) { return dist[idx(i * n + j)]; };

  Ranking ranking(idx(n));
  for (std::int64_t i = 0; i < n; ++i) {
    auto& r = ranking[idx(i)];
    r.resize(idx(n));
    std::iota(r.begin(), r.end(), 0);
    std::stable_sort(r.begin(), r.end(), [&](std::int64_t a, std::int64_t b) { return d(i, a) < d(i, b); });
  }

  std::vector<double> v(idx(n * n), 0.0);
  const auto half = half_round_even(params.k1);
  for (std::int64_t i = 0; i < n; ++i) {
    const auto base = k_reciprocal(ranking, i, params.k1);
    std::vector<std::int64_t> expanded = base;
    for (const auto c : base) {
      const auto candidate = k_reciprocal(ranking, c, half);
      const auto overlap = std::count_if(candidate.begin(), candidate.end(), [&](std::int64_t x) {
        return std::find(base.begin(), base.end(), x) != base.end();
      });
      if (static_cast<double>(overlap) > 2.0 / 3.0 * static_cast<double>(candidate.size())) {
        expanded.insert(expanded.end(), candidate.begin(), candidate.end());
      }
    }
    std::sort(expanded.begin(), expanded.end());
    expanded.erase(std::unique(expanded.begin(), expanded.end()), expanded.end());
    double total = 0.0;
    for (const auto j : expanded) total += std::exp(-d(i, j));
    for (const auto j : expanded) v[idx(i * n + j)] = std::exp(-d(i, j)) / total;
  }

  if (params.k2 > 1) {
    std::vector<double> expanded(idx(n * n), 0.0);
    for (std::int64_t i = 0; i < n; ++i) {
      for (std::int64_t a = 0; a < params.k2; ++a) {
        const auto nb = ranking[idx(i)][idx(a)];
        for (std::int64_t j = 0; j < n; ++j) expanded[idx(i * n + j)] += v[idx(nb * n + j)];
      }
      for (std::int64_t j = 0; j < n; ++j) expanded[idx(i * n + j)] /= static_cast<double>(params.k2);
    }
    v = std::move(expanded);
  }

  DistanceMatrix out{nq, gallery.size(), std::vector<double>(idx(nq * gallery.size()))};
  for (std::int64_t i = 0; i < nq; ++i) {
    for (std::int64_t g = 0; g < gallery.size(); ++g) {
      const auto j = nq + g;
      double lo = 0.0;
      double hi = 0.0;
      for (std::int64_t k = 0; k < n; ++k) {
        const double a = v[idx(i * n + k)];
        const double b = v[idx(j * n + k)];
        lo += std::min(a, b);
        hi += std::max(a, b);
      }
      const double jaccard = hi > 0.0 ? 1.0 - lo / hi : 1.0;
      out.at(i, g) = (1.0 - params.lambda) * jaccard + params.lambda * d(i, j);
    }
  }
  return out;
}

}  // namespace stripereid::eval
