#include <gtest/gtest.h>

#include <cmath>

#include "gradient_suite.hpp"
#include "stripereid/losses.hpp"

using namespace stripereid;
using namespace stripereid::net;
namespace support = stripereid::testing;

namespace {

double smoothed_ce(const Tensor& logits, const std::vector<std::int64_t>& labels, double eps) {
  const auto n = logits.size(0), k = logits.size(1);
  double total = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    double z = 0.0;
    for (std::int64_t j = 0; j < k; ++j) z += std::exp(logits[i * k + j]);
    for (std::int64_t j = 0; j < k; ++j) {
      const double q = (j == labels[static_cast<std::size_t>(i)] ? 1.0 - eps : 0.0) + eps / static_cast<double>(k);
      total -= q * (logits[i * k + j] - std::log(z));
    }
  }
  return total / static_cast<double>(n);
}

double hard_triplet(const Tensor& f, const std::vector<std::int64_t>& ids, double margin) {
  const auto n = f.size(0), d = f.size(1);
  auto dist = [&](std::int64_t a, std::int64_t b) {
    double s = 0.0;
    for (std::int64_t j = 0; j < d; ++j) s += (f[a * d + j] - f[b * d + j]) * (f[a * d + j] - f[b * d + j]);
    return std::sqrt(s);
  };
  double total = 0.0;
  for (std::int64_t a = 0; a < n; ++a) {
    double pos = 0.0, neg = 1e300;
    for (std::int64_t b = 0; b < n; ++b) {
      if (b == a) continue;
      if (ids[static_cast<std::size_t>(b)] == ids[static_cast<std::size_t>(a)]) pos = std::max(pos, dist(a, b));
      else neg = std::min(neg, dist(a, b));
    }
    total += std::max(0.0, margin + pos - neg);
  }
  return total / static_cast<double>(n);
}

}  // namespace

TEST(CrossEntropy, MatchesDirectFormula) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const Tensor logits = scalar_mul(Tensor::randn({5, 4}, s), 3.0);
    const std::vector<std::int64_t> labels{0, 3, 1, 1, 2};
    EXPECT_NEAR(ce_label_smoothing(logits, labels, 0.1).item(), smoothed_ce(logits, labels, 0.1), 1e-12);
    EXPECT_NEAR(ce_label_smoothing(logits, labels, 0.0).item(), smoothed_ce(logits, labels, 0.0), 1e-12);
  }
}

TEST(CrossEntropy, RejectsBadLabels) {
  const Tensor logits = Tensor::zeros({2, 3});
  EXPECT_THROW(ce_label_smoothing(logits, std::vector<std::int64_t>{0, 3}, 0.1), std::out_of_range);
  EXPECT_THROW(ce_label_smoothing(logits, std::vector<std::int64_t>{0}, 0.1), ShapeError);
}

TEST(Triplet, MatchesBruteForceMining) {
  const std::vector<std::int64_t> ids{4, 4, 7, 7, 7, 9, 9, 4};
  for (std::uint64_t s = 0; s < 20; ++s) {
    const Tensor f = Tensor::randn({8, 5}, s);
    EXPECT_NEAR(triplet_batch_hard(f, ids, 0.3).item(), hard_triplet(f, ids, 0.3), 1e-12);
  }
}

TEST(Triplet, ZeroWhenClustersAreSeparated) {
  const Tensor f({4, 1}, {0.0, 0.1, 10.0, 10.1});
  EXPECT_EQ(triplet_batch_hard(f, std::vector<std::int64_t>{1, 1, 2, 2}, 0.3).item(), 0.0);
}

TEST(Triplet, NeedsPairsAndNegatives) {
  const Tensor f = Tensor::randn({3, 2}, 1);
  EXPECT_THROW(triplet_batch_hard(f, std::vector<std::int64_t>{1, 1, 2}, 0.3), std::invalid_argument);
  EXPECT_THROW(triplet_batch_hard(f, std::vector<std::int64_t>{1, 1, 1}, 0.3), std::invalid_argument);
}

TEST(TotalLoss, SumsActiveStreams) {
  const std::vector<std::int64_t> labels{0, 0, 1, 1, 2, 2};
  for (const auto v : {Variant::full, Variant::no_drop, Variant::no_reg, Variant::baseline_bdb}) {
    Model model(support::tiny_model_config(v, 2));
    const auto out = model.forward(Tensor::randn({6, 3, 16, 8}, 3), 1);
    const LossConfig cfg{0.3, 0.1, {1.0, 0.5, 2.0}};
    const auto loss = total_loss(out, labels, cfg);
    const std::size_t active = v == Variant::full || v == Variant::baseline_bdb ? 3 : 2;
    EXPECT_EQ(loss.ce_terms, active);
    EXPECT_EQ(loss.triplet_terms, active);
    double sum = 0.0;
    for (const auto s : kAllStreams) {
      EXPECT_EQ(loss.stream_loss(s).has_value(), stream_active(v, s));
      if (!stream_active(v, s)) continue;
      const auto& st = out.at(s);
      const double w = cfg.stream_weights[static_cast<std::size_t>(s)];
      const double expect = w * (smoothed_ce(st.logits, labels, cfg.epsilon) + hard_triplet(st.triplet_feature, labels, cfg.margin));
      EXPECT_NEAR(*loss.stream_loss(s), expect, 1e-10);
      sum += expect;
    }
    EXPECT_NEAR(loss.total.item(), sum, 1e-10);
  }
}
