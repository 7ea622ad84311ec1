#pragma once

#include <functional>
#include <string>
#include <vector>

#include "gradcheck.hpp"
#include "stripereid/losses.hpp"
#include "stripereid/network.hpp"
#include "stripereid/ops.hpp"
#include "stripereid/topdrop.hpp"

namespace stripereid::testing {

struct GradCase {
  std::string name;
  /// Runs one randomized instance and returns its relative error.
  std::function<GradCheck(std::uint64_t seed)> run;
};

inline net::ModelConfig tiny_model_config(net::Variant variant, std::uint64_t seed) {
  net::ModelConfig c;
  c.backbone.stem_channels = 4;
  c.backbone.stage_channels = {4, 8, 8};
  c.backbone.stage_strides = {2, 1, 1};
  c.backbone.input_height = 16;
  c.backbone.input_width = 8;
  c.global_dim = 6;
  c.drop_dim = 6;
  c.num_classes = 3;
  c.variant = variant;
  c.init_seed = seed;
  return c;
}

inline std::vector<GradCase> gradient_cases() {
  std::vector<GradCase> cases;
  auto binary = [&](const std::string& name, Tensor (*op)(const Tensor&, const Tensor&)) {
    cases.push_back({name, [op](std::uint64_t s) {
                       return check_gradients([op, s](const std::vector<Tensor>& in) { return project(op(in[0], in[1]), s); },
                                              {Tensor::randn({3, 4}, s), Tensor::randn({3, 4}, s + 1000)});
                     }});
  };
  binary("add", &add);
  binary("sub", &sub);
  binary("mul", &mul);
  cases.push_back({"scalar_mul", [](std::uint64_t s) {
                     return check_gradients([s](const auto& in) { return project(scalar_mul(in[0], -1.7), s); },
                                            {Tensor::randn({2, 5}, s)});
                   }});
  cases.push_back({"add_scalar", [](std::uint64_t s) {
                     return check_gradients([s](const auto& in) { return project(add_scalar(in[0], 0.3), s); },
                                            {Tensor::randn({2, 5}, s)});
                   }});
  cases.push_back({"abs", [](std::uint64_t s) {
                     return check_gradients([s](const auto& in) { return project(abs(in[0]), s); },
                                            {randn_away_from_zero({4, 3}, s)});
                   }});
  cases.push_back({"pow_scalar", [](std::uint64_t s) {
                     return check_gradients([s](const auto& in) { return project(pow_scalar(add_scalar(abs(in[0]), 0.5), 2.5), s); },
                                            {randn_away_from_zero({4, 3}, s)});
                   }});
  cases.push_back({"relu", [](std::uint64_t s) {
                     return check_gradients([s](const auto& in) { return project(relu(in[0]), s); },
                                            {randn_away_from_zero({4, 3}, s)});
                   }});
  cases.push_back({"add_channel_bias", [](std::uint64_t s) {
                     return check_gradients([s](const auto& in) { return project(add_channel_bias(in[0], in[1]), s); },
                                            {Tensor::randn({2, 3, 2, 2}, s), Tensor::randn({3}, s + 1)});
                   }});
  cases.push_back({"sum_mean", [](std::uint64_t s) {
                     return check_gradients(
                         [s](const auto& in) { return add(sum(mul(in[0], in[0])), scalar_mul(mean(in[0]), 3.0)); },
                         {Tensor::randn({3, 3}, s)});
                   }});
  cases.push_back({"reshape_concat", [](std::uint64_t s) {
                     return check_gradients(
                         [s](const auto& in) {
                           const std::vector<Tensor> parts{reshape(in[0], {2, 6}), in[1]};
                           return project(concat_columns(parts), s);
                         },
                         {Tensor::randn({3, 4}, s), Tensor::randn({2, 3}, s + 1)});
                   }});
  cases.push_back({"matmul", [](std::uint64_t s) {
                     return check_gradients([s](const auto& in) { return project(matmul(in[0], in[1]), s); },
                                            {Tensor::randn({3, 4}, s), Tensor::randn({4, 5}, s + 1)});
                   }});
  cases.push_back({"linear", [](std::uint64_t s) {
                     return check_gradients([s](const auto& in) { return project(linear(in[0], in[1], in[2]), s); },
                                            {Tensor::randn({3, 4}, s), Tensor::randn({4, 2}, s + 1), Tensor::randn({2}, s + 2)});
                   }});
  cases.push_back({"conv2d_3x3_pad1", [](std::uint64_t s) {
                     return check_gradients([s](const auto& in) { return project(conv2d(in[0], in[1], {1, 1}), s); },
                                            {Tensor::randn({2, 2, 5, 4}, s), Tensor::randn({3, 2, 3, 3}, s + 1)});
                   }});
  cases.push_back({"conv2d_3x3_stride2", [](std::uint64_t s) {
                     return check_gradients([s](const auto& in) { return project(conv2d(in[0], in[1], {2, 1}), s); },
                                            {Tensor::randn({2, 2, 6, 5}, s), Tensor::randn({2, 2, 3, 3}, s + 1)});
                   }});
  cases.push_back({"conv2d_1x1", [](std::uint64_t s) {
                     return check_gradients([s](const auto& in) { return project(conv2d(in[0], in[1], {1, 0}), s); },
                                            {Tensor::randn({2, 3, 3, 3}, s), Tensor::randn({4, 3, 1, 1}, s + 1)});
                   }});
  cases.push_back({"maxpool2d", [](std::uint64_t s) {
                     return check_gradients([s](const auto& in) { return project(maxpool2d(in[0], 2, 2), s); },
                                            {Tensor::randn({2, 2, 4, 4}, s)});
                   }});
  cases.push_back({"global_avg_pool", [](std::uint64_t s) {
                     return check_gradients([s](const auto& in) { return project(global_avg_pool(in[0]), s); },
                                            {Tensor::randn({2, 3, 3, 2}, s)});
                   }});
  cases.push_back({"global_max_pool", [](std::uint64_t s) {
                     return check_gradients([s](const auto& in) { return project(global_max_pool(in[0]), s); },
                                            {Tensor::randn({2, 3, 3, 2}, s)});
                   }});
  cases.push_back({"batchnorm_train_2d", [](std::uint64_t s) {
                     return check_gradients(
                         [s](const auto& in) {
                           auto stats = BatchNormStats::initial(3);
                           return project(batchnorm(in[0], in[1], in[2], stats, Mode::train), s);
                         },
                         {Tensor::randn({5, 3}, s), add_scalar(Tensor::randn({3}, s + 1), 1.0), Tensor::randn({3}, s + 2)});
                   }});
  cases.push_back({"batchnorm_train_4d", [](std::uint64_t s) {
                     return check_gradients(
                         [s](const auto& in) {
                           auto stats = BatchNormStats::initial(2);
                           return project(batchnorm(in[0], in[1], in[2], stats, Mode::train), s);
                         },
                         {Tensor::randn({3, 2, 2, 3}, s), add_scalar(Tensor::randn({2}, s + 1), 1.0), Tensor::randn({2}, s + 2)});
                   }});
  cases.push_back({"batchnorm_eval", [](std::uint64_t s) {
                     return check_gradients(
                         [s](const auto& in) {
                           BatchNormStats stats{Tensor::randn({3}, s + 5), add_scalar(abs(Tensor::randn({3}, s + 6)), 0.5)};
                           return project(batchnorm(in[0], in[1], in[2], stats, Mode::eval), s);
                         },
                         {Tensor::randn({4, 3}, s), Tensor::randn({3}, s + 1), Tensor::randn({3}, s + 2)});
                   }});
  cases.push_back({"log_softmax", [](std::uint64_t s) {
                     return check_gradients([s](const auto& in) { return project(log_softmax(in[0]), s); },
                                            {scalar_mul(Tensor::randn({3, 5}, s), 3.0)});
                   }});
  cases.push_back({"l2_normalize", [](std::uint64_t s) {
                     return check_gradients([s](const auto& in) { return project(l2_normalize(in[0]), s); },
                                            {Tensor::randn({3, 4}, s)});
                   }});
  cases.push_back({"ce_label_smoothing", [](std::uint64_t s) {
                     const std::vector<std::int64_t> labels{0, 2, 1, 2};
                     return check_gradients([labels](const auto& in) { return net::ce_label_smoothing(in[0], labels, 0.1); },
                                            {scalar_mul(Tensor::randn({4, 3}, s), 2.0)});
                   }});
  cases.push_back({"triplet_batch_hard", [](std::uint64_t s) {
                     const std::vector<std::int64_t> ids{0, 0, 1, 1, 2, 2};
                     // A large margin keeps every hinge active so the loss is smooth around the sample.
                     return check_gradients([ids](const auto& in) { return net::triplet_batch_hard(in[0], ids, 10.0); },
                                            {Tensor::randn({6, 4}, s)});
                   }});
  cases.push_back({"apply_mask", [](std::uint64_t s) {
                     const topdrop::FeatureShape shape{2, 4, 3};
                     const std::vector<topdrop::TopDropMask> masks{topdrop::TopDropMask(shape, {1}),
                                                                   topdrop::TopDropMask(shape, {0, 3})};
                     return check_gradients([s, masks](const auto& in) { return project(topdrop::apply_mask(in[0], masks), s); },
                                            {Tensor::randn({2, 2, 4, 3}, s)});
                   }});
  cases.push_back({"three_stream_loss", [](std::uint64_t s) {
                     net::Model model(tiny_model_config(net::Variant::full, s));
                     const Tensor images = Tensor::randn({6, 3, 16, 8}, s + 11);
                     const std::vector<std::int64_t> labels{0, 0, 1, 1, 2, 2};
                     const auto masks = model.build_masks(model.backbone_forward(images), 0);
                     std::vector<Tensor> params;
                     for (const auto& p : model.parameters()) params.push_back(p.tensor);
                     params.push_back(images);
                     const net::LossConfig cfg{10.0, 0.1, {1.0, 1.0, 1.0}};
                     // Some neck gradients are ~1e-9, below the finite-difference noise of a
                     // loss near 30, so small tensors are judged by absolute error.
                     return check_gradients(
                         [&](const auto&) { return net::total_loss(model.forward(images, 0, masks), labels, cfg).total; },
                         params, 1e-6, 4, s, 1e-3);
                   }});
  return cases;
}

}  // namespace stripereid::testing
