#include "stripereid/cli/activations.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "stripereid/synthdata.hpp"

namespace stripereid::cli {

namespace {

std::int64_t source_index(std::int64_t i, std::int64_t out, std::int64_t in) { return i * in / out; }

std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); }

std::vector<double> normalized(const topdrop::ActivationMap& map) {
  const auto [lo, hi] = std::minmax_element(map.values.begin(), map.values.end());
  std::vector<double> out(map.values.size());
  if (*hi == *lo) {
    std::fill(out.begin(), out.end(), *hi > 0.0 ? 1.0 : 0.0);
    return out;
  }
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (map.values[i] - *lo) / (*hi - *lo);
  return out;
}

Image8 upscale(const std::vector<double>& unit, std::int64_t h, std::int64_t w, std::int64_t height, std::int64_t width) {
  if (height < 1 || width < 1) throw std::invalid_argument("output size must be positive");
  auto img = Image8::blank(height, width, 1);
  for (std::int64_t y = 0; y < height; ++y) {
    for (std::int64_t x = 0; x < width; ++x) {
      img.at(y, x, 0) = to_byte(unit[static_cast<std::size_t>(source_index(y, height, h) * w + source_index(x, width, w))]);
    }
  }
  return img;
}

}  // namespace

Image8 activation_image(const topdrop::ActivationMap& map, std::int64_t height, std::int64_t width) {
  return upscale(normalized(map), map.height, map.width, height, width);
}

Image8 threshold_image(const topdrop::ActivationMap& map, double threshold, std::int64_t height, std::int64_t width) {
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw std::invalid_argument("threshold must be in [0, 1]");
  const double hi = *std::max_element(map.values.begin(), map.values.end());
  std::vector<double> bits(map.values.size(), 0.0);
  if (hi > 0.0) {
    for (std::size_t i = 0; i < bits.size(); ++i) bits[i] = map.values[i] >= threshold * hi ? 1.0 : 0.0;
  }
  return upscale(bits, map.height, map.width, height, width);
}

Image8 overlay_image(const ImageF& input, const topdrop::ActivationMap& map, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("alpha must be in [0, 1]");
  const auto heat = normalized(map);
  auto img = Image8::blank(input.height, input.width, 3);
  for (std::int64_t y = 0; y < input.height; ++y) {
    for (std::int64_t x = 0; x < input.width; ++x) {
      const double a =
          heat[static_cast<std::size_t>(source_index(y, input.height, map.height) * map.width +
                                        source_index(x, input.width, map.width))];
      img.at(y, x, 0) = to_byte((1.0 - alpha) * input.at(0, y, x) + alpha * a);
      img.at(y, x, 1) = to_byte((1.0 - alpha) * input.at(1, y, x));
      img.at(y, x, 2) = to_byte((1.0 - alpha) * input.at(2, y, x));
    }
  }
  return img;
}

Image8 drop_mask_image(const topdrop::TopDropMask& mask, std::int64_t height, std::int64_t width) {
  const auto h = mask.shape().height;
  auto img = Image8::blank(height, width, 1, 255);
  for (std::int64_t y = 0; y < height; ++y) {
    if (mask.keeps_row(source_index(y, height, h))) continue;
    for (std::int64_t x = 0; x < width; ++x) img.at(y, x, 0) = 0;
  }
  return img;
}

std::vector<std::int64_t> dropped_rows_from_image(const Image8& image, std::int64_t feature_height) {
  if (image.channels != 1) throw std::invalid_argument("drop mask image must be grayscale");
  std::vector<std::int64_t> rows;
  for (std::int64_t y = 0; y < image.height; ++y) {
    const auto r = source_index(y, image.height, feature_height);
    if (image.at(y, 0, 0) == 0 && (rows.empty() || rows.back() != r)) rows.push_back(r);
  }
  return rows;
}

ActivationReport analyze_image(const net::Model& model, const ImageF& input, double threshold) {
  if (model.mode() != Mode::eval) throw std::logic_error("analyze_image: model must be in eval mode");
  const std::vector<ImageF> batch{input};
  const Tensor features = model.backbone_forward(synth::images_to_tensor(batch));
  const topdrop::FeatureShape shape{features.size(1), features.size(2), features.size(3)};
  const auto& drop = model.config().drop;
  auto map = topdrop::activation_map(features.values(), shape, drop.p);
  auto relevance = topdrop::stripe_relevance(map);
  auto mask = topdrop::top_drop_mask(relevance, drop, shape);
  ActivationReport report{map, relevance, mask, {}, {}, {}, {}};
  report.activation = activation_image(map, input.height, input.width);
  report.threshold = threshold_image(map, threshold, input.height, input.width);
  report.overlay = overlay_image(input, map);
  report.drop_mask = drop_mask_image(mask, input.height, input.width);
  return report;
}

}  // namespace stripereid::cli
