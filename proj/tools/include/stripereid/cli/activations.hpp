#pragma once

#include <cstdint>

#include "stripereid/image.hpp"
#include "stripereid/network.hpp"
#include "stripereid/topdrop.hpp"

namespace stripereid::cli {

/// Min-max normalized map as an 8-bit PGM, upscaled by nearest neighbour.
/// A flat map renders 255 everywhere when positive and 0 when zero.
Image8 activation_image(const topdrop::ActivationMap& map, std::int64_t height, std::int64_t width);

/// 255 where the activation is at least `threshold` times the maximum; all
/// zero when the map is identically zero.
Image8 threshold_image(const topdrop::ActivationMap& map, double threshold, std::int64_t height, std::int64_t width);

/// Blends the normalized activation, carried in the red channel, onto the input.
Image8 overlay_image(const ImageF& input, const topdrop::ActivationMap& map, double alpha = 0.5);

/// Dropped feature rows in black, kept rows in white.
Image8 drop_mask_image(const topdrop::TopDropMask& mask, std::int64_t height, std::int64_t width);

/// Feature rows covered by the black rows of a drop_mask_image().
std::vector<std::int64_t> dropped_rows_from_image(const Image8& image, std::int64_t feature_height);

struct ActivationReport {
  topdrop::ActivationMap map;
  topdrop::StripeRelevance relevance;
  topdrop::TopDropMask mask;
  Image8 activation;
  Image8 threshold;
  Image8 overlay;
  Image8 drop_mask;
};

/// Runs the backbone in eval mode on one image and renders every export.
ActivationReport analyze_image(const net::Model& model, const ImageF& input, double threshold);

}  // namespace stripereid::cli
