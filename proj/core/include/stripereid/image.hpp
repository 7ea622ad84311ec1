#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace stripereid {

/// 8-bit image with interleaved channels (1 = gray, 3 = RGB).
struct Image8 {
  std::int64_t height = 0;
  std::int64_t width = 0;
  std::int64_t channels = 3;
  std::vector<std::uint8_t> pixels;

  static Image8 blank(std::int64_t height, std::int64_t width, std::int64_t channels, std::uint8_t value = 0);
  std::uint8_t& at(std::int64_t y, std::int64_t x, std::int64_t c) {
    return pixels[static_cast<std::size_t>((y * width + x) * channels + c)];
  }
  std::uint8_t at(std::int64_t y, std::int64_t x, std::int64_t c) const {
    return pixels[static_cast<std::size_t>((y * width + x) * channels + c)];
  }
  bool operator==(const Image8&) const = default;
};

/// Planar 3 x h x w image with values in [0, 1].
struct ImageF {
  std::int64_t height = 0;
  std::int64_t width = 0;
  std::vector<double> planes;

  static ImageF blank(std::int64_t height, std::int64_t width);
  double& at(std::int64_t c, std::int64_t y, std::int64_t x) {
    return planes[static_cast<std::size_t>((c * height + y) * width + x)];
  }
  double at(std::int64_t c, std::int64_t y, std::int64_t x) const {
    return planes[static_cast<std::size_t>((c * height + y) * width + x)];
  }
  bool operator==(const ImageF&) const = default;
};

ImageF to_float(const Image8& rgb);
Image8 to_rgb8(const ImageF& image);

/// Binary PPM (P6) for 3 channels, PGM (P5) for 1 channel; maxval 255.
std::string encode_pnm(const Image8& image);
Image8 decode_pnm(const std::string& bytes);
void write_pnm(const std::filesystem::path& path, const Image8& image);
Image8 read_pnm(const std::filesystem::path& path);

}  // namespace stripereid
