#include "stripereid/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <stdexcept>

namespace stripereid {

Image8 Image8::blank(std::int64_t height, std::int64_t width, std::int64_t channels, std::uint8_t value) {
  if (height < 1 || width < 1 || (channels != 1 && channels != 3)) throw std::invalid_argument("invalid image extents");
  return Image8{height, width, channels, std::vector<std::uint8_t>(static_cast<std::size_t>(height * width * channels), value)};
}

ImageF ImageF::blank(std::int64_t height, std::int64_t width) {
  if (height < 1 || width < 1) throw std::invalid_argument("invalid image extents");
  return ImageF{height, width, std::vector<double>(static_cast<std::size_t>(3 * height * width), 0.0)};
}

ImageF to_float(const Image8& rgb) {
  if (rgb.channels != 3) throw std::invalid_argument("to_float: expected an RGB image");
  ImageF out = ImageF::blank(rgb.height, rgb.width);
  for (std::int64_t y = 0; y < rgb.height; ++y) {
    for (std::int64_t x = 0; x < rgb.width; ++x) {
      for (std::int64_t c = 0; c < 3; ++c) out.at(c, y, x) = rgb.at(y, x, c) / 255.0;
    }
  }
  return out;
}

Image8 to_rgb8(const ImageF& image) {
  Image8 out = Image8::blank(image.height, image.width, 3);
  for (std::int64_t y = 0; y < image.height; ++y) {
    for (std::int64_t x = 0; x < image.width; ++x) {
      for (std::int64_t c = 0; c < 3; ++c) {
        const double v = std::clamp(image.at(c, y, x), 0.0, 1.0);
        out.at(y, x, c) = static_cast<std::uint8_t>(std::lround(v * 255.0));
      }
    }
  }
  return out;
}

std::string encode_pnm(const Image8& image) {
  std::string out = (image.channels == 3 ? "P6\n" : "P5\n") + std::to_string(image.width) + " " +
                    std::to_string(image.height) + "\n255\n";
  out.append(image.pixels.begin(), image.pixels.end());
  return out;
}

namespace {

std::int64_t read_header_int(const std::string& bytes, std::size_t& pos) {
  while (pos < bytes.size()) {
    if (bytes[pos] == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
    } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
      ++pos;
    } else {
      break;
    }
  }
  std::int64_t v = 0;
  const auto start = pos;
  while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) v = v * 10 + (bytes[pos++] - '0');
  if (pos == start) throw std::runtime_error("pnm: malformed header");
  return v;
}

}  // namespace

Image8 decode_pnm(const std::string& bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
    throw std::runtime_error("pnm: only binary P5/P6 files are supported");
  }
  const std::int64_t channels = bytes[1] == '6' ? 3 : 1;
  std::size_t pos = 2;
  const auto width = read_header_int(bytes, pos);
  const auto height = read_header_int(bytes, pos);
  const auto maxval = read_header_int(bytes, pos);
  if (maxval != 255) throw std::runtime_error("pnm: only maxval 255 is supported");
  ++pos;  // single whitespace before the raster
  Image8 img = Image8::blank(height, width, channels);
  if (bytes.size() - pos < img.pixels.size()) throw std::runtime_error("pnm: truncated raster");
  std::copy_n(bytes.begin() + static_cast<std::ptrdiff_t>(pos), img.pixels.size(), img.pixels.begin());
  return img;
}

void write_pnm(const std::filesystem::path& path, const Image8& image) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  const auto bytes = encode_pnm(image);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

Image8 read_pnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read '" + path.string() + "'");
  return decode_pnm(std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>()));
}

}  // namespace stripereid
