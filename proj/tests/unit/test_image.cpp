#include <gtest/gtest.h>

#include <filesystem>

#include "stripereid/image.hpp"
#include "stripereid/rng.hpp"

using namespace stripereid;

TEST(Pnm, RoundTripRgbAndGray) {
  SplitMix64 rng(1);
  for (const std::int64_t channels : {1, 3}) {
    Image8 img = Image8::blank(5, 7, channels);
    for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng.uniform_int(256));
    const auto bytes = encode_pnm(img);
    EXPECT_EQ(bytes.substr(0, 2), channels == 3 ? "P6" : "P5");
    EXPECT_EQ(decode_pnm(bytes), img);
  }
}

TEST(Pnm, HeaderCommentsAreSkipped) {
  const std::string bytes = std::string("P5\n# comment\n2 1\n255\n") + char(7) + char(200);
  const auto img = decode_pnm(bytes);
  EXPECT_EQ(img.channels, 1);
  EXPECT_EQ(img.at(0, 1, 0), 200);
}

TEST(Pnm, RejectsUnsupportedInput) {
  EXPECT_THROW(decode_pnm("P3\n1 1\n255\n0 0 0\n"), std::runtime_error);
  EXPECT_THROW(decode_pnm("P5\n1 1\n65535\n00"), std::runtime_error);
  EXPECT_THROW(decode_pnm("P6\n2 2\n255\nabc"), std::runtime_error);
}

TEST(Pnm, FileRoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / "stripereid_test_image.ppm";
  Image8 img = Image8::blank(3, 2, 3, 17);
  img.at(1, 1, 2) = 250;
  write_pnm(path, img);
  EXPECT_EQ(read_pnm(path), img);
}

TEST(Conversion, FloatRoundTripIsLossless) {
  Image8 img = Image8::blank(2, 3, 3);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = static_cast<std::uint8_t>(i * 13);
  const ImageF f = to_float(img);
  EXPECT_DOUBLE_EQ(f.at(0, 0, 1), 39.0 / 255.0);  // planar layout
  EXPECT_EQ(to_rgb8(f), img);
}

TEST(Conversion, OutOfRangeValuesClamp) {
  ImageF f = ImageF::blank(1, 1);
  f.at(0, 0, 0) = -0.5;
  f.at(1, 0, 0) = 2.0;
  f.at(2, 0, 0) = 0.5;
  const auto img = to_rgb8(f);
  EXPECT_EQ(img.pixels, (std::vector<std::uint8_t>{0, 255, 128}));
}
