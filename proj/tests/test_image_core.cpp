#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "gusl/image.hpp"
#include "gusl/image_io.hpp"
#include "gusl/parallel.hpp"
#include "gusl/ushape.hpp"

namespace {

using gusl::ImageBuffer;

std::string temp_path(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "gusl_image_core";
  std::filesystem::create_directories(dir);
  return (dir / name).string();
}

ImageBuffer random_image(int h, int w, int c, std::uint64_t seed) {
  gusl::Rng rng(seed);
  ImageBuffer img(h, w, c);
  for (double& v : img.data()) v = rng.uniform();
  return img;
}

TEST(ImageBuffer, RejectsBadShapes) {
  EXPECT_THROW(ImageBuffer(0, 3, 3), gusl::InvalidArgument);
  EXPECT_THROW(ImageBuffer(3, 3, 2), gusl::InvalidArgument);
  ImageBuffer img(2, 3, 3, 0.25);
  EXPECT_EQ(img.data().size(), 18u);
  EXPECT_EQ(img.at(1, 2, 2), 0.25);
}

TEST(ImageIo, WhitePngLoadsAsOnes) {
  const auto path = temp_path("white.png");
  gusl::save_image(ImageBuffer(2, 2, 3, 1.0), path);
  const ImageBuffer img = gusl::load_image(path);
  ASSERT_EQ(img.height(), 2);
  ASSERT_EQ(img.channels(), 3);
  for (double v : img.data()) EXPECT_EQ(v, 1.0);
}

TEST(ImageIo, MidGrayLoadsAs128Over255) {
  const auto path = temp_path("gray.png");
  gusl::save_image(ImageBuffer(1, 1, 3, 128.0 / 255.0), path);
  const ImageBuffer img = gusl::load_image(path);
  for (double v : img.data()) EXPECT_NEAR(v, 0.50196, 1e-5);
}

TEST(ImageIo, QuantizationClampsAndRoundsHalfUp) {
  EXPECT_EQ(gusl::quantize(1.2), 255);
  EXPECT_EQ(gusl::quantize(-0.3), 0);
  EXPECT_EQ(gusl::quantize(0.5), 128);
}

TEST(ImageIo, RoundTripOfEightBitImageIsExact) {
  gusl::Rng rng(3);
  ImageBuffer img(17, 23, 3);
  for (double& v : img.data()) v = static_cast<double>(rng.below(256)) / 255.0;
  const auto a = temp_path("rt_a.png"), b = temp_path("rt_b.png");
  gusl::save_image(img, a);
  const ImageBuffer loaded = gusl::load_image(a);
  EXPECT_EQ(loaded, img);
  gusl::save_image(loaded, b);
  EXPECT_EQ(gusl::load_image(b), loaded);
}

TEST(ImageIo, GrayPngExpandsToRgb) {
  const auto path = temp_path("gray1.png");
  ImageBuffer g(3, 4, 1, 0.0);
  g.at(1, 2, 0) = 1.0;
  gusl::save_image(g, path);
  const ImageBuffer img = gusl::load_image(path);
  ASSERT_EQ(img.channels(), 3);
  EXPECT_EQ(img.at(1, 2, 0), 1.0);
  EXPECT_EQ(img.at(1, 2, 2), 1.0);
  EXPECT_EQ(img.at(0, 0, 1), 0.0);
}

TEST(ImageIo, Errors) {
  EXPECT_THROW(gusl::load_image(temp_path("missing.png")), gusl::IoError);
  const auto junk = temp_path("junk.png");
  std::ofstream(junk) << "not an image";
  EXPECT_THROW(gusl::load_image(junk), gusl::IoError);
  EXPECT_THROW(gusl::save_image(ImageBuffer(2, 2, 3), "/nonexistent_dir/x.png"), gusl::IoError);
}

TEST(Resize, ConstantsArePreservedExactly) {
  const ImageBuffer c(7, 5, 3, 0.3);
  for (auto [h, w] : {std::pair{1, 1}, {3, 11}, {14, 10}, {7, 5}, {64, 2}}) {
    const ImageBuffer r = gusl::resize(c, h, w);
    ASSERT_EQ(r.height(), h);
    ASSERT_EQ(r.width(), w);
    for (double v : r.data()) EXPECT_EQ(v, 0.3);
  }
  const ImageBuffer round = gusl::resize(gusl::resize(c, 14, 10), 7, 5);
  EXPECT_EQ(round, c);
}

TEST(Resize, RampDownsampleMatchesHandWeights) {
  // Half-pixel centres: output pixel j samples input coordinate 2j + 0.5,
  // the average of input columns 2j and 2j+1 along each axis.
  ImageBuffer ramp(4, 4, 1);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) ramp.at(y, x, 0) = (4 * y + x) / 15.0;
  const ImageBuffer r = gusl::resize(ramp, 2, 2);
  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 2; ++x) {
      const double expect = (ramp.at(2 * y, 2 * x, 0) + ramp.at(2 * y, 2 * x + 1, 0) + ramp.at(2 * y + 1, 2 * x, 0) +
                             ramp.at(2 * y + 1, 2 * x + 1, 0)) /
                            4.0;
      EXPECT_NEAR(r.at(y, x, 0), expect, 1e-15);
    }
}

TEST(Resize, UpsampleInteriorMatchesBilinearFormula) {
  const ImageBuffer img = random_image(5, 6, 1, 9);
  const ImageBuffer r = gusl::resize(img, 9, 13);
  for (int y = 0; y < 9; ++y)
    for (int x = 0; x < 13; ++x) {
      const double sy = std::clamp((y + 0.5) * 5.0 / 9.0 - 0.5, 0.0, 4.0);
      const double sx = std::clamp((x + 0.5) * 6.0 / 13.0 - 0.5, 0.0, 5.0);
      const int y0 = static_cast<int>(std::floor(sy)), x0 = static_cast<int>(std::floor(sx));
      const int y1 = std::min(y0 + 1, 4), x1 = std::min(x0 + 1, 5);
      const double fy = sy - y0, fx = sx - x0;
      const double expect = (1 - fy) * ((1 - fx) * img.at(y0, x0, 0) + fx * img.at(y0, x1, 0)) +
                            fy * ((1 - fx) * img.at(y1, x0, 0) + fx * img.at(y1, x1, 0));
      EXPECT_NEAR(r.at(y, x, 0), expect, 1e-12);
    }
}

TEST(Resize, RejectsZeroTarget) { EXPECT_THROW(gusl::resize(ImageBuffer(2, 2, 3), 0, 2), gusl::InvalidArgument); }

TEST(Pyramid, SizesAndConstants) {
  const ImageBuffer c(256, 256, 3, 0.7);
  const auto pyr = gusl::build_pyramid(c, 3, 256);
  ASSERT_EQ(pyr.size(), 3u);
  EXPECT_EQ(pyr[0].height(), 128);
  EXPECT_EQ(pyr[1].height(), 64);
  EXPECT_EQ(pyr[2].height(), 32);
  for (const auto& l : pyr)
    for (double v : l.data()) EXPECT_EQ(v, 0.7);
  EXPECT_THROW(gusl::build_pyramid(c, 3, 100), gusl::InvalidArgument);
}

TEST(Pyramid, RepeatedHalvingMatchesDirectResizeOnAffineImage) {
  ImageBuffer img(64, 64, 3);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x)
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = 0.1 + 0.004 * y + 0.006 * x + 0.05 * c;
  const auto pyr = gusl::build_pyramid(img, 3, 64);
  for (int k = 0; k < 3; ++k) {
    const int s = 64 >> (k + 1);
    const ImageBuffer direct = gusl::resize(img, s, s);
    for (std::size_t i = 0; i < direct.data().size(); ++i) EXPECT_NEAR(pyr[static_cast<std::size_t>(k)].data()[i], direct.data()[i], 1e-6);
  }
}

TEST(Yuv, GrayBlackAndRed) {
  ImageBuffer img(1, 3, 3);
  for (int c = 0; c < 3; ++c) img.at(0, 0, c) = 0.37;
  img.at(0, 2, 0) = 1.0;
  const ImageBuffer yuv = gusl::rgb_to_yuv(img);
  EXPECT_DOUBLE_EQ(yuv.at(0, 0, 0), 0.37);
  EXPECT_EQ(yuv.at(0, 0, 1), 0.5);
  EXPECT_EQ(yuv.at(0, 0, 2), 0.5);
  EXPECT_EQ(yuv.at(0, 1, 0), 0.0);
  EXPECT_EQ(yuv.at(0, 1, 1), 0.5);
  EXPECT_EQ(yuv.at(0, 1, 2), 0.5);
  // Red: Y = 0.299, U = (0 - Y)/1.772 + 0.5, V = (1 - Y)/1.402 + 0.5.
  EXPECT_NEAR(yuv.at(0, 2, 0), 0.299, 1e-15);
  EXPECT_NEAR(yuv.at(0, 2, 1), -0.299 / 1.772 + 0.5, 1e-15);
  EXPECT_NEAR(yuv.at(0, 2, 2), 0.701 / 1.402 + 0.5, 1e-15);
  EXPECT_THROW(gusl::rgb_to_yuv(ImageBuffer(2, 2, 1)), gusl::InvalidArgument);
}

TEST(Yuv, RandomGrayPixelsHaveNeutralChroma) {
  gusl::Rng rng(5);
  ImageBuffer img(8, 8, 3);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) {
      const double v = rng.uniform();
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = v;
    }
  const ImageBuffer yuv = gusl::rgb_to_yuv(img);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) {
      EXPECT_EQ(yuv.at(y, x, 1), 0.5);
      EXPECT_EQ(yuv.at(y, x, 2), 0.5);
    }
}

TEST(Arithmetic, ClampAddSubtract) {
  ImageBuffer a(1, 2, 3, 0.75), b(1, 2, 3, 0.5);
  const ImageBuffer s = gusl::add(a, b);
  EXPECT_EQ(s.at(0, 0, 0), 1.25);
  for (const auto map = gusl::clamp(s); double v : map.data()) EXPECT_EQ(v, 1.0);
  EXPECT_EQ(gusl::subtract(a, b).at(0, 1, 2), 0.25);
  EXPECT_THROW(gusl::add(a, ImageBuffer(2, 1, 3)), gusl::InvalidArgument);
}

}  // namespace
