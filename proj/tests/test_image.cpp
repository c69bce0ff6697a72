#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "oracles.hpp"
#include "ycd/image.hpp"

using namespace ycd;
namespace fs = std::filesystem;

namespace {

RgbImage solid(std::size_t w, std::size_t h, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  RgbImage img{w, h, std::vector<std::uint8_t>(w * h * 3)};
  for (std::size_t i = 0; i < w * h; ++i) {
    img.pixels[3 * i] = r;
    img.pixels[3 * i + 1] = g;
    img.pixels[3 * i + 2] = b;
  }
  return img;
}

RgbImage noise(Rng& rng, std::size_t w, std::size_t h) {
  RgbImage img{w, h, std::vector<std::uint8_t>(w * h * 3)};
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng.below(256));
  return img;
}

// Independent bilinear reference: half-pixel centres, clamped source coords.
double bilinear_ref(const Tensor& in, std::size_t oy, std::size_t ox, std::size_t c, std::size_t oh, std::size_t ow) {
  const auto& s = in.shape();
  auto src = [](std::size_t o, std::size_t n_in, std::size_t n_out) {
    const double v = (o + 0.5) * static_cast<double>(n_in) / static_cast<double>(n_out) - 0.5;
    return std::clamp(v, 0.0, static_cast<double>(n_in - 1));
  };
  const double y = src(oy, s.h, oh), x = src(ox, s.w, ow);
  const std::size_t y0 = static_cast<std::size_t>(std::floor(y)), x0 = static_cast<std::size_t>(std::floor(x));
  const std::size_t y1 = std::min(y0 + 1, s.h - 1), x1 = std::min(x0 + 1, s.w - 1);
  const double fy = y - y0, fx = x - x0;
  return (1 - fy) * ((1 - fx) * in.at(0, y0, x0, c) + fx * in.at(0, y0, x1, c)) +
         fy * ((1 - fx) * in.at(0, y1, x0, c) + fx * in.at(0, y1, x1, c));
}

}  // namespace

TEST(Codec, PngRoundTripIsLossless) {
  Rng rng(1);
  const RgbImage img = noise(rng, 17, 9);
  for (int level : {1, 6, 9}) {
    const RgbImage back = decode_png(encode_png(img, level));
    EXPECT_EQ(back.width, 17u);
    EXPECT_EQ(back.height, 9u);
    EXPECT_EQ(back.pixels, img.pixels);
  }
}

TEST(Codec, JpegRoundTripIsClose) {
  const RgbImage img = solid(32, 24, 200, 40, 90);
  const RgbImage back = decode_jpeg(encode_jpeg(img, 95));
  ASSERT_EQ(back.width, 32u);
  ASSERT_EQ(back.height, 24u);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) EXPECT_NEAR(back.pixels[i], img.pixels[i], 4);
}

TEST(Codec, SniffsContainer) {
  const RgbImage img = solid(4, 4, 1, 2, 3);
  EXPECT_TRUE(is_png(encode_png(img)));
  EXPECT_TRUE(is_jpeg(encode_jpeg(img)));
  EXPECT_EQ(decode_image(encode_jpeg(img)).width, 4u);
}

TEST(Codec, GarbageIsUndecodable) {
  const std::vector<std::uint8_t> junk{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  try {
    decode_image(junk);
    FAIL();
  } catch (const ImageError& e) {
    EXPECT_EQ(e.code(), ImageError::Code::Undecodable);
  }
  auto png = encode_png(solid(8, 8, 1, 2, 3));
  png.resize(png.size() / 2);
  EXPECT_THROW(decode_image(png), ImageError);
  auto jpg = encode_jpeg(solid(8, 8, 1, 2, 3));
  jpg.resize(20);
  EXPECT_THROW(decode_image(jpg), ImageError);
}

TEST(Preprocess, MidGray) {
  const Tensor t = preprocess(solid(10, 10, 128, 128, 128), 8);
  for (float v : t.data()) EXPECT_NEAR(v, 0.0039, 1e-4);
  EXPECT_NEAR(t[0], 128.0 / 255.0 * 2.0 - 1.0, 1e-6);
}

TEST(Preprocess, RangeIsMinusOneToOne) {
  const Tensor black = preprocess(solid(3, 3, 0, 0, 0), 3);
  const Tensor white = preprocess(solid(3, 3, 255, 255, 255), 3);
  for (float v : black.data()) EXPECT_EQ(v, -1.0f);
  for (float v : white.data()) EXPECT_EQ(v, 1.0f);
}

TEST(Preprocess, DownscaleShape) {
  Rng rng(2);
  const Tensor t = preprocess(noise(rng, 448, 448), 224);
  EXPECT_EQ(t.shape(), (Shape{1, 224, 224, 3}));
}

TEST(Preprocess, NonSquareInputBecomesSquare) {
  Rng rng(3);
  EXPECT_EQ(preprocess(noise(rng, 40, 13), 16).shape(), (Shape{1, 16, 16, 3}));
}

TEST(Resize, CheckerboardToOnePixelIsMean) {
  const Tensor board(Shape{1, 2, 2, 1}, {0, 255, 255, 0});
  EXPECT_FLOAT_EQ(resize_bilinear(board, 1, 1)[0], 127.5f);
  const Tensor corners(Shape{1, 2, 2, 1}, {1, 2, 3, 4});
  EXPECT_FLOAT_EQ(resize_bilinear(corners, 1, 1)[0], 2.5f);
}

TEST(Resize, MatchesReferenceOnRandomSizes) {
  Rng rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t h = 1 + rng.below(20), w = 1 + rng.below(20), oh = 1 + rng.below(20), ow = 1 + rng.below(20);
    const Tensor in = oracle::random_tensor(rng, {1, h, w, 2}, 0, 255);
    const Tensor out = resize_bilinear(in, oh, ow);
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t x = 0; x < ow; ++x)
        for (std::size_t c = 0; c < 2; ++c) EXPECT_NEAR(out.at(0, y, x, c), bilinear_ref(in, y, x, c, oh, ow), 1e-3);
  }
}

TEST(Resize, IdempotentAtTargetResolution) {
  Rng rng(5);
  const Tensor t = preprocess(noise(rng, 300, 200), 224);
  const Tensor again = resize_bilinear(t, 224, 224);
  for (std::size_t i = 0; i < t.size(); ++i) EXPECT_NEAR(again[i], t[i], 1e-6);
}

TEST(Resize, ZeroTargetThrows) { EXPECT_THROW(resize_bilinear(Tensor(Shape{1, 2, 2, 3}), 0, 4), ShapeError); }

TEST(LoadAndPreprocess, ReadsFileAndNamesSource) {
  const fs::path dir = fs::temp_directory_path() / "ycd_test_image";
  fs::create_directories(dir);
  const auto path = dir / "gray.png";
  write_file(path, encode_png(solid(6, 6, 128, 128, 128)));
  const auto rec = load_and_preprocess(path, 4);
  EXPECT_EQ(rec.pixels.shape(), (Shape{1, 4, 4, 3}));
  EXPECT_EQ(rec.source, path.string());

  const auto bad = dir / "bad.png";
  const std::vector<std::uint8_t> junk(16, 7);
  write_file(bad, junk);
  try {
    load_and_preprocess(bad, 4);
    FAIL();
  } catch (const ImageError& e) {
    EXPECT_NE(std::string(e.what()).find("bad.png"), std::string::npos);
  }
  EXPECT_THROW(load_and_preprocess(dir / "missing.png", 4), ImageError);
  fs::remove_all(dir);
}
