#include <doctest.h>

#include <vector>

#include "mvl/errors.hpp"
#include "mvl/projector.hpp"
#include "mvl/rng.hpp"
#include "mvl/vision.hpp"

using namespace mvl;

namespace {

ImageInput gray_image(std::size_t size, float value) {
  ImageInput img;
  img.height = size;
  img.width = size;
  img.pixels.assign(size * size * 3, value);
  return img;
}

}  // namespace

TEST_CASE("token counts") {
  EncoderConfig c;
  c.image_size = 48;
  c.patch_size = 8;
  CHECK(c.token_count() == 36);
  CHECK(encoder_variant("clip-336").token_count() == 576);
  CHECK(encoder_variant("siglip-like").token_count() == 729);
  CHECK_THROWS_AS(encoder_variant("nope"), Error);
}

TEST_CASE("encoder output is token_count x d_vision") {
  EncoderConfig c;
  const auto enc = VisionEncoder<float>::init(c, 1);
  const auto out = enc.encode(gray_image(48, 0.1f));
  CHECK(out.shape() == Shape{36, c.d_vision});
}

TEST_CASE("encoder is deterministic under a fixed seed") {
  EncoderConfig c;
  const auto a = VisionEncoder<float>::init(c, 9).encode(gray_image(48, 0.3f));
  const auto b = VisionEncoder<float>::init(c, 9).encode(gray_image(48, 0.3f));
  CHECK(std::vector<float>(a.data().begin(), a.data().end()) == std::vector<float>(b.data().begin(), b.data().end()));
}

TEST_CASE("wrong image size is a shape error") {
  EncoderConfig c;
  const auto enc = VisionEncoder<float>::init(c, 1);
  CHECK_THROWS_AS(enc.encode(gray_image(40, 0.f)), Error);
}

TEST_CASE("patchify orders patches row-major and pixels y, x, channel") {
  EncoderConfig c;
  c.image_size = 4;
  c.patch_size = 2;
  c.d_vision = 4;
  c.n_heads = 1;
  ImageInput img;
  img.height = img.width = 4;
  img.pixels.resize(4 * 4 * 3);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = static_cast<float>(i);
  const auto p = VisionEncoder<float>::patchify(img, c);
  REQUIRE(p.shape() == Shape{4, 12});
  // Patch 1 is the top-right 2x2 block: pixel (0, 2) starts it.
  CHECK(p.at(1, 0) == static_cast<float>((0 * 4 + 2) * 3));
  // Second row of patch 1 starts at pixel (1, 2).
  CHECK(p.at(1, 6) == static_cast<float>((1 * 4 + 2) * 3));
  // Patch 2 is bottom-left: pixel (2, 0).
  CHECK(p.at(2, 0) == static_cast<float>((2 * 4 + 0) * 3));
}

TEST_CASE("preprocess") {
  SUBCASE("white pixels map to 1") {
    RawImage raw{2, 2, std::vector<std::uint8_t>(12, 255)};
    const auto img = preprocess(raw, 2);
    for (float v : img.pixels) CHECK(v == 1.0f);
  }
  SUBCASE("black pixels map to -1") {
    RawImage raw{3, 3, std::vector<std::uint8_t>(27, 0)};
    for (float v : preprocess(raw, 3).pixels) CHECK(v == -1.0f);
  }
  SUBCASE("2x1 image upsamples with hand-traced bilinear weights") {
    // Left pixel 0, right pixel 255. Short side 1 -> 4, so width 8 centre-cropped to 4.
    RawImage raw{2, 1, {0, 0, 0, 255, 255, 255}};
    const auto img = preprocess(raw, 4);
    REQUIRE(img.pixels.size() == 4 * 4 * 3);
    // Output column x samples source (x + 2 + 0.5) * 0.25 - 0.5.
    const double expect[4] = {0.125, 0.375, 0.625, 0.875};
    for (std::size_t y = 0; y < 4; ++y) {
      for (std::size_t x = 0; x < 4; ++x) {
        CHECK(img.pixels[(y * 4 + x) * 3] == doctest::Approx(expect[x] * 255.0 / 127.5 - 1.0).epsilon(1e-6));
      }
    }
  }
  SUBCASE("zero extent is a format error") {
    try {
      preprocess(RawImage{0, 0, {}}, 4);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::kFormat);
    }
  }
}

TEST_CASE("ppm round trip") {
  RawImage raw{3, 2, {}};
  for (std::size_t i = 0; i < 18; ++i) raw.rgb.push_back(static_cast<std::uint8_t>(i * 13));
  const auto back = parse_ppm(encode_ppm(raw));
  CHECK(back.width == 3);
  CHECK(back.height == 2);
  CHECK(back.rgb == raw.rgb);
  CHECK_THROWS_AS(parse_ppm("P3\n1 1\n255\n0 0 0"), Error);
  CHECK_THROWS_AS(parse_ppm("P6\n2 2\n255\n\x01\x02"), Error);
}

TEST_CASE("projector") {
  SUBCASE("zero weights output the bias in every row") {
    ProjectorConfig cfg{ProjectorVariant::kLinear, 3, 2};
    Linear<double> first{Tensor<double>::zeros({3, 2}), Tensor<double>::from({2}, {0.5, -2.0})};
    const auto p = Projector<double>::from_weights(cfg, first, std::nullopt);
    const auto out = p.project(Tensor<double>::from({2, 3}, {1, 2, 3, 4, 5, 6}));
    CHECK(out.at(0, 0) == 0.5);
    CHECK(out.at(1, 1) == -2.0);
  }
  SUBCASE("linear identity") {
    ProjectorConfig cfg{ProjectorVariant::kLinear, 2, 2};
    Linear<double> first{Tensor<double>::from({2, 2}, {1, 0, 0, 1}), Tensor<double>::zeros({2})};
    const auto p = Projector<double>::from_weights(cfg, first, std::nullopt);
    const auto out = p.project(Tensor<double>::from({1, 2}, {0.25, -3}));
    CHECK(out.at(0, 0) == 0.25);
    CHECK(out.at(0, 1) == -3);
  }
  SUBCASE("mlp2 on a hand-set 1x2 input") {
    ProjectorConfig cfg{ProjectorVariant::kMlp2, 2, 2};
    Linear<double> first{Tensor<double>::from({2, 2}, {1, 0, 0, 2}), Tensor<double>::from({2}, {0, -1})};
    Linear<double> second{Tensor<double>::from({2, 2}, {1, 1, 0, 1}), Tensor<double>::from({2}, {0.5, 0})};
    const auto p = Projector<double>::from_weights(cfg, first, second);
    // h = [1, 1]; gelu(1) = 0.5 * (1 + erf(1 / sqrt 2)).
    const double g = 0.5 * (1.0 + std::erf(1.0 / std::sqrt(2.0)));
    const auto out = p.project(Tensor<double>::from({1, 2}, {1, 1}));
    CHECK(out.at(0, 0) == doctest::Approx(g + 0.5));
    CHECK(out.at(0, 1) == doctest::Approx(2 * g));
  }
  SUBCASE("parameter counts") {
    CHECK(ProjectorConfig{ProjectorVariant::kLinear, 64, 64}.parameter_count() == 64 * 64 + 64);
    CHECK(ProjectorConfig{ProjectorVariant::kMlp2, 64, 64}.parameter_count() == 2 * (64 * 64 + 64));
  }
  SUBCASE("wrong input width is a shape error") {
    Rng rng(1);
    const auto p = Projector<float>::init(ProjectorConfig{ProjectorVariant::kMlp2, 4, 4}, rng);
    CHECK_THROWS_AS(p.project(Tensor<float>::zeros({2, 3})), Error);
  }
}
