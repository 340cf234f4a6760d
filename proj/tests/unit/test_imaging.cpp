#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "lumina/error.hpp"
#include "lumina/image.hpp"
#include "lumina/image_io.hpp"

#ifdef LUMINA_HAVE_PNG
#include <png.h>
#endif

using namespace lumina;

TEST_CASE("rgb_to_hsv primaries and gray") {
  auto red = rgb_to_hsv(1, 0, 0);
  CHECK(red.hue == 0.0);
  CHECK(red.saturation == 1.0);
  CHECK(red.value == 1.0);
  auto gray = rgb_to_hsv(0.5, 0.5, 0.5);
  CHECK(gray.hue == 0.0);
  CHECK(gray.saturation == 0.0);
  CHECK(gray.value == 0.5);
  auto green = rgb_to_hsv(0, 1, 0);
  CHECK(green.hue == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(green.saturation == 1.0);
  CHECK(green.value == 1.0);
}

TEST_CASE("hsv round trip for chromatic pixels") {
  Rng rng(5);
  for (int i = 0; i < 2000; ++i) {
    const double r = rng.uniform(), g = rng.uniform(), b = rng.uniform();
    const auto hsv = rgb_to_hsv(r, g, b);
    CHECK(hsv.hue >= 0.0);
    CHECK(hsv.hue < 1.0);
    if (hsv.saturation <= 0.0) continue;
    const auto rgb = hsv_to_rgb(hsv);
    CHECK(std::abs(rgb[0] - r) < 1e-6);
    CHECK(std::abs(rgb[1] - g) < 1e-6);
    CHECK(std::abs(rgb[2] - b) < 1e-6);
  }
}

TEST_CASE("gaussian window normalization and centre value") {
  const auto k = gaussian_window(11, 1.5);
  double sum = 0.0;
  for (double w : k.weights) sum += w;
  CHECK(std::abs(sum - 1.0) < 1e-12);

  double z = 0.0;
  for (int i = -5; i <= 5; ++i) z += std::exp(-(i * i) / (2.0 * 1.5 * 1.5));
  CHECK(std::abs(k.at(5, 5) - 1.0 / (z * z)) < 1e-15);

  const auto one = gaussian_window(1, 1.5);
  REQUIRE(one.weights.size() == 1);
  CHECK(one.weights[0] == 1.0);
  CHECK_THROWS_AS(gaussian_window(4, 1.0), PreconditionError);
  CHECK_THROWS_AS(gaussian_window(5, 0.0), PreconditionError);
}

TEST_CASE("convolve_valid identity, constant and brute-force oracle") {
  const Image img = testing::random_image(9, 7, 3, 1);
  CHECK(testing::max_abs_diff(convolve_valid(img, Kernel2D::identity()), img) == 0.0);

  const Image flat(10, 10, 1, 0.5);
  const auto g = convolve_valid(flat, gaussian_window(5, 1.0));
  CHECK(g.width() == 6);
  for (double v : g.data()) CHECK(std::abs(v - 0.5) < 1e-15);

  const Image x = testing::random_image(8, 8, 1, 2);
  Rng rng(3);
  Kernel2D k{3, 3, std::vector<double>(9)};
  for (double& w : k.weights) w = rng.uniform(-1, 1);
  const Image out = convolve_valid(x, k);
  REQUIRE(out.width() == 6);
  REQUIRE(out.height() == 6);
  for (int y = 0; y < 6; ++y)
    for (int xx = 0; xx < 6; ++xx) {
      double s = 0.0;
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) s += k.at(i, j) * x.at(0, y + i, xx + j);
      CHECK(std::abs(out.at(0, y, xx) - s) < 1e-6);
    }
}

TEST_CASE("convolve_valid is linear and its adjoint matches") {
  const Image a = testing::random_image(12, 10, 1, 4), b = testing::random_image(12, 10, 1, 5);
  const auto k = gaussian_window(5, 1.2);
  Image mix(12, 10, 1);
  for (std::size_t i = 0; i < mix.size(); ++i) mix.data()[i] = 2.5 * a.data()[i] - 0.7 * b.data()[i];
  const Image lhs = convolve_valid(mix, k);
  const Image ca = convolve_valid(a, k), cb = convolve_valid(b, k);
  for (std::size_t i = 0; i < lhs.size(); ++i) CHECK(std::abs(lhs.data()[i] - (2.5 * ca.data()[i] - 0.7 * cb.data()[i])) < 1e-6);

  // <K x, y> == <x, K^T y>
  const Image y = testing::random_image(ca.width(), ca.height(), 1, 6);
  const Image adj = convolve_valid_adjoint(y, k);
  double l = 0.0, r = 0.0;
  for (std::size_t i = 0; i < ca.size(); ++i) l += ca.data()[i] * y.data()[i];
  for (std::size_t i = 0; i < a.size(); ++i) r += a.data()[i] * adj.data()[i];
  CHECK(std::abs(l - r) < 1e-12);
}

TEST_CASE("downsample2 block means") {
  const Image tiny(2, 2, 1, std::vector<double>{0, 0, 1, 1});
  const Image d = downsample2(tiny);
  REQUIRE(d.width() == 1);
  CHECK(d.data()[0] == 0.5);

  const Image flat(6, 4, 3, 0.3);
  const Image dflat = downsample2(flat);
  for (double v : dflat.data()) CHECK(v == doctest::Approx(0.3).epsilon(1e-15));

  const Image x = testing::random_image(16, 16, 1, 7);
  const Image dx = downsample2(x);
  for (int y = 0; y < 8; ++y)
    for (int xx = 0; xx < 8; ++xx) {
      const double m = (x.at(0, 2 * y, 2 * xx) + x.at(0, 2 * y, 2 * xx + 1) + x.at(0, 2 * y + 1, 2 * xx) +
                        x.at(0, 2 * y + 1, 2 * xx + 1)) / 4.0;
      CHECK(dx.at(0, y, xx) == m);
    }
  CHECK(std::abs(mean(dx) - mean(x)) < 1e-9);
}

TEST_CASE("clamp01 and quantize8") {
  Image img(2, 1, 1, std::vector<double>{-0.5, 1.7});
  img = clamp01(std::move(img));
  CHECK(img.data()[0] == 0.0);
  CHECK(img.data()[1] == 1.0);
  Image nan(1, 1, 1, std::vector<double>{std::nan("")});
  CHECK(clamp01(std::move(nan)).data()[0] == 0.0);
  Image q(1, 1, 1, std::vector<double>{0.5});
  CHECK(quantize8(std::move(q)).data()[0] == 128.0 / 255.0);
}

TEST_CASE("image shape contract") {
  const Image img(5, 4, 3);
  CHECK(img.size() == 5u * 4u * 3u);
  CHECK_THROWS(Image(2, 2, 1, std::vector<double>(3)));
}

TEST_CASE("ppm save/load round trip within quantization") {
  const auto dir = testing::temp_dir("imaging_io");
  const Image rgb = testing::random_image(13, 9, 3, 8);
  save_image(rgb, dir / "a.ppm");
  const Image back = load_image(dir / "a.ppm");
  REQUIRE(back.same_shape(rgb));
  CHECK(testing::max_abs_diff(rgb, back) <= 1.0 / 255.0 + 1e-9);

  const Image gray = testing::random_image(7, 5, 1, 9);
  save_image(gray, dir / "g.pgm");
  const Image gback = load_image(dir / "g.pgm");
  CHECK(gback.channels() == 1);
  CHECK(testing::max_abs_diff(gray, gback) <= 1.0 / 255.0 + 1e-9);
  for (double v : back.data()) CHECK((v >= 0.0 && v <= 1.0));
}

TEST_CASE("hand-built P6 decodes to bytes / 255") {
  const auto dir = testing::temp_dir("imaging_p6");
  std::string bytes = "P6\n# comment\n3 2\n255\n";
  for (int i = 0; i < 18; ++i) bytes.push_back(static_cast<char>(i * 14));
  testing::write_file(dir / "k.ppm", bytes);
  const Image img = load_image(dir / "k.ppm");
  REQUIRE(img.width() == 3);
  REQUIRE(img.height() == 2);
  REQUIRE(img.channels() == 3);
  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 3; ++x)
      for (int c = 0; c < 3; ++c) CHECK(img.at(c, y, x) == ((y * 3 + x) * 3 + c) * 14 / 255.0);
}

TEST_CASE("decode errors are distinct") {
  const auto dir = testing::temp_dir("imaging_errors");
  auto code_of = [&](const std::string& content) {
    testing::write_file(dir / "x.ppm", content);
    try {
      load_image(dir / "x.ppm");
    } catch (const ImageFormatError& e) {
      return static_cast<int>(e.code());
    }
    return -1;
  };
  CHECK(code_of("P6\n2 2\n65535\n" + std::string(24, '\0')) == static_cast<int>(ImageFormatError::Code::UnsupportedBitDepth));
  CHECK(code_of("P6\n2 2\n255\n" + std::string(5, '\0')) == static_cast<int>(ImageFormatError::Code::TruncatedPayload));
  CHECK(code_of("P6\nfoo\n") == static_cast<int>(ImageFormatError::Code::MalformedHeader));
  CHECK(code_of("P3\n1 1\n255\n0 0 0\n") == static_cast<int>(ImageFormatError::Code::UnsupportedFormat));
  CHECK_THROWS_AS(load_image(dir / "missing.ppm"), IoError);
}

TEST_CASE("luminance weights") {
  const Image px(1, 1, 3, std::vector<double>{1.0, 0.0, 0.0});
  CHECK(luminance(px).data()[0] == doctest::Approx(0.299).epsilon(1e-15));
  CHECK(kLumaWeights[0] + kLumaWeights[1] + kLumaWeights[2] == doctest::Approx(1.0));
}

#ifdef LUMINA_HAVE_PNG
TEST_CASE("png round trip and signature detection") {
  const auto dir = testing::temp_dir("png");
  const Image rgb = quantize8(testing::random_image(13, 7, 3, 1));
  const Image gray = quantize8(testing::random_image(5, 9, 1, 2));
  save_image(rgb, dir / "rgb.png");
  save_image(gray, dir / "gray.PNG");
  CHECK(load_image(dir / "rgb.png").data() == rgb.data());
  const Image g = load_image(dir / "gray.PNG");
  CHECK(g.channels() == 1);
  CHECK(g.data() == gray.data());
  std::filesystem::copy_file(dir / "rgb.png", dir / "named.ppm");
  CHECK(load_image(dir / "named.ppm").data() == rgb.data());

  const std::string bytes = testing::read_file(dir / "rgb.png");
  testing::write_file(dir / "cut.png", bytes.substr(0, bytes.size() / 2));
  CHECK_THROWS_AS(load_image(dir / "cut.png"), ImageFormatError);

  png_image deep{};
  deep.version = PNG_IMAGE_VERSION;
  deep.width = 4;
  deep.height = 4;
  deep.format = PNG_FORMAT_LINEAR_Y;
  std::vector<png_uint_16> samples(16, 30000);
  REQUIRE(png_image_write_to_file(&deep, (dir / "deep.png").c_str(), 0, samples.data(), 0, nullptr));
  try {
    load_image(dir / "deep.png");
    FAIL("expected a bit-depth error");
  } catch (const ImageFormatError& e) {
    CHECK(e.code() == ImageFormatError::Code::UnsupportedBitDepth);
  }
}
#endif
