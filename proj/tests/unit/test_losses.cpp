#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "lumina/error.hpp"
#include "lumina/losses.hpp"
#include "lumina/nn/gradient_check.hpp"

using namespace lumina;

namespace {

QualityModel tiny_model(std::uint64_t seed) {
  return QualityModel::initialize(BackboneProfile::tiny(), HeadConfig{}, seed);
}

double luma_of_hue(double h) {
  const auto rgb = hsv_to_rgb({std::fmod(h, 1.0), 0.9, 1.0});
  return kLumaWeights[0] * rgb[0] + kLumaWeights[1] * rgb[1] + kLumaWeights[2] * rgb[2];
}

// Single saturated hue whose luma survives a quarter-turn rotation; texture lives in value.
Image saturated_fixture(int size) {
  double lo = 0.0, hi = 0.5;
  auto g = [](double h) { return luma_of_hue(h) - luma_of_hue(h + 0.25); };
  if (g(lo) * g(hi) > 0.0) hi = 0.75;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (g(lo) * g(mid) <= 0.0 ? hi : lo) = mid;
  }
  const double hue = 0.5 * (lo + hi);
  const Image v = testing::random_image(size, size, 1, 77, 0.3, 0.95);
  Image img(size, size, 3);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const auto rgb = hsv_to_rgb({hue, 0.9, v.at(0, y, x)});
      for (int c = 0; c < 3; ++c) img.at(c, y, x) = rgb[static_cast<std::size_t>(c)];
    }
  return img;
}

Image rotate_hue(const Image& img, double dh) {
  Image out = img;
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) {
      auto hsv = rgb_to_hsv(img.at(0, y, x), img.at(1, y, x), img.at(2, y, x));
      hsv.hue = std::fmod(hsv.hue + dh, 1.0);
      const auto rgb = hsv_to_rgb(hsv);
      for (int c = 0; c < 3; ++c) out.at(c, y, x) = rgb[static_cast<std::size_t>(c)];
    }
  return out;
}

double fd_error(const Image& ref, Image enh, const std::function<LossResult(const Image&, const Image&)>& fn) {
  const Image grad = fn(ref, enh).grad;
  auto loss = [&] { return fn(ref, enh).loss; };
  return nn::gradient_check({{"enh", enh.data(), grad.data()}}, loss).max_relative_error;
}

}  // namespace

TEST_CASE("patch decomposition identities on random patches") {
  for (std::uint64_t s = 0; s < 200; ++s) {
    const int c = s % 2 ? 3 : 1;
    const Image p = testing::random_image(7, 5, c, s);
    const auto d = decompose_patch(p);
    REQUIRE_FALSE(d.degenerate);
    CHECK(testing::max_abs_diff(d.reconstruct(), p) < 1e-9);
    double norm = 0.0;
    for (double v : d.structure) norm += v * v;
    CHECK(std::abs(std::sqrt(norm) - 1.0) < 1e-9);
    const std::size_t plane = 35;
    for (int ch = 0; ch < c; ++ch) {
      double m = 0.0;
      for (std::size_t i = 0; i < plane; ++i) m += d.contrast * d.structure[ch * plane + i];
      CHECK(std::abs(m / plane) < 1e-9);
    }
  }
}

TEST_CASE("degenerate and hand-evaluated patches") {
  const auto flat = decompose_patch(Image(4, 4, 3, 0.5));
  CHECK(flat.degenerate);
  CHECK(flat.contrast == 0.0);
  CHECK(flat.mean_hsv.hue == 0.0);
  CHECK(flat.mean_hsv.saturation == 0.0);
  CHECK(flat.mean_hsv.value == 0.5);
  CHECK(testing::max_abs_diff(flat.reconstruct(), Image(4, 4, 3, 0.5)) == 0.0);

  const auto two = decompose_patch(Image(2, 1, 1, std::vector<double>{0.0, 1.0}));
  CHECK(two.mean_color[0] == 0.5);
  CHECK(std::abs(two.contrast - std::sqrt(0.5)) < 1e-15);
  CHECK(std::abs(two.structure[0] + 1.0 / std::sqrt(2.0)) < 1e-15);
  CHECK(std::abs(two.structure[1] - 1.0 / std::sqrt(2.0)) < 1e-15);
}

TEST_CASE("fidelity loss zero on identity and non-negative") {
  const Image x = testing::fixture(32);
  const auto same = fidelity_loss(x, x);
  CHECK(std::abs(same.loss) < 1e-9);
  for (std::uint64_t s = 0; s < 10; ++s) {
    const Image a = testing::random_image(16, 16, 3, s), b = testing::random_image(16, 16, 3, s + 50);
    CHECK(fidelity_loss(a, b).loss >= 0.0);
  }
}

TEST_CASE("fidelity loss separates hue from structure") {
  const Image ref = saturated_fixture(32);
  const auto r = fidelity_loss(ref, rotate_hue(ref, 0.25));
  CHECK(r.hue_term > 0.1);
  CHECK(r.structure_term < 1e-3);
  CHECK(r.structure_term < r.hue_term);
}

TEST_CASE("fidelity structure term ignores a constant brightness offset") {
  const Image ref = testing::random_image(24, 24, 3, 1, 0.2, 0.7);
  const Image enh = testing::random_image(24, 24, 3, 2, 0.2, 0.7);
  Image shifted = enh;
  for (double& v : shifted.data()) v += 0.1;
  CHECK(std::abs(fidelity_loss(ref, enh).structure_term - fidelity_loss(ref, shifted).structure_term) < 1e-6);
}

TEST_CASE("fidelity and ssim loss gradients match finite differences") {
  for (std::uint64_t s = 0; s < 3; ++s) {
    const Image ref = testing::random_image(16, 16, 3, 10 + s), enh = testing::random_image(16, 16, 3, 20 + s);
    const double fe = fd_error(ref, enh, [](const Image& a, const Image& b) {
      auto r = fidelity_loss(a, b);
      return LossResult{r.loss, r.grad};
    });
    CHECK(fe < 1e-4);
    CHECK(fd_error(ref, enh, [](const Image& a, const Image& b) { return ssim_loss(a, b); }) < 1e-4);
  }
}

TEST_CASE("ssim loss range and identity") {
  const Image x = testing::fixture(32);
  CHECK(std::abs(ssim_loss(x, x).loss) < 1e-12);
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto l = ssim_loss(testing::random_image(16, 16, 3, s), testing::random_image(16, 16, 3, s + 7)).loss;
    CHECK(l >= 0.0);
    CHECK(l <= 2.0);
  }
}

TEST_CASE("quality loss arithmetic") {
  QualityModel m = tiny_model(1);
  for (auto& p : m.head.parameters()) p.tensor->fill(0.0);
  m.head.fused(2).bias[0] = 0.3;
  const Image x = testing::random_image(8, 8, 3, 3);
  const auto r = quality_loss(x, m, {1.0, 1.0});
  CHECK(std::abs(r.scores.q_o - 0.3) < 1e-15);
  CHECK(std::abs(r.loss - 0.7) < 1e-15);
  CHECK(quality_loss(x, m, {1.0, 0.3}).loss == 0.0);
}

TEST_CASE("quality loss gradient through the frozen backbone") {
  const QualityModel m = tiny_model(2);
  for (std::uint64_t s = 0; s < 3; ++s) {
    Image x = testing::random_image(8, 8, 3, 30 + s);
    const Image grad = quality_loss(x, m).grad;
    auto loss = [&] { return quality_loss(x, m).loss; };
    CHECK(nn::gradient_check({{"enh", x.data(), grad.data()}}, loss).max_relative_error < 1e-4);
  }
}

TEST_CASE("joint loss composition") {
  const QualityModel m = tiny_model(3);
  const Image ref = testing::random_image(16, 16, 3, 40), enh = testing::random_image(16, 16, 3, 41);
  const FidelityConfig f;
  const auto fid = fidelity_loss(ref, enh, f);
  const auto zero = joint_loss(ref, enh, nullptr, f, {0.0, 1.0});
  CHECK(zero.loss == fid.loss);
  CHECK(zero.grad.data() == fid.grad.data());

  const auto q = quality_loss(enh, m, {1.0, 1.0});
  const auto one = joint_loss(ref, enh, &m, f, {1.0, 1.0});
  CHECK(std::abs(one.loss - (fid.loss + q.loss)) < 1e-12);
  for (std::size_t i = 0; i < one.grad.size(); ++i)
    CHECK(std::abs(one.grad.data()[i] - (fid.grad.data()[i] + q.grad.data()[i])) < 1e-12);

  const auto half = joint_loss(ref, enh, &m, f, {0.5, 1.0});
  CHECK(std::abs(half.quality - one.quality) < 1e-15);
  CHECK(std::abs(half.loss - (fid.loss + 0.5 * q.loss)) < 1e-12);

  const double q_ref = m.predict(ref).q_o;
  CHECK(std::abs(joint_loss(ref, ref, &m, f, {1.0, q_ref}).loss) < 1e-9);

  Image e = enh;
  const Image g = joint_loss(ref, e, &m, f, {1.0, 1.0}).grad;
  auto loss = [&] { return joint_loss(ref, e, &m, f, {1.0, 1.0}).loss; };
  CHECK(nn::gradient_check({{"enh", e.data(), g.data()}}, loss).max_relative_error < 1e-4);
}
