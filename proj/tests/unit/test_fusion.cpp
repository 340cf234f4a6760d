#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "helpers.hpp"
#include "lumina/error.hpp"
#include "lumina/fusion.hpp"

using namespace lumina;

namespace {

LabeledScoreSet planted(std::array<double, 4> lambda, int n, std::uint64_t seed, double noise = 0.0) {
  Rng rng(seed);
  LabeledScoreSet set;
  for (int i = 0; i < n; ++i) {
    MetricTriple t{rng.uniform(0.3, 1.0), rng.uniform(0.1, 1.0), rng.uniform(0.5, 1.0)};
    const double y = lambda[0] + lambda[1] * t.fsim + lambda[2] * t.iwssim + lambda[3] * t.deepsim + noise * rng.normal();
    set.rows.push_back({t, y});
  }
  return set;
}

std::vector<double> column(const LabeledScoreSet& s, int k) {
  std::vector<double> v;
  for (const auto& r : s.rows) v.push_back(k == 0 ? r.triple.fsim : k == 1 ? r.triple.iwssim : k == 2 ? r.triple.deepsim : r.mos);
  return v;
}

}  // namespace

TEST_CASE("fit_fusion recovers planted coefficients") {
  const auto set = planted({0.5, 2.0, -1.0, 0.25}, 40, 1);
  const auto m = fit_fusion(set);
  CHECK(std::abs(m.lambda[0] - 0.5) < 1e-9);
  CHECK(std::abs(m.lambda[1] - 2.0) < 1e-9);
  CHECK(std::abs(m.lambda[2] + 1.0) < 1e-9);
  CHECK(std::abs(m.lambda[3] - 0.25) < 1e-9);
}

TEST_CASE("constant targets fit to the intercept") {
  auto set = planted({0, 0, 0, 0}, 20, 2);
  for (auto& r : set.rows) r.mos = 0.37;
  const auto m = fit_fusion(set, 1e-6);
  CHECK(std::abs(m.lambda[0] - 0.37) < 1e-6);
  for (int k = 1; k < 4; ++k) CHECK(std::abs(m.lambda[static_cast<std::size_t>(k)]) < 1e-6);
  // Constant fitted output: anchors widened so the pseudo-MOS stays defined.
  CHECK(m.norm_hi > m.norm_lo);
}

TEST_CASE("rank-deficient data and fallback") {
  LabeledScoreSet set;
  for (int i = 0; i < 10; ++i) set.rows.push_back({{0.5, 0.5, 0.5}, 0.1 * i});
  CHECK_THROWS_AS(fit_fusion(set), PreconditionError);
  const auto m = fit_fusion_with_fallback(set);
  for (double l : m.lambda) CHECK(std::isfinite(l));
  LabeledScoreSet small;
  small.rows.resize(4);
  CHECK_THROWS_AS(fit_fusion(small), PreconditionError);
}

TEST_CASE("published default model") {
  const auto m = FusionModel::published_default();
  CHECK(m.lambda == std::array<double, 4>{-1.8041, 2.6152, -0.2776, 0.2563});
  CHECK(m.norm_lo == 0.0);
  CHECK(m.norm_hi == 1.0);
  CHECK(std::abs(m.raw({1, 1, 1}) - 0.7898) < 1e-6);
  CHECK(std::abs(apply_fusion(m, {1, 1, 1}) - 0.7898) < 1e-6);
}

TEST_CASE("apply_fusion anchors and clamping") {
  FusionModel m;
  m.lambda = {0.0, 1.0, 0.0, 0.0};
  m.norm_lo = 0.2;
  m.norm_hi = 0.8;
  CHECK(apply_fusion(m, {0.2, 0, 0}) == 0.0);
  CHECK(apply_fusion(m, {0.8, 0, 0}) == 1.0);
  CHECK(apply_fusion(m, {1.5, 0, 0}) == 1.0);
  CHECK(apply_fusion(m, {-3.0, 0, 0}) == 0.0);
  CHECK(std::abs(apply_fusion(m, {0.5, 0, 0}) - 0.5) < 1e-15);
}

TEST_CASE("apply_fusion is monotone in positively weighted metrics") {
  const auto m = FusionModel::published_default();
  double prev = -1.0;
  for (double f = 0.0; f <= 1.0; f += 0.05) {
    const double v = apply_fusion(m, {f, 0.6, 0.7});
    CHECK(v >= prev);
    prev = v;
  }
}

TEST_CASE("plcc conventions and oracle") {
  const std::vector<double> a{0.1, 0.5, -0.3, 2.0, 1.1, 0.7};
  std::vector<double> b, neg;
  for (double v : a) {
    b.push_back(2 * v + 1);
    neg.push_back(-v);
  }
  CHECK(std::abs(plcc(a, b) - 1.0) < 1e-12);
  CHECK(std::abs(plcc(a, neg) + 1.0) < 1e-12);

  Rng rng(3);
  std::vector<double> x(50), y(50);
  for (auto& v : x) v = rng.normal();
  for (auto& v : y) v = rng.normal();
  double mx = 0, my = 0;
  for (int i = 0; i < 50; ++i) {
    mx += x[static_cast<std::size_t>(i)] / 50;
    my += y[static_cast<std::size_t>(i)] / 50;
  }
  double sxy = 0, sxx = 0, syy = 0;
  for (int i = 0; i < 50; ++i) {
    const double dx = x[static_cast<std::size_t>(i)] - mx, dy = y[static_cast<std::size_t>(i)] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  CHECK(std::abs(plcc(x, y) - sxy / std::sqrt(sxx * syy)) < 1e-12);
  CHECK_THROWS_AS(plcc(std::vector<double>{1, 2}, std::vector<double>{1, 2}), PreconditionError);
  CHECK_THROWS_AS(plcc(std::vector<double>{1, 1, 1}, std::vector<double>{1, 2, 3}), PreconditionError);
  CHECK_THROWS_AS(plcc(std::vector<double>{1, 2, 3}, std::vector<double>{1, 2}), ShapeError);
}

TEST_CASE("srcc conventions, ties and invariance") {
  const std::vector<double> a{0.3, -1.0, 2.0, 0.9, 1.5};
  std::vector<double> cube, rev;
  for (double v : a) {
    cube.push_back(v * v * v);
    rev.push_back(-v);
  }
  CHECK(std::abs(srcc(a, cube) - 1.0) < 1e-12);
  CHECK(std::abs(srcc(a, rev) + 1.0) < 1e-12);
  CHECK(average_ranks(std::vector<double>{1, 2, 2, 3}) == std::vector<double>{1, 2.5, 2.5, 4});
  CHECK(average_ranks(std::vector<double>{3, 1, 3, 3}) == std::vector<double>{3, 1, 3, 3});

  Rng rng(4);
  std::vector<double> x(30), y(30), tx, ty;
  for (auto& v : x) v = rng.uniform();
  for (auto& v : y) v = rng.uniform();
  for (double v : x) tx.push_back(std::exp(3 * v));
  for (double v : y) ty.push_back(std::atan(v) * 7 + 2);
  CHECK(std::abs(srcc(x, y) - srcc(tx, ty)) < 1e-12);
}

TEST_CASE("least squares optimality on the fit set") {
  for (std::uint64_t seed = 10; seed < 20; ++seed) {
    const auto set = planted({0.1, 0.8, 0.3, -0.2}, 60, seed, 0.2);
    const auto m = fit_fusion(set);
    std::vector<double> fused;
    for (const auto& r : set.rows) fused.push_back(m.raw(r.triple));
    const auto y = column(set, 3);
    const double pf = plcc(fused, y);
    for (int k = 0; k < 3; ++k) CHECK(pf >= std::abs(plcc(column(set, k), y)) - 1e-12);
  }
}

TEST_CASE("fusion model file round trip") {
  const auto dir = testing::temp_dir("fusion_io");
  auto m = fit_fusion(planted({0.5, 2.0, -1.0, 0.25}, 30, 5, 0.01));
  m.provenance = "unit test";
  save_fusion(m, dir / "f.txt");
  const auto back = load_fusion(dir / "f.txt");
  CHECK(back.lambda == m.lambda);
  CHECK(back.norm_lo == m.norm_lo);
  CHECK(back.norm_hi == m.norm_hi);
  CHECK(back.provenance == "unit test");
  testing::write_file(dir / "bad.txt", testing::read_file(dir / "f.txt") + "extra = 1\n");
  CHECK_THROWS_AS(load_fusion(dir / "bad.txt"), ConfigError);
  CHECK_THROWS_AS(load_fusion(dir / "none.txt"), IoError);
}
