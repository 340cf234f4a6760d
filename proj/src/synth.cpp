#include "lumina/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "lumina/error.hpp"
#include "lumina/image_io.hpp"
#include "lumina/manifest.hpp"
#include "lumina/parallel.hpp"

namespace lumina {
namespace {

std::string numbered(const char* prefix, int i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%04d", prefix, i);
  return buf;
}

void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) throw IoError("cannot create directory " + dir.string());
}

double mean_luma(const Image& img) { return mean(luminance(img)); }

}  // namespace

Image synth_reference(std::uint64_t seed, int size) {
  if (size < 8) throw PreconditionError("synthetic images must be at least 8x8");
  Rng rng(seed);
  Image img(size, size, 3);
  std::array<double, 3> c1, c2;
  for (auto& v : c1) v = rng.uniform(0.25, 0.95);
  for (auto& v : c2) v = rng.uniform(0.25, 0.95);
  const double theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double dx = std::cos(theta), dy = std::sin(theta);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const double t = 0.5 + ((x + 0.5) / size - 0.5) * dx + ((y + 0.5) / size - 0.5) * dy;
      const double u = std::clamp(t, 0.0, 1.0);
      for (int c = 0; c < 3; ++c) img.at(c, y, x) = c1[static_cast<std::size_t>(c)] * (1.0 - u) + c2[static_cast<std::size_t>(c)] * u;
    }

  const int shapes = 3 + static_cast<int>(rng.below(4));
  for (int s = 0; s < shapes; ++s) {
    std::array<double, 3> col;
    for (auto& v : col) v = rng.uniform(0.05, 1.0);
    const bool disc = rng.uniform() < 0.5;
    const double cx = rng.uniform(0.0, size), cy = rng.uniform(0.0, size);
    const double r = rng.uniform(0.08, 0.3) * size;
    const double hw = rng.uniform(0.08, 0.3) * size, hh = rng.uniform(0.08, 0.3) * size;
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        const double px = x + 0.5 - cx, py = y + 0.5 - cy;
        const bool inside = disc ? px * px + py * py <= r * r : std::abs(px) <= hw && std::abs(py) <= hh;
        if (!inside) continue;
        for (int c = 0; c < 3; ++c) img.at(c, y, x) = col[static_cast<std::size_t>(c)];
      }
  }

  const double amp = rng.uniform(0.02, 0.12);
  const double freq = rng.uniform(2.0, 10.0);
  const double phi = rng.uniform(0.0, std::numbers::pi);
  const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const double p = (x * std::cos(phi) + y * std::sin(phi)) / size;
      const double v = amp * std::sin(2.0 * std::numbers::pi * freq * p + phase);
      for (int c = 0; c < 3; ++c) img.at(c, y, x) += v;
    }

  img = clamp01(gaussian_blur(img, 0.6));
  const double m = mean_luma(img);
  if (m < 0.25) {
    for (double& v : img.data()) v += 0.25 - m;
    img = clamp01(std::move(img));
  }
  return quantize8(std::move(img));
}

Image synth_low_light(const Image& ref, Rng& rng, LowLightParams* params) {
  const double ref_mean = mean_luma(ref);
  for (int attempt = 0; attempt < 1000; ++attempt) {
    LowLightParams p{rng.uniform(2.0, 5.0), rng.uniform(0.1, 0.5), rng.uniform(0.01, 0.05)};
    Image low = ref;
    for (double& v : low.data()) v = p.scale * std::pow(v, p.gamma) + p.noise_sigma * rng.normal();
    low = quantize8(clamp01(std::move(low)));
    if (mean_luma(low) < ref_mean) {
      if (params) *params = p;
      return low;
    }
  }
  throw PreconditionError("synth_low_light: reference too dark to produce a darker counterpart");
}

Image apply_distortion(const Image& ref, Distortion family, int level, Rng& rng) {
  if (level < 0 || level >= kDistortionLevels) throw PreconditionError("distortion level out of range");
  const double s = level + 1.0;
  Image out = ref;
  switch (family) {
    case Distortion::Noise: {
      const double sigma = 0.02 * s;
      for (double& v : out.data()) v += sigma * rng.normal();
      break;
    }
    case Distortion::Blur:
      out = gaussian_blur(ref, 0.5 * s);
      break;
    case Distortion::Underexposure: {
      const double k = 1.0 - 0.17 * s, gamma = 1.0 + 0.4 * s;
      for (double& v : out.data()) v = k * std::pow(v, gamma);
      break;
    }
    case Distortion::Overexposure: {
      const double k = 1.0 - 0.17 * s, gamma = 1.0 + 0.4 * s;
      for (double& v : out.data()) v = 1.0 - k * std::pow(std::max(0.0, 1.0 - v), gamma);
      break;
    }
    case Distortion::Contrast: {
      const double a = 1.0 - 0.17 * s;
      const double m = mean_luma(ref);
      std::array<double, 3> cast;
      double norm = 0.0;
      for (auto& c : cast) {
        c = rng.normal();
        norm += c * c;
      }
      norm = std::sqrt(norm) + 1e-12;
      for (int c = 0; c < out.channels(); ++c)
        for (double& v : out.plane(c)) v = m + a * (v - m) + 0.03 * s * cast[static_cast<std::size_t>(c % 3)] / norm;
      break;
    }
  }
  return quantize8(clamp01(std::move(out)));
}

Image apply_graded_degradation(const Image& ref, int level, Rng& rng) {
  const Distortion exposure = rng.uniform() < 0.5 ? Distortion::Underexposure : Distortion::Overexposure;
  Image out = apply_distortion(ref, Distortion::Blur, level, rng);
  out = apply_distortion(out, Distortion::Contrast, level, rng);
  out = apply_distortion(out, exposure, level, rng);
  return apply_distortion(out, Distortion::Noise, level, rng);
}

std::filesystem::path write_synth_pairs(const std::filesystem::path& out_dir, const SynthPairsOptions& options) {
  if (options.count <= 0) throw PreconditionError("synth: count must be positive");
  ensure_dir(out_dir / "ref");
  ensure_dir(out_dir / "low");
  Manifest manifest;
  manifest.role = ManifestRole::PairedLol;
  manifest.entries.resize(static_cast<std::size_t>(options.count));
  parallel_for(manifest.entries.size(), [&](std::size_t i) {
    const int id = static_cast<int>(i) + 1;
    const std::string name = numbered("p", id);
    const Image ref = synth_reference(derive_seed(options.seed, "reference" + name), options.size);
    Rng rng(derive_seed(options.seed, "low" + name));
    const Image low = synth_low_light(ref, rng);
    save_image(ref, out_dir / "ref" / (name + ".ppm"));
    save_image(low, out_dir / "low" / (name + ".ppm"));
    manifest.entries[i] = {out_dir / "low" / (name + ".ppm"), out_dir / "ref" / (name + ".ppm"), std::nullopt, name};
  });
  const auto path = out_dir / "pairs.tsv";
  write_manifest(path, manifest);
  return path;
}

std::filesystem::path write_synth_labelled(const std::filesystem::path& out_dir, const SynthLabelledOptions& options) {
  if (options.contents <= 0) throw PreconditionError("synth-labelled: contents must be positive");
  if (options.test_fraction < 0.0 || options.test_fraction >= 1.0) {
    throw PreconditionError("synth-labelled: test fraction must be in [0, 1)");
  }
  ensure_dir(out_dir / "ref");
  ensure_dir(out_dir / "dist");
  const auto contents = static_cast<std::size_t>(options.contents);
  std::vector<std::vector<ManifestEntry>> per_content(contents);
  parallel_for(contents, [&](std::size_t i) {
    const std::string name = numbered("c", static_cast<int>(i) + 1);
    const Image ref = synth_reference(derive_seed(options.seed, "reference" + name), options.size);
    const auto ref_path = out_dir / "ref" / (name + ".ppm");
    save_image(ref, ref_path);
    Rng rng(derive_seed(options.seed, "distort" + name));
    for (int level = 0; level < kDistortionLevels; ++level) {
      const Image dist = apply_graded_degradation(ref, level, rng);
      const auto path = out_dir / "dist" / (name + "_l" + std::to_string(level) + ".ppm");
      save_image(dist, path);
      per_content[i].push_back({path, ref_path, kLevelTargets[static_cast<std::size_t>(level)], name});
    }
  });

  std::vector<std::size_t> order(contents);
  for (std::size_t i = 0; i < contents; ++i) order[i] = i;
  Rng split_rng(derive_seed(options.seed, "split"));
  split_rng.shuffle(order.begin(), order.end());
  const auto test_count = static_cast<std::size_t>(std::lround(options.test_fraction * static_cast<double>(contents)));
  std::vector<bool> is_test(contents, false);
  for (std::size_t k = 0; k < test_count; ++k) is_test[order[k]] = true;

  Manifest all, train, test;
  all.role = train.role = test.role = ManifestRole::LabeledQuality;
  for (std::size_t i = 0; i < contents; ++i)
    for (const auto& e : per_content[i]) {
      all.entries.push_back(e);
      (is_test[i] ? test : train).entries.push_back(e);
    }
  write_manifest(out_dir / "all.tsv", all);
  write_manifest(out_dir / "train.tsv", train);
  write_manifest(out_dir / "test.tsv", test);
  return out_dir / "all.tsv";
}

}  // namespace lumina
