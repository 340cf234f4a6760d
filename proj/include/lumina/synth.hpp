#pragma once

#include <array>
#include <cstdint>
#include <filesystem>

#include "lumina/image.hpp"
#include "lumina/random.hpp"

namespace lumina {

/// Procedural RGB scene: two-colour gradient background, random discs and
/// rectangles, a stripe texture, light blur. Mean luminance is at least 0.25.
Image synth_reference(std::uint64_t seed, int size);

struct LowLightParams {
  double gamma = 1.0;
  double scale = 1.0;
  double noise_sigma = 0.0;
};

/// clamp(scale * ref^gamma + noise) quantized to 8 bits, with gamma in [2, 5],
/// scale in [0.1, 0.5] and noise sigma in [0.01, 0.05]. Parameters are redrawn
/// until the result is darker than the reference on average.
Image synth_low_light(const Image& ref, Rng& rng, LowLightParams* params = nullptr);

enum class Distortion { Noise, Blur, Underexposure, Contrast, Overexposure };
inline constexpr int kDistortionLevels = 5;
/// Quality target of each level, mildest first.
inline constexpr std::array<double, kDistortionLevels> kLevelTargets{0.9, 0.7, 0.5, 0.3, 0.1};

/// Applies `family` at `level` (0 = mildest) and quantizes to 8 bits.
Image apply_distortion(const Image& ref, Distortion family, int level, Rng& rng);

/// Blur, contrast loss with a colour cast, under- or overexposure (a fair coin)
/// and noise, all at `level`.
Image apply_graded_degradation(const Image& ref, int level, Rng& rng);

struct SynthPairsOptions {
  int count = 32;
  int size = 64;
  std::uint64_t seed = 1;
};

/// Writes ref/, low/ and pairs.tsv under `out_dir`; returns the manifest path.
std::filesystem::path write_synth_pairs(const std::filesystem::path& out_dir, const SynthPairsOptions& options);

struct SynthLabelledOptions {
  int contents = 60;
  int size = 64;
  std::uint64_t seed = 1;
  double test_fraction = 0.2;
};

/// Writes ref/, dist/ and the manifests all.tsv, train.tsv and test.tsv
/// (content-disjoint) under `out_dir`; returns the path of all.tsv.
std::filesystem::path write_synth_labelled(const std::filesystem::path& out_dir, const SynthLabelledOptions& options);

}  // namespace lumina
