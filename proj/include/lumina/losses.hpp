#pragma once

#include <vector>

#include "lumina/image.hpp"
#include "lumina/quality_model.hpp"

namespace lumina {

/// Patch = contrast * structure + per-channel mean colour.
struct PatchDecomposition {
  int width = 0;
  int height = 0;
  int channels = 0;
  /// L2 norm of the mean-removed patch.
  double contrast = 0.0;
  /// Mean-removed patch divided by the contrast (zero signal when degenerate).
  std::vector<double> structure;
  std::vector<double> mean_color;
  /// HSV of the mean colour; hue 0, saturation 0 for single-channel patches.
  HsvPixel mean_hsv;
  bool degenerate = false;

  Image reconstruct() const;
};

PatchDecomposition decompose_patch(const Image& patch);

struct FidelityConfig {
  int window = 11;
  double sigma = 1.5;
  /// Stabilizer of the structure term.
  double c = 9e-4;
  double hue_weight = 1.0;
  /// The hue distance is gated by min(s_ref, s_enh)^gate_exponent.
  double gate_exponent = 1.0;
};

struct JointLossConfig {
  double lambda_quality = 1.0;
  double q_max = 1.0;
};

struct LossResult {
  double loss = 0.0;
  /// dL / d(enhanced pixel).
  Image grad;
};

struct FidelityResult {
  double loss = 0.0;
  double structure_term = 0.0;
  double hue_term = 0.0;
  Image grad;
};

/// (1 - mean S) + hue_weight * mean H, with S the windowed luminance structure
/// similarity (2 cov + c) / (var_ref + var_enh + c) and H the saturation-gated
/// circular hue distance per pixel.
FidelityResult fidelity_loss(const Image& ref, const Image& enh, const FidelityConfig& config = {});

/// 1 - mean over channels of per-channel SSIM (11x11 Gaussian window, sigma 1.5).
LossResult ssim_loss(const Image& ref, const Image& enh);

struct QualityLossResult {
  double loss = 0.0;
  QualityScores scores;
  Image grad;
};

/// |q_max - Q_o(enh)|, differentiated through the head and the frozen backbone.
QualityLossResult quality_loss(const Image& enh, const QualityModel& model, const JointLossConfig& config = {});

struct JointResult {
  double loss = 0.0;
  double fidelity = 0.0;
  double quality = 0.0;
  Image grad;
};

/// fidelity + lambda_quality * quality. With lambda_quality == 0 the quality
/// model is not evaluated.
JointResult joint_loss(const Image& ref, const Image& enh, const QualityModel* model, const FidelityConfig& fcfg,
                       const JointLossConfig& jcfg);

}  // namespace lumina
