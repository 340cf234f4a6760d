#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lumina/backbone.hpp"
#include "lumina/image.hpp"

namespace lumina {

/// Full-reference metric registry.
enum class MetricId { Psnr, Ssim, MsSsim, Gmsd, Fsim, IwSsimV, DeepSim };

std::string_view metric_name(MetricId id);
std::optional<MetricId> parse_metric(std::string_view name);
const std::vector<MetricId>& all_metrics();
/// True for metrics where larger means more similar (everything except GMSD).
bool higher_is_better(MetricId id);

struct MetricScore {
  MetricId id;
  double value;
  /// Number of scales actually used by the multi-scale metrics (0 otherwise).
  int scales = 0;
};

/// The three operands of the pseudo-MOS fusion.
struct MetricTriple {
  double fsim = 0.0;
  double iwssim = 0.0;
  double deepsim = 0.0;
};

inline constexpr double kPsnrCap = 99.0;

/// 10 log10(1 / MSE) over all channels; identical images give kPsnrCap.
double psnr(const Image& ref, const Image& test);

/// Luminance SSIM: 11x11 Gaussian window (sigma 1.5), C1 = 0.01^2, C2 = 0.03^2,
/// mean over the valid region.
double ssim(const Image& ref, const Image& test);

struct MultiScaleResult {
  double value;
  int scales;
};

/// Standard five-scale exponents.
inline constexpr double kMsSsimExponents[5] = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};

/// Five-scale MS-SSIM on luminance. When the image cannot host five scales the
/// largest feasible count is used with renormalized exponents; `scales` reports it.
/// Negative contrast-structure factors are clipped to 0 before exponentiation.
MultiScaleResult msssim(const Image& ref, const Image& test);

/// MS-SSIM whose finest-scale pooling uses information weights
/// log(1 + (var_ref + var_test) / 1e-3); all-zero weights fall back to uniform.
MultiScaleResult iwssim_v(const Image& ref, const Image& test);

/// Gradient magnitude similarity deviation with 3x3 Prewitt operators,
/// c = 170 / 255^2. Lower is better; identical images give 0.
double gmsd(const Image& ref, const Image& test);

struct FsimConfig {
  int scales = 4;
  int orientations = 4;
  double min_wavelength = 6.0;
  double mult = 2.0;
  double sigma_on_f = 0.55;
  double d_theta_on_sigma = 1.2;
  double noise_k = 2.0;
  double epsilon = 1e-4;
  /// Phase-congruency and gradient similarity constants ([0,1] intensity scale).
  double t1 = 0.85;
  double t2 = 160.0 / (255.0 * 255.0);
  int min_side = 32;
};

/// Grayscale FSIM: log-Gabor phase congruency + Scharr gradient magnitude,
/// pooled with max(PC_ref, PC_test).
double fsim(const Image& ref, const Image& test, const FsimConfig& config = {});

/// Phase congruency map of a single-channel image (exposed for testing).
Image phase_congruency(const Image& gray, const FsimConfig& config = {});

/// Deep-feature similarity: per backbone stage and channel, compares feature
/// mean and standard deviation with SSIM-style factors (c1 = c2 = 1e-6);
/// averaged over channels, then over stages. Consumes RGB.
double deepsim(const Image& ref, const Image& test, const Backbone& backbone);

/// Throws PreconditionError (missing backbone for deepsim, undersized input) or ShapeError.
MetricScore compute_metric(MetricId id, const Image& ref, const Image& test, const Backbone* backbone);

MetricTriple metric_triple(const Image& ref, const Image& test, const Backbone& backbone,
                           const FsimConfig& fsim_config = {});

}  // namespace lumina
