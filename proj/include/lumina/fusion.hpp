#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "lumina/metrics.hpp"

namespace lumina {

/// Four-coefficient linear map from a metric triple to a pseudo-MOS, followed by
/// min/max normalization onto [0, 1].
struct FusionModel {
  /// Intercept, fsim, iwssim, deepsim.
  std::array<double, 4> lambda{0.0, 0.0, 0.0, 0.0};
  double norm_lo = 0.0;
  double norm_hi = 1.0;
  std::string provenance = "unfitted";

  /// Published coefficients with anchors (0, 1). They were calibrated against
  /// other metric implementations, so they are only a starting point here.
  static FusionModel published_default();

  double raw(const MetricTriple& t) const;
};

struct LabeledScoreRow {
  MetricTriple triple;
  double mos = 0.0;
};

struct LabeledScoreSet {
  std::vector<LabeledScoreRow> rows;
  std::string provenance = "human";
};

/// Least squares with `ridge` * I added on the non-intercept block. Needs at
/// least five finite rows; throws PreconditionError on a rank-deficient system
/// when ridge is 0.
FusionModel fit_fusion(const LabeledScoreSet& data, double ridge = 0.0);

/// Like fit_fusion, but retries with ridge 1e-8 when the plain fit is singular.
FusionModel fit_fusion_with_fallback(const LabeledScoreSet& data, double ridge = 0.0);

/// clamp((raw - norm_lo) / (norm_hi - norm_lo), 0, 1).
double apply_fusion(const FusionModel& model, const MetricTriple& t);

/// Pearson correlation. Throws ShapeError on length mismatch and
/// PreconditionError for fewer than 3 items or zero variance.
double plcc(std::span<const double> a, std::span<const double> b);

/// 1-based ranks; tied values share the mean of their rank span.
std::vector<double> average_ranks(std::span<const double> v);

/// Pearson correlation of average ranks.
double srcc(std::span<const double> a, std::span<const double> b);

void save_fusion(const FusionModel& model, const std::filesystem::path& path);
FusionModel load_fusion(const std::filesystem::path& path);

}  // namespace lumina
