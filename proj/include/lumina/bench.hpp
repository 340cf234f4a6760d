#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lumina/backbone.hpp"
#include "lumina/fusion.hpp"
#include "lumina/manifest.hpp"
#include "lumina/metrics.hpp"

namespace lumina {

/// Registry scores of one labelled pair.
struct BenchScores {
  std::map<MetricId, double> values;
  double mos = 0.0;
  std::string content_id;
};

struct BenchRow {
  std::string name;
  std::optional<double> plcc_fit, srcc_fit, plcc_test, srcc_test;
};

struct BenchReport {
  std::string dataset_id;
  std::size_t rows = 0;
  std::size_t fit_rows = 0;
  std::size_t test_rows = 0;
  std::vector<BenchRow> metrics;
  BenchRow fused;
  FusionModel model;
  /// Fused fit-split PLCC >= |PLCC| of each fusion operand on the fit split.
  bool optimality_holds = false;
};

struct BenchOptions {
  double fit_fraction = 0.5;
  std::uint64_t seed = 1;
  double ridge = 0.0;
  std::string dataset_id = "unnamed";
};

/// Every registry metric for every (reference, image) entry of a labelled
/// manifest, in parallel over entries.
std::vector<BenchScores> score_manifest(const Manifest& manifest, const Backbone& backbone);

/// Splits by content id (seeded), fits the fusion on the fit split and reports
/// correlations of every metric and of the raw fused score on both splits.
/// Needs at least 20 rows and non-constant labels.
BenchReport run_bench(const std::vector<BenchScores>& scores, const BenchOptions& options);

/// TSV table with a reference footer.
std::string format_bench(const BenchReport& report);

}  // namespace lumina
