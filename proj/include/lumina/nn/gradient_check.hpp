#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace lumina::nn {

/// A block of independent variables (parameters or inputs) together with the
/// analytic gradient claimed for them.
struct GradCheckTarget {
  std::string name;
  std::span<double> values;
  std::span<const double> analytic;
};

struct GradCheckReport {
  double max_relative_error = 0.0;
  bool passed = false;
  std::vector<std::pair<std::string, double>> per_target;
};

struct GradCheckOptions {
  double tolerance = 1e-5;
  double step = 1e-5;
  /// Check at most this many evenly strided coordinates per target (0 = all).
  std::size_t max_coordinates = 0;
};

/// Central finite differences. `loss` must re-evaluate the objective from the
/// current contents of every target's `values`, which are perturbed in place
/// and restored afterwards. The error of a target is
/// |analytic - numeric|_2 / max(|analytic|_2, |numeric|_2), computed over the
/// checked coordinates. Throws PreconditionError on a non-finite loss.
GradCheckReport gradient_check(const std::vector<GradCheckTarget>& targets, const std::function<double()>& loss,
                               const GradCheckOptions& options = {});

}  // namespace lumina::nn
