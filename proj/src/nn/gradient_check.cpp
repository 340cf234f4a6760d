#include "lumina/nn/gradient_check.hpp"

#include <algorithm>
#include <cmath>

#include "lumina/error.hpp"

namespace lumina::nn {
namespace {

double checked(double v) {
  if (!std::isfinite(v)) throw PreconditionError("gradient check: loss is not finite");
  return v;
}

}  // namespace

GradCheckReport gradient_check(const std::vector<GradCheckTarget>& targets, const std::function<double()>& loss,
                               const GradCheckOptions& options) {
  GradCheckReport report;
  checked(loss());
  for (const auto& t : targets) {
    if (t.values.size() != t.analytic.size()) throw ShapeError("gradient check: '" + t.name + "' length mismatch");
    const std::size_t n = t.values.size();
    std::size_t stride = 1;
    if (options.max_coordinates > 0 && n > options.max_coordinates) {
      stride = (n + options.max_coordinates - 1) / options.max_coordinates;
    }
    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    for (std::size_t i = 0; i < n; i += stride) {
      const double saved = t.values[i];
      t.values[i] = saved + options.step;
      const double up = checked(loss());
      t.values[i] = saved - options.step;
      const double down = checked(loss());
      t.values[i] = saved;
      const double numeric = (up - down) / (2.0 * options.step);
      const double analytic = t.analytic[i];
      diff2 += (numeric - analytic) * (numeric - analytic);
      a2 += analytic * analytic;
      n2 += numeric * numeric;
    }
    const double denom = std::sqrt(std::max(a2, n2));
    const double err = denom > 0.0 ? std::sqrt(diff2) / denom : 0.0;
    report.per_target.emplace_back(t.name, err);
    report.max_relative_error = std::max(report.max_relative_error, err);
  }
  report.passed = report.max_relative_error < options.tolerance;
  return report;
}

}  // namespace lumina::nn
