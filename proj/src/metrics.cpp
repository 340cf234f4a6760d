#include "lumina/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lumina/error.hpp"
#include "ssim_internal.hpp"

namespace lumina {
namespace {

constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

void require_same_shape(const Image& a, const Image& b, const char* what) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(what) + ": image dimensions differ (" + std::to_string(a.width()) + "x" +
                     std::to_string(a.height()) + "x" + std::to_string(a.channels()) + " vs " +
                     std::to_string(b.width()) + "x" + std::to_string(b.height()) + "x" +
                     std::to_string(b.channels()) + ")");
  }
}

const Kernel2D& ssim_window() {
  static const Kernel2D w = gaussian_window(11, 1.5);
  return w;
}

struct ScaleStats {
  double ssim_mean;
  double cs_mean;
  double cs_weighted;
};

// SSIM statistics of one scale. With `info_weights`, the contrast-structure map
// (and the full map) are also pooled with log(1 + (var_x + var_y) / c_w).
ScaleStats scale_stats(const Image& x, const Image& y, bool info_weights, bool full_map_weighted) {
  const detail::LocalMoments m = detail::local_moments(x, y, ssim_window());
  const std::size_t n = m.mu_x.size();
  double ssim_sum = 0.0, cs_sum = 0.0, wsum = 0.0, wcs = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double mx = m.mu_x.data()[i], my = m.mu_y.data()[i];
    const double vx = m.var_x.data()[i], vy = m.var_y.data()[i], cxy = m.cov.data()[i];
    const double cs = (2.0 * cxy + kC2) / (vx + vy + kC2);
    const double l = (2.0 * mx * my + kC1) / (mx * mx + my * my + kC1);
    ssim_sum += l * cs;
    cs_sum += cs;
    if (info_weights) {
      const double w = std::log(1.0 + std::max(0.0, vx + vy) / 1e-3);
      wsum += w;
      wcs += w * (full_map_weighted ? l * cs : cs);
    }
  }
  ScaleStats s{ssim_sum / n, cs_sum / n, 0.0};
  if (info_weights) s.cs_weighted = wsum > 0.0 ? wcs / wsum : (full_map_weighted ? s.ssim_mean : s.cs_mean);
  return s;
}

MultiScaleResult multiscale(const Image& ref, const Image& test, bool info_weighted, const char* what) {
  require_same_shape(ref, test, what);
  Image x = luminance(ref), y = luminance(test);
  int scales = 0;
  for (int w = std::min(x.width(), x.height()); scales < 5 && w >= 11; w /= 2) ++scales;
  if (scales == 0) throw PreconditionError(std::string(what) + ": image smaller than the 11x11 window");
  double wsum = 0.0;
  for (int s = 0; s < scales; ++s) wsum += kMsSsimExponents[s];

  double value = 1.0;
  for (int s = 0; s < scales; ++s) {
    const bool last = s == scales - 1;
    const bool weighted = info_weighted && s == 0;
    const ScaleStats st = scale_stats(x, y, weighted, last);
    double factor;
    if (weighted) {
      factor = st.cs_weighted;
    } else {
      factor = last ? st.ssim_mean : st.cs_mean;
    }
    value *= std::pow(std::max(factor, 0.0), kMsSsimExponents[s] / wsum);
    if (!last) {
      x = downsample2(x);
      y = downsample2(y);
    }
  }
  return {value, scales};
}

}  // namespace

namespace detail {

LocalMoments local_moments(const Image& x, const Image& y, const Kernel2D& window) {
  Image xx = x, yy = y, xy = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double a = x.data()[i], b = y.data()[i];
    xx.data()[i] = a * a;
    yy.data()[i] = b * b;
    xy.data()[i] = a * b;
  }
  LocalMoments m;
  m.mu_x = convolve_valid(x, window);
  m.mu_y = convolve_valid(y, window);
  m.var_x = convolve_valid(xx, window);
  m.var_y = convolve_valid(yy, window);
  m.cov = convolve_valid(xy, window);
  for (std::size_t i = 0; i < m.mu_x.size(); ++i) {
    const double mx = m.mu_x.data()[i], my = m.mu_y.data()[i];
    m.var_x.data()[i] -= mx * mx;
    m.var_y.data()[i] -= my * my;
    m.cov.data()[i] -= mx * my;
  }
  return m;
}

}  // namespace detail

std::string_view metric_name(MetricId id) {
  switch (id) {
    case MetricId::Psnr: return "psnr";
    case MetricId::Ssim: return "ssim";
    case MetricId::MsSsim: return "msssim";
    case MetricId::Gmsd: return "gmsd";
    case MetricId::Fsim: return "fsim";
    case MetricId::IwSsimV: return "iwssim_v";
    case MetricId::DeepSim: return "deepsim";
  }
  return "unknown";
}

std::optional<MetricId> parse_metric(std::string_view name) {
  for (MetricId id : all_metrics())
    if (metric_name(id) == name) return id;
  return std::nullopt;
}

const std::vector<MetricId>& all_metrics() {
  static const std::vector<MetricId> ids{MetricId::Psnr, MetricId::Ssim,    MetricId::MsSsim, MetricId::Gmsd,
                                         MetricId::Fsim, MetricId::IwSsimV, MetricId::DeepSim};
  return ids;
}

bool higher_is_better(MetricId id) { return id != MetricId::Gmsd; }

double psnr(const Image& ref, const Image& test) {
  require_same_shape(ref, test, "psnr");
  if (ref.empty()) throw PreconditionError("psnr: empty image");
  double se = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    const double d = ref.data()[i] - test.data()[i];
    se += d * d;
  }
  const double mse = se / static_cast<double>(ref.size());
  if (mse <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

double ssim(const Image& ref, const Image& test) {
  require_same_shape(ref, test, "ssim");
  if (ref.width() < 11 || ref.height() < 11) throw PreconditionError("ssim: image smaller than the 11x11 window");
  return scale_stats(luminance(ref), luminance(test), false, false).ssim_mean;
}

MultiScaleResult msssim(const Image& ref, const Image& test) { return multiscale(ref, test, false, "msssim"); }

MultiScaleResult iwssim_v(const Image& ref, const Image& test) { return multiscale(ref, test, true, "iwssim_v"); }

double gmsd(const Image& ref, const Image& test) {
  require_same_shape(ref, test, "gmsd");
  if (ref.width() < 3 || ref.height() < 3) throw PreconditionError("gmsd: image smaller than 3x3");
  Kernel2D hx{3, 3, {1.0 / 3, 0, -1.0 / 3, 1.0 / 3, 0, -1.0 / 3, 1.0 / 3, 0, -1.0 / 3}};
  Kernel2D hy{3, 3, {1.0 / 3, 1.0 / 3, 1.0 / 3, 0, 0, 0, -1.0 / 3, -1.0 / 3, -1.0 / 3}};
  const Image x = luminance(ref), y = luminance(test);
  const Image gx_ref = convolve_valid(x, hx), gy_ref = convolve_valid(x, hy);
  const Image gx_test = convolve_valid(y, hx), gy_test = convolve_valid(y, hy);
  constexpr double c = 170.0 / (255.0 * 255.0);
  const std::size_t n = gx_ref.size();
  std::vector<double> map(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double gr = std::hypot(gx_ref.data()[i], gy_ref.data()[i]);
    const double gt = std::hypot(gx_test.data()[i], gy_test.data()[i]);
    map[i] = (2.0 * gr * gt + c) / (gr * gr + gt * gt + c);
  }
  const double mu = std::accumulate(map.begin(), map.end(), 0.0) / n;
  double var = 0.0;
  for (double v : map) var += (v - mu) * (v - mu);
  return std::sqrt(var / n);
}

double deepsim(const Image& ref, const Image& test, const Backbone& backbone) {
  require_same_shape(ref, test, "deepsim");
  if (backbone.empty()) throw PreconditionError("deepsim: backbone missing");
  if (ref.width() < 32 || ref.height() < 32) throw PreconditionError("deepsim: image smaller than 32x32");
  const auto fr = backbone.stage_outputs(ref);
  const auto ft = backbone.stage_outputs(test);
  constexpr double c1 = 1e-6, c2 = 1e-6;
  double total = 0.0;
  for (std::size_t s = 0; s < fr.size(); ++s) {
    const auto mr = nn::global_mean_pool(fr[s]), mt = nn::global_mean_pool(ft[s]);
    const auto sr = nn::global_std_pool(fr[s]), st = nn::global_std_pool(ft[s]);
    double stage = 0.0;
    for (std::size_t c = 0; c < mr.size(); ++c) {
      const double lm = (2.0 * mr[c] * mt[c] + c1) / (mr[c] * mr[c] + mt[c] * mt[c] + c1);
      const double ls = (2.0 * sr[c] * st[c] + c2) / (sr[c] * sr[c] + st[c] * st[c] + c2);
      stage += lm * ls;
    }
    total += stage / static_cast<double>(mr.size());
  }
  return total / static_cast<double>(fr.size());
}

MetricScore compute_metric(MetricId id, const Image& ref, const Image& test, const Backbone* backbone) {
  switch (id) {
    case MetricId::Psnr: return {id, psnr(ref, test)};
    case MetricId::Ssim: return {id, ssim(ref, test)};
    case MetricId::MsSsim: {
      const auto r = msssim(ref, test);
      return {id, r.value, r.scales};
    }
    case MetricId::Gmsd: return {id, gmsd(ref, test)};
    case MetricId::Fsim: return {id, fsim(ref, test)};
    case MetricId::IwSsimV: {
      const auto r = iwssim_v(ref, test);
      return {id, r.value, r.scales};
    }
    case MetricId::DeepSim:
      if (!backbone) throw PreconditionError("deepsim: backbone missing");
      return {id, deepsim(ref, test, *backbone)};
  }
  throw PreconditionError("unknown metric");
}

MetricTriple metric_triple(const Image& ref, const Image& test, const Backbone& backbone,
                           const FsimConfig& fsim_config) {
  return {fsim(ref, test, fsim_config), iwssim_v(ref, test).value, deepsim(ref, test, backbone)};
}

}  // namespace lumina
