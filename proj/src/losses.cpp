#include "lumina/losses.hpp"

#include <algorithm>
#include <cmath>

#include "lumina/error.hpp"
#include "ssim_internal.hpp"

namespace lumina {
namespace {

constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

void require_pair(const Image& ref, const Image& enh, int window, const char* what) {
  if (!ref.same_shape(enh)) throw ShapeError(std::string(what) + ": image dimensions differ");
  if (ref.channels() != 1 && ref.channels() != 3) throw ShapeError(std::string(what) + ": expected 1 or 3 channels");
  if (ref.width() < window || ref.height() < window) {
    throw PreconditionError(std::string(what) + ": image smaller than the " + std::to_string(window) + "x" +
                            std::to_string(window) + " window");
  }
}

Image single_plane(const Image& img, int c) {
  const auto p = img.plane(c);
  return Image(img.width(), img.height(), 1, std::vector<double>(p.begin(), p.end()));
}

/// Per-position derivatives of a pooled similarity map with respect to the
/// enhanced image's local moments (mean, second moment via variance, cross moment via covariance).
struct MomentGrads {
  Image d_mu;
  Image d_var;
  Image d_cov;
};

/// Pixel gradient of sum_i f(moments_i) given df/d(mu_y, var_y, cov) per window.
/// var_y = E[y^2] - mu_y^2 and cov = E[xy] - mu_x mu_y, so
/// grad = W^T(a) + y * W^T(b) + x * W^T(c) with
/// a = df/dmu_y - 2 mu_y df/dvar_y - mu_x df/dcov, b = 2 df/dvar_y, c = df/dcov.
Image moments_to_pixels(const detail::LocalMoments& m, const MomentGrads& g, const Image& x, const Image& y,
                        const Kernel2D& window) {
  Image a = g.d_mu, b = g.d_var, c = g.d_cov;
  for (std::size_t i = 0; i < a.size(); ++i) {
    a.data()[i] = g.d_mu.data()[i] - 2.0 * m.mu_y.data()[i] * g.d_var.data()[i] - m.mu_x.data()[i] * g.d_cov.data()[i];
    b.data()[i] = 2.0 * g.d_var.data()[i];
  }
  const Image ta = convolve_valid_adjoint(a, window);
  const Image tb = convolve_valid_adjoint(b, window);
  const Image tc = convolve_valid_adjoint(c, window);
  Image out(x.width(), x.height(), 1);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out.data()[i] = ta.data()[i] + y.data()[i] * tb.data()[i] + x.data()[i] * tc.data()[i];
  }
  return out;
}

struct HsvWithGrad {
  HsvPixel hsv;
  std::array<double, 3> d_hue{0.0, 0.0, 0.0};
  std::array<double, 3> d_sat{0.0, 0.0, 0.0};
};

// Hexcone derivatives. Branch selection follows rgb_to_hsv's tie order.
HsvWithGrad hsv_with_grad(double r, double g, double b) {
  HsvWithGrad out;
  out.hsv = rgb_to_hsv(r, g, b);
  const double v[3] = {r, g, b};
  const double mx = std::max({r, g, b}), mn = std::min({r, g, b});
  const double delta = mx - mn;
  if (delta <= 0.0) return out;
  const int imax = mx == r ? 0 : (mx == g ? 1 : 2);
  int imin = 0;
  for (int k = 1; k < 3; ++k)
    if (v[k] < v[imin]) imin = k;
  static constexpr double dnum[3][3] = {{0, 1, -1}, {-1, 0, 1}, {1, -1, 0}};
  const double num = imax == 0 ? g - b : (imax == 1 ? b - r : r - g);
  for (int k = 0; k < 3; ++k) {
    const double dd = (k == imax ? 1.0 : 0.0) - (k == imin ? 1.0 : 0.0);
    out.d_hue[static_cast<std::size_t>(k)] = (dnum[imax][k] * delta - num * dd) / (6.0 * delta * delta);
    out.d_sat[static_cast<std::size_t>(k)] = (dd * mx - delta * (k == imax ? 1.0 : 0.0)) / (mx * mx);
  }
  return out;
}

}  // namespace

Image PatchDecomposition::reconstruct() const {
  Image out(width, height, channels);
  const std::size_t plane = static_cast<std::size_t>(width) * height;
  for (int c = 0; c < channels; ++c)
    for (std::size_t i = 0; i < plane; ++i) {
      const std::size_t k = static_cast<std::size_t>(c) * plane + i;
      out.data()[k] = contrast * structure[k] + mean_color[static_cast<std::size_t>(c)];
    }
  return out;
}

PatchDecomposition decompose_patch(const Image& patch) {
  if (patch.empty()) throw PreconditionError("decompose_patch: empty patch");
  PatchDecomposition d;
  d.width = patch.width();
  d.height = patch.height();
  d.channels = patch.channels();
  d.structure.assign(patch.size(), 0.0);
  const std::size_t plane = patch.plane_size();
  double ss = 0.0;
  for (int c = 0; c < patch.channels(); ++c) {
    const auto p = patch.plane(c);
    double sum = 0.0;
    for (double v : p) sum += v;
    const double mu = sum / static_cast<double>(plane);
    d.mean_color.push_back(mu);
    for (std::size_t i = 0; i < plane; ++i) {
      const double r = p[i] - mu;
      d.structure[static_cast<std::size_t>(c) * plane + i] = r;
      ss += r * r;
    }
  }
  d.contrast = std::sqrt(ss);
  if (d.contrast < 1e-12) {
    d.contrast = 0.0;
    d.degenerate = true;
    std::fill(d.structure.begin(), d.structure.end(), 0.0);
  } else {
    for (double& s : d.structure) s /= d.contrast;
  }
  if (d.channels == 3) {
    d.mean_hsv = rgb_to_hsv(std::clamp(d.mean_color[0], 0.0, 1.0), std::clamp(d.mean_color[1], 0.0, 1.0),
                            std::clamp(d.mean_color[2], 0.0, 1.0));
  } else {
    d.mean_hsv = {0.0, 0.0, std::clamp(d.mean_color[0], 0.0, 1.0)};
  }
  return d;
}

FidelityResult fidelity_loss(const Image& ref, const Image& enh, const FidelityConfig& config) {
  require_pair(ref, enh, config.window, "fidelity_loss");
  if (!(config.c > 0.0)) throw ConfigError("fidelity_loss: stabilizer c must be positive");
  const Kernel2D window = gaussian_window(config.window, config.sigma);
  const Image x = luminance(ref), y = luminance(enh);
  const detail::LocalMoments m = detail::local_moments(x, y, window);
  const std::size_t n = m.mu_x.size();
  const double scale = -1.0 / static_cast<double>(n);

  MomentGrads g{Image(m.mu_x.width(), m.mu_x.height(), 1), Image(m.mu_x.width(), m.mu_x.height(), 1),
                Image(m.mu_x.width(), m.mu_x.height(), 1)};
  double s_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double a = 2.0 * m.cov.data()[i] + config.c;
    const double b = m.var_x.data()[i] + m.var_y.data()[i] + config.c;
    s_sum += a / b;
    g.d_cov.data()[i] = scale * 2.0 / b;
    g.d_var.data()[i] = scale * (-a / (b * b));
  }
  FidelityResult out;
  out.structure_term = 1.0 - s_sum / static_cast<double>(n);
  const Image gy = moments_to_pixels(m, g, x, y, window);

  out.grad = Image(enh.width(), enh.height(), enh.channels());
  if (enh.channels() == 1) {
    out.grad = gy;
  } else {
    for (int c = 0; c < 3; ++c) {
      auto dst = out.grad.plane(c);
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = kLumaWeights[static_cast<std::size_t>(c)] * gy.data()[i];
    }
  }

  if (enh.channels() == 3 && config.hue_weight != 0.0) {
    const std::size_t pixels = enh.plane_size();
    const double w = config.hue_weight / static_cast<double>(pixels);
    const auto rr = ref.plane(0), rg = ref.plane(1), rb = ref.plane(2);
    const auto er = enh.plane(0), eg = enh.plane(1), eb = enh.plane(2);
    double h_sum = 0.0;
    for (std::size_t i = 0; i < pixels; ++i) {
      const HsvPixel hr = rgb_to_hsv(rr[i], rg[i], rb[i]);
      const HsvWithGrad he = hsv_with_grad(er[i], eg[i], eb[i]);
      const double delta = he.hsv.hue - hr.hue;
      const double ad = std::abs(delta);
      const double dist = std::min(ad, 1.0 - ad);
      const double sgn = delta > 0.0 ? 1.0 : (delta < 0.0 ? -1.0 : 0.0);
      const double d_dist = ad <= 0.5 ? sgn : -sgn;
      const double smin = std::min(hr.saturation, he.hsv.saturation);
      const double gate = std::pow(smin, config.gate_exponent);
      const double d_gate = he.hsv.saturation < hr.saturation && smin > 0.0
                                ? config.gate_exponent * std::pow(smin, config.gate_exponent - 1.0)
                                : 0.0;
      h_sum += dist * gate;
      for (int c = 0; c < 3; ++c) {
        const auto cs = static_cast<std::size_t>(c);
        out.grad.plane(c)[i] += w * (gate * d_dist * he.d_hue[cs] + dist * d_gate * he.d_sat[cs]);
      }
    }
    out.hue_term = config.hue_weight * h_sum / static_cast<double>(pixels);
  }
  out.loss = out.structure_term + out.hue_term;
  return out;
}

LossResult ssim_loss(const Image& ref, const Image& enh) {
  require_pair(ref, enh, 11, "ssim_loss");
  static const Kernel2D window = gaussian_window(11, 1.5);
  const int channels = ref.channels();
  LossResult out;
  out.grad = Image(enh.width(), enh.height(), channels);
  double total = 0.0;
  for (int c = 0; c < channels; ++c) {
    const Image x = single_plane(ref, c), y = single_plane(enh, c);
    const detail::LocalMoments m = detail::local_moments(x, y, window);
    const std::size_t n = m.mu_x.size();
    const double scale = -1.0 / (static_cast<double>(n) * channels);
    MomentGrads g{Image(m.mu_x.width(), m.mu_x.height(), 1), Image(m.mu_x.width(), m.mu_x.height(), 1),
                  Image(m.mu_x.width(), m.mu_x.height(), 1)};
    double s_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double mx = m.mu_x.data()[i], my = m.mu_y.data()[i];
      const double a1 = 2.0 * mx * my + kC1, b1 = mx * mx + my * my + kC1;
      const double a2 = 2.0 * m.cov.data()[i] + kC2, b2 = m.var_x.data()[i] + m.var_y.data()[i] + kC2;
      const double l = a1 / b1, cs = a2 / b2;
      s_sum += l * cs;
      g.d_mu.data()[i] = scale * cs * (2.0 * mx * b1 - a1 * 2.0 * my) / (b1 * b1);
      g.d_var.data()[i] = scale * l * (-a2 / (b2 * b2));
      g.d_cov.data()[i] = scale * l * 2.0 / b2;
    }
    total += s_sum / static_cast<double>(n);
    const Image gp = moments_to_pixels(m, g, x, y, window);
    std::copy(gp.data().begin(), gp.data().end(), out.grad.plane(c).begin());
  }
  out.loss = 1.0 - total / channels;
  return out;
}

QualityLossResult quality_loss(const Image& enh, const QualityModel& model, const JointLossConfig& config) {
  if (!model.ready()) throw PreconditionError("quality_loss: quality model weights missing");
  auto pg = model.predict_with_gradient(enh);
  const double diff = config.q_max - pg.scores.q_o;
  QualityLossResult out;
  out.loss = std::abs(diff);
  out.scores = pg.scores;
  const double d = diff > 0.0 ? -1.0 : (diff < 0.0 ? 1.0 : 0.0);
  out.grad = std::move(pg.grad);
  for (double& v : out.grad.data()) v *= d;
  return out;
}

JointResult joint_loss(const Image& ref, const Image& enh, const QualityModel* model, const FidelityConfig& fcfg,
                       const JointLossConfig& jcfg) {
  if (!(jcfg.lambda_quality >= 0.0)) throw ConfigError("joint_loss: quality weight must be >= 0");
  FidelityResult fid = fidelity_loss(ref, enh, fcfg);
  JointResult out;
  out.fidelity = fid.loss;
  out.loss = fid.loss;
  out.grad = std::move(fid.grad);
  if (jcfg.lambda_quality == 0.0) return out;
  if (!model) throw PreconditionError("joint_loss: quality model missing");
  const QualityLossResult q = quality_loss(enh, *model, jcfg);
  out.quality = q.loss;
  out.loss += jcfg.lambda_quality * q.loss;
  for (std::size_t i = 0; i < out.grad.size(); ++i) out.grad.data()[i] += jcfg.lambda_quality * q.grad.data()[i];
  return out;
}

}  // namespace lumina
