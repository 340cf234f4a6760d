#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <mutex>
#include <numbers>
#include <vector>

#include "lumina/error.hpp"
#include "lumina/metrics.hpp"

namespace lumina {
namespace {

using cplx = std::complex<double>;

// fftw planning is not thread-safe; execution with new arrays is.
std::mutex& plan_mutex() {
  static std::mutex m;
  return m;
}

class Fft2d {
 public:
  Fft2d(int rows, int cols) : rows_(rows), cols_(cols) {
    const std::size_t n = static_cast<std::size_t>(rows) * cols;
    auto* a = reinterpret_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * n));
    auto* b = reinterpret_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * n));
    std::lock_guard<std::mutex> lock(plan_mutex());
    forward_ = fftw_plan_dft_2d(rows, cols, a, b, FFTW_FORWARD, FFTW_ESTIMATE);
    inverse_ = fftw_plan_dft_2d(rows, cols, a, b, FFTW_BACKWARD, FFTW_ESTIMATE);
    fftw_free(a);
    fftw_free(b);
  }
  ~Fft2d() {
    std::lock_guard<std::mutex> lock(plan_mutex());
    fftw_destroy_plan(forward_);
    fftw_destroy_plan(inverse_);
  }
  Fft2d(const Fft2d&) = delete;
  Fft2d& operator=(const Fft2d&) = delete;

  std::vector<cplx> forward(std::vector<cplx> data) const { return run(forward_, std::move(data), 1.0); }
  std::vector<cplx> inverse(std::vector<cplx> data) const {
    return run(inverse_, std::move(data), 1.0 / (static_cast<double>(rows_) * cols_));
  }

 private:
  std::vector<cplx> run(fftw_plan plan, std::vector<cplx> data, double scale) const {
    const std::size_t n = data.size();
    auto* in = reinterpret_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * n));
    auto* out = reinterpret_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * n));
    for (std::size_t i = 0; i < n; ++i) {
      in[i][0] = data[i].real();
      in[i][1] = data[i].imag();
    }
    fftw_execute_dft(plan, in, out);
    for (std::size_t i = 0; i < n; ++i) data[i] = cplx(out[i][0], out[i][1]) * scale;
    fftw_free(in);
    fftw_free(out);
    return data;
  }

  int rows_, cols_;
  fftw_plan forward_;
  fftw_plan inverse_;
};

// Normalized frequency coordinate of FFT bin k along an axis of length n,
// matching an ifftshift of the range [-0.5, 0.5).
double frequency(int k, int n) {
  const int shifted = k < (n + 1) / 2 ? k : k - n;
  return n % 2 ? static_cast<double>(shifted) / (n - 1) : static_cast<double>(shifted) / n;
}

Image downsample_mean(const Image& img, int factor) {
  if (factor <= 1) return img;
  const int ow = (img.width() + factor - 1) / factor;
  const int oh = (img.height() + factor - 1) / factor;
  Image out(ow, oh, 1);
  const double norm = 1.0 / (factor * factor);
  // Box filter with zero padding, sampled every `factor` pixels.
  const int off = factor / 2;
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int dy = 0; dy < factor; ++dy)
        for (int dx = 0; dx < factor; ++dx) {
          const int sy = y * factor + dy - off;
          const int sx = x * factor + dx - off;
          if (sy >= 0 && sy < img.height() && sx >= 0 && sx < img.width()) acc += img.at(0, sy, sx);
        }
      out.at(0, y, x) = acc * norm;
    }
  return out;
}

Image scharr_magnitude(const Image& img) {
  static constexpr double k[3][3] = {{3, 0, -3}, {10, 0, -10}, {3, 0, -3}};
  Image out(img.width(), img.height(), 1);
  auto sample = [&](int y, int x) {
    return (y >= 0 && y < img.height() && x >= 0 && x < img.width()) ? img.at(0, y, x) : 0.0;
  };
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) {
      double gx = 0.0, gy = 0.0;
      for (int i = -1; i <= 1; ++i)
        for (int j = -1; j <= 1; ++j) {
          const double v = sample(y + i, x + j);
          gx += k[i + 1][j + 1] * v;
          gy += k[j + 1][i + 1] * v;
        }
      out.at(0, y, x) = std::hypot(gx, gy) / 16.0;
    }
  return out;
}

}  // namespace

Image phase_congruency(const Image& gray, const FsimConfig& cfg) {
  if (gray.channels() != 1) throw ShapeError("phase congruency expects a single-channel image");
  const int rows = gray.height(), cols = gray.width();
  const std::size_t n = static_cast<std::size_t>(rows) * cols;
  const Fft2d fft(rows, cols);

  std::vector<cplx> spectrum(n);
  for (std::size_t i = 0; i < n; ++i) spectrum[i] = gray.data()[i];
  spectrum = fft.forward(std::move(spectrum));

  std::vector<double> radius(n), sin_theta(n), cos_theta(n);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      const double fx = frequency(c, cols), fy = frequency(r, rows);
      const std::size_t i = static_cast<std::size_t>(r) * cols + c;
      radius[i] = std::hypot(fx, fy);
      const double theta = std::atan2(-fy, fx);
      sin_theta[i] = std::sin(theta);
      cos_theta[i] = std::cos(theta);
    }
  radius[0] = 1.0;

  // Radial log-Gabor components with a Butterworth low-pass (cutoff 0.45, order 15).
  std::vector<std::vector<double>> log_gabor(static_cast<std::size_t>(cfg.scales), std::vector<double>(n));
  const double log_sigma = std::log(cfg.sigma_on_f);
  for (int s = 0; s < cfg.scales; ++s) {
    const double wavelength = cfg.min_wavelength * std::pow(cfg.mult, s);
    const double fo = 1.0 / wavelength;
    auto& lg = log_gabor[static_cast<std::size_t>(s)];
    for (std::size_t i = 0; i < n; ++i) {
      const double lp = 1.0 / (1.0 + std::pow(radius[i] / 0.45, 30.0));
      const double l = std::log(radius[i] / fo);
      lg[i] = std::exp(-(l * l) / (2.0 * log_sigma * log_sigma)) * lp;
    }
    lg[0] = 0.0;
  }

  const double theta_sigma = std::numbers::pi / cfg.orientations / cfg.d_theta_on_sigma;
  std::vector<double> energy_all(n, 0.0), an_all(n, 0.0);
  for (int o = 0; o < cfg.orientations; ++o) {
    const double angle = o * std::numbers::pi / cfg.orientations;
    const double ca = std::cos(angle), sa = std::sin(angle);
    std::vector<double> spread(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double ds = sin_theta[i] * ca - cos_theta[i] * sa;
      const double dc = cos_theta[i] * ca + sin_theta[i] * sa;
      const double dtheta = std::abs(std::atan2(ds, dc));
      spread[i] = std::exp(-(dtheta * dtheta) / (2.0 * theta_sigma * theta_sigma));
    }

    std::vector<double> sum_e(n, 0.0), sum_o(n, 0.0), sum_an(n, 0.0);
    std::vector<std::vector<cplx>> responses;
    std::vector<std::vector<double>> spatial_filters;
    double em_n = 0.0;
    for (int s = 0; s < cfg.scales; ++s) {
      std::vector<cplx> filtered(n);
      std::vector<cplx> filter(n);
      const auto& lg = log_gabor[static_cast<std::size_t>(s)];
      for (std::size_t i = 0; i < n; ++i) {
        const double f = lg[i] * spread[i];
        filter[i] = f;
        filtered[i] = spectrum[i] * f;
        if (s == 0) em_n += f * f;
      }
      std::vector<cplx> eo = fft.inverse(std::move(filtered));
      for (std::size_t i = 0; i < n; ++i) {
        sum_an[i] += std::abs(eo[i]);
        sum_e[i] += eo[i].real();
        sum_o[i] += eo[i].imag();
      }
      std::vector<cplx> spatial = fft.inverse(std::move(filter));
      std::vector<double> re(n);
      const double sq = std::sqrt(static_cast<double>(n));
      for (std::size_t i = 0; i < n; ++i) re[i] = spatial[i].real() * sq;
      spatial_filters.push_back(std::move(re));
      responses.push_back(std::move(eo));
    }

    std::vector<double> energy(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double xe = std::hypot(sum_e[i], sum_o[i]) + cfg.epsilon;
      const double mean_e = sum_e[i] / xe, mean_o = sum_o[i] / xe;
      for (const auto& eo : responses) {
        const double e = eo[i].real(), od = eo[i].imag();
        energy[i] += e * mean_e + od * mean_o - std::abs(e * mean_o - od * mean_e);
      }
    }

    // Noise compensation from the smallest-scale response (Rayleigh model).
    std::vector<double> mag2(n);
    for (std::size_t i = 0; i < n; ++i) mag2[i] = std::norm(responses[0][i]);
    std::nth_element(mag2.begin(), mag2.begin() + static_cast<std::ptrdiff_t>(n / 2), mag2.end());
    const double median_e2n = mag2[n / 2];
    const double mean_e2n = -median_e2n / std::log(0.5);
    const double noise_power = em_n > 0.0 ? mean_e2n / em_n : 0.0;

    double sum_an2 = 0.0, sum_aiaj = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (int s = 0; s < cfg.scales; ++s) {
        const double a = spatial_filters[static_cast<std::size_t>(s)][i];
        sum_an2 += a * a;
        for (int t = s + 1; t < cfg.scales; ++t) sum_aiaj += a * spatial_filters[static_cast<std::size_t>(t)][i];
      }
    }
    const double est_noise_energy2 = 2.0 * noise_power * sum_an2 + 4.0 * noise_power * sum_aiaj;
    const double tau = std::sqrt(std::max(0.0, est_noise_energy2) / 2.0);
    const double est_noise_energy = tau * std::sqrt(std::numbers::pi / 2.0);
    const double est_noise_sigma = std::sqrt((2.0 - std::numbers::pi / 2.0) * tau * tau);
    const double threshold = (est_noise_energy + cfg.noise_k * est_noise_sigma) / 1.7;

    for (std::size_t i = 0; i < n; ++i) {
      energy_all[i] += std::max(energy[i] - threshold, 0.0);
      an_all[i] += sum_an[i];
    }
  }

  Image pc(cols, rows, 1);
  for (std::size_t i = 0; i < n; ++i) pc.data()[i] = energy_all[i] / (an_all[i] + cfg.epsilon);
  return pc;
}

double fsim(const Image& ref, const Image& test, const FsimConfig& cfg) {
  if (!ref.same_shape(test)) throw ShapeError("fsim: image dimensions differ");
  if (ref.width() < cfg.min_side || ref.height() < cfg.min_side) {
    throw PreconditionError("fsim: image smaller than " + std::to_string(cfg.min_side) + "x" +
                            std::to_string(cfg.min_side));
  }
  const int factor = std::max(1, static_cast<int>(std::lround(std::min(ref.width(), ref.height()) / 256.0)));
  const Image y1 = downsample_mean(luminance(ref), factor);
  const Image y2 = downsample_mean(luminance(test), factor);

  // Phase congruency runs on the 8-bit intensity scale its constants were tuned for.
  Image s1 = y1, s2 = y2;
  for (double& v : s1.data()) v *= 255.0;
  for (double& v : s2.data()) v *= 255.0;
  const Image pc1 = phase_congruency(s1, cfg);
  const Image pc2 = phase_congruency(s2, cfg);
  const Image g1 = scharr_magnitude(y1);
  const Image g2 = scharr_magnitude(y2);

  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < pc1.size(); ++i) {
    const double p1 = pc1.data()[i], p2 = pc2.data()[i];
    const double a = g1.data()[i], b = g2.data()[i];
    const double s_pc = (2.0 * p1 * p2 + cfg.t1) / (p1 * p1 + p2 * p2 + cfg.t1);
    const double s_g = (2.0 * a * b + cfg.t2) / (a * a + b * b + cfg.t2);
    const double w = std::max(p1, p2);
    num += s_pc * s_g * w;
    den += w;
  }
  if (den <= 0.0) {
    // No phase structure anywhere: pool the similarity map uniformly.
    num = 0.0;
    for (std::size_t i = 0; i < pc1.size(); ++i) {
      const double a = g1.data()[i], b = g2.data()[i];
      num += (2.0 * a * b + cfg.t2) / (a * a + b * b + cfg.t2);
    }
    return num / static_cast<double>(pc1.size());
  }
  return num / den;
}

}  // namespace lumina
