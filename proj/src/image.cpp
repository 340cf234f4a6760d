#include "lumina/image.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "lumina/error.hpp"

namespace lumina {

Image::Image(int width, int height, int channels, double fill)
    : width_(width), height_(height), channels_(channels) {
  if (width < 0 || height < 0 || channels < 0) throw ShapeError("negative image dimension");
  data_.assign(static_cast<std::size_t>(width) * height * channels, fill);
}

Image::Image(int width, int height, int channels, std::vector<double> data)
    : width_(width), height_(height), channels_(channels), data_(std::move(data)) {
  if (data_.size() != static_cast<std::size_t>(width) * height * channels) {
    throw ShapeError("image data length does not match width x height x channels");
  }
}

HsvPixel rgb_to_hsv(double r, double g, double b) {
  const double mx = std::max({r, g, b});
  const double mn = std::min({r, g, b});
  const double delta = mx - mn;
  HsvPixel out;
  out.value = mx;
  if (delta <= 0.0) return out;
  out.saturation = mx > 0.0 ? delta / mx : 0.0;
  double h;
  if (mx == r) {
    h = (g - b) / delta;
  } else if (mx == g) {
    h = (b - r) / delta + 2.0;
  } else {
    h = (r - g) / delta + 4.0;
  }
  h /= 6.0;
  h -= std::floor(h);
  if (h >= 1.0) h = 0.0;
  out.hue = h;
  return out;
}

std::array<double, 3> hsv_to_rgb(const HsvPixel& hsv) {
  const double v = hsv.value;
  const double s = hsv.saturation;
  double h = hsv.hue - std::floor(hsv.hue);
  const double h6 = h * 6.0;
  const int sector = static_cast<int>(std::floor(h6)) % 6;
  const double f = h6 - std::floor(h6);
  const double p = v * (1.0 - s);
  const double q = v * (1.0 - s * f);
  const double t = v * (1.0 - s * (1.0 - f));
  switch (sector) {
    case 0: return {v, t, p};
    case 1: return {q, v, p};
    case 2: return {p, v, t};
    case 3: return {p, q, v};
    case 4: return {t, p, v};
    default: return {v, p, q};
  }
}

Image luminance(const Image& img) {
  if (img.channels() == 1) return img;
  if (img.channels() != 3) throw ShapeError("luminance expects 1 or 3 channels");
  Image out(img.width(), img.height(), 1);
  auto r = img.plane(0), g = img.plane(1), b = img.plane(2);
  auto y = out.plane(0);
  for (std::size_t i = 0; i < y.size(); ++i) {
    y[i] = kLumaWeights[0] * r[i] + kLumaWeights[1] * g[i] + kLumaWeights[2] * b[i];
  }
  return out;
}

Kernel2D gaussian_window(int size, double sigma) {
  if (size <= 0 || size % 2 == 0) throw PreconditionError("gaussian window size must be odd and positive");
  if (!(sigma > 0.0)) throw PreconditionError("gaussian window sigma must be positive");
  const int half = size / 2;
  std::vector<double> g1(size);
  for (int i = 0; i < size; ++i) {
    const double d = i - half;
    g1[i] = std::exp(-d * d / (2.0 * sigma * sigma));
  }
  const double s = std::accumulate(g1.begin(), g1.end(), 0.0);
  for (double& v : g1) v /= s;
  Kernel2D k;
  k.width = size;
  k.height = size;
  k.weights.resize(static_cast<std::size_t>(size) * size);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) k.weights[static_cast<std::size_t>(y) * size + x] = g1[y] * g1[x];
  return k;
}

Image convolve_valid(const Image& img, const Kernel2D& k) {
  if (k.width > img.width() || k.height > img.height()) {
    throw PreconditionError("kernel " + std::to_string(k.width) + "x" + std::to_string(k.height) +
                            " larger than image " + std::to_string(img.width()) + "x" +
                            std::to_string(img.height()));
  }
  const int ow = img.width() - k.width + 1;
  const int oh = img.height() - k.height + 1;
  Image out(ow, oh, img.channels());
  for (int c = 0; c < img.channels(); ++c) {
    auto src = img.plane(c);
    auto dst = out.plane(c);
    for (int ky = 0; ky < k.height; ++ky) {
      for (int kx = 0; kx < k.width; ++kx) {
        const double w = k.at(ky, kx);
        if (w == 0.0) continue;
        for (int y = 0; y < oh; ++y) {
          const double* s = src.data() + static_cast<std::size_t>(y + ky) * img.width() + kx;
          double* d = dst.data() + static_cast<std::size_t>(y) * ow;
          for (int x = 0; x < ow; ++x) d[x] += w * s[x];
        }
      }
    }
  }
  return out;
}

Image convolve_valid_adjoint(const Image& grad, const Kernel2D& k) {
  const int fw = grad.width() + k.width - 1;
  const int fh = grad.height() + k.height - 1;
  Image out(fw, fh, grad.channels());
  for (int c = 0; c < grad.channels(); ++c) {
    auto src = grad.plane(c);
    auto dst = out.plane(c);
    for (int ky = 0; ky < k.height; ++ky) {
      for (int kx = 0; kx < k.width; ++kx) {
        const double w = k.at(ky, kx);
        if (w == 0.0) continue;
        for (int y = 0; y < grad.height(); ++y) {
          const double* s = src.data() + static_cast<std::size_t>(y) * grad.width();
          double* d = dst.data() + static_cast<std::size_t>(y + ky) * fw + kx;
          for (int x = 0; x < grad.width(); ++x) d[x] += w * s[x];
        }
      }
    }
  }
  return out;
}

Image downsample2(const Image& img) {
  const int ow = img.width() / 2;
  const int oh = img.height() / 2;
  Image out(ow, oh, img.channels());
  for (int c = 0; c < img.channels(); ++c) {
    for (int y = 0; y < oh; ++y) {
      for (int x = 0; x < ow; ++x) {
        out.at(c, y, x) = 0.25 * (img.at(c, 2 * y, 2 * x) + img.at(c, 2 * y, 2 * x + 1) +
                                  img.at(c, 2 * y + 1, 2 * x) + img.at(c, 2 * y + 1, 2 * x + 1));
      }
    }
  }
  return out;
}

Image crop(const Image& img, int x0, int y0, int width, int height) {
  if (x0 < 0 || y0 < 0 || width <= 0 || height <= 0 || x0 + width > img.width() ||
      y0 + height > img.height()) {
    throw ShapeError("crop window outside image");
  }
  Image out(width, height, img.channels());
  for (int c = 0; c < img.channels(); ++c)
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) out.at(c, y, x) = img.at(c, y0 + y, x0 + x);
  return out;
}

Image clamp01(Image img) {
  for (double& v : img.data()) v = std::isfinite(v) ? std::clamp(v, 0.0, 1.0) : 0.0;
  return img;
}

Image quantize8(Image img) {
  for (double& v : img.data()) v = std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0;
  return img;
}

Image gaussian_blur(const Image& img, double sigma) {
  if (!(sigma > 0.0)) return img;
  const int half = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> g(2 * half + 1);
  double s = 0.0;
  for (int i = -half; i <= half; ++i) s += g[i + half] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (double& v : g) v /= s;

  auto mirror = [](int i, int n) {
    if (n == 1) return 0;
    while (i < 0 || i >= n) i = i < 0 ? -i - 1 : 2 * n - i - 1;
    return i;
  };
  Image tmp(img.width(), img.height(), img.channels());
  Image out(img.width(), img.height(), img.channels());
  for (int c = 0; c < img.channels(); ++c) {
    for (int y = 0; y < img.height(); ++y)
      for (int x = 0; x < img.width(); ++x) {
        double acc = 0.0;
        for (int i = -half; i <= half; ++i) acc += g[i + half] * img.at(c, y, mirror(x + i, img.width()));
        tmp.at(c, y, x) = acc;
      }
    for (int y = 0; y < img.height(); ++y)
      for (int x = 0; x < img.width(); ++x) {
        double acc = 0.0;
        for (int i = -half; i <= half; ++i) acc += g[i + half] * tmp.at(c, mirror(y + i, img.height()), x);
        out.at(c, y, x) = acc;
      }
  }
  return out;
}

double mean(const Image& img) {
  if (img.empty()) return 0.0;
  return std::accumulate(img.data().begin(), img.data().end(), 0.0) / static_cast<double>(img.size());
}

}  // namespace lumina
