#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

namespace lumina {

/// Planar floating-point raster. Samples are stored plane by plane, each plane
/// row-major: index = (c * height + y) * width + x.
class Image {
 public:
  Image() = default;
  Image(int width, int height, int channels, double fill = 0.0);
  Image(int width, int height, int channels, std::vector<double> data);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  int channels() const noexcept { return channels_; }
  std::size_t plane_size() const noexcept { return static_cast<std::size_t>(width_) * height_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& at(int c, int y, int x) { return data_[index(c, y, x)]; }
  double at(int c, int y, int x) const { return data_[index(c, y, x)]; }

  std::span<double> plane(int c) { return {data_.data() + c * plane_size(), plane_size()}; }
  std::span<const double> plane(int c) const { return {data_.data() + c * plane_size(), plane_size()}; }

  std::vector<double>& data() noexcept { return data_; }
  const std::vector<double>& data() const noexcept { return data_; }

  bool same_shape(const Image& other) const noexcept {
    return width_ == other.width_ && height_ == other.height_ && channels_ == other.channels_;
  }

 private:
  std::size_t index(int c, int y, int x) const noexcept {
    return (static_cast<std::size_t>(c) * height_ + y) * width_ + x;
  }

  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  std::vector<double> data_;
};

/// Hue is a fraction of a full turn in [0, 1).
struct HsvPixel {
  double hue = 0.0;
  double saturation = 0.0;
  double value = 0.0;
};

/// Hexcone conversion. Achromatic input (max == min) yields hue 0 and saturation 0.
HsvPixel rgb_to_hsv(double r, double g, double b);
std::array<double, 3> hsv_to_rgb(const HsvPixel& hsv);

/// Weights used for every grayscale metric path (BT.601 luma).
inline constexpr std::array<double, 3> kLumaWeights{0.299, 0.587, 0.114};

/// Single-channel luminance. A 1-channel image is returned unchanged.
Image luminance(const Image& img);

struct Kernel2D {
  int width = 1;
  int height = 1;
  std::vector<double> weights{1.0};

  double at(int y, int x) const { return weights[static_cast<std::size_t>(y) * width + x]; }
  static Kernel2D identity() { return {}; }
};

/// Separable normalized Gaussian. Throws PreconditionError for even size or sigma <= 0.
Kernel2D gaussian_window(int size, double sigma);

/// Valid-region correlation (no padding), applied to every channel.
Image convolve_valid(const Image& img, const Kernel2D& k);

/// Adjoint of convolve_valid: scatters a valid-region map back onto the full grid.
/// `grad` has the valid-region shape; the result has size (grad.w + k.w - 1, grad.h + k.h - 1).
Image convolve_valid_adjoint(const Image& grad, const Kernel2D& k);

/// 2x2 mean pooling with stride 2; odd trailing rows/columns are dropped.
Image downsample2(const Image& img);

Image crop(const Image& img, int x0, int y0, int width, int height);

/// Clamp every sample into [0, 1]; non-finite samples become 0.
Image clamp01(Image img);

/// Round every sample to the nearest 8-bit level (k / 255).
Image quantize8(Image img);

/// Same-size Gaussian blur with mirrored borders. sigma <= 0 returns the input.
Image gaussian_blur(const Image& img, double sigma);

double mean(const Image& img);

}  // namespace lumina
