#include "lumina/nn/layers.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "lumina/error.hpp"

namespace lumina::nn {
namespace {

void require_feature_map(const Tensor& x, const char* what) {
  if (x.rank() != 3) throw ShapeError(std::string(what) + ": expected (C, H, W), got " + x.shape_string());
}

// Column matrix (C*9, H*W) of zero-padded 3x3 neighbourhoods.
Matrix im2col(const Tensor& x) {
  const int c = x.channels(), h = x.height(), w = x.width();
  Matrix cols(static_cast<Eigen::Index>(c) * 9, static_cast<Eigen::Index>(h) * w);
  for (int ci = 0; ci < c; ++ci) {
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        double* row = cols.row((ci * 3 + ky) * 3 + kx).data();
        for (int y = 0; y < h; ++y) {
          const int sy = y + ky - 1;
          double* dst = row + static_cast<std::size_t>(y) * w;
          if (sy < 0 || sy >= h) {
            for (int xx = 0; xx < w; ++xx) dst[xx] = 0.0;
            continue;
          }
          const double* src = x.data() + (static_cast<std::size_t>(ci) * h + sy) * w;
          for (int xx = 0; xx < w; ++xx) {
            const int sx = xx + kx - 1;
            dst[xx] = (sx >= 0 && sx < w) ? src[sx] : 0.0;
          }
        }
      }
    }
  }
  return cols;
}

Tensor col2im(const Matrix& cols, int c, int h, int w) {
  Tensor x({c, h, w});
  for (int ci = 0; ci < c; ++ci) {
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        const double* row = cols.row((ci * 3 + ky) * 3 + kx).data();
        for (int y = 0; y < h; ++y) {
          const int sy = y + ky - 1;
          if (sy < 0 || sy >= h) continue;
          double* dst = x.data() + (static_cast<std::size_t>(ci) * h + sy) * w;
          const double* src = row + static_cast<std::size_t>(y) * w;
          for (int xx = 0; xx < w; ++xx) {
            const int sx = xx + kx - 1;
            if (sx >= 0 && sx < w) dst[sx] += src[xx];
          }
        }
      }
    }
  }
  return x;
}

ConstMatrixMap conv_weight_matrix(const Conv3x3& conv) {
  return {conv.weight.data(), conv.out_channels(), static_cast<Eigen::Index>(conv.in_channels()) * 9};
}

void check_conv_input(const Conv3x3& conv, const Tensor& x) {
  require_feature_map(x, "conv3x3");
  if (x.channels() != conv.in_channels()) {
    throw ShapeError("conv3x3: expected " + std::to_string(conv.in_channels()) + " input channels, got " +
                     std::to_string(x.channels()));
  }
}

void check_conv_grad(const Conv3x3& conv, const Tensor& x, const Tensor& grad_out) {
  if (grad_out.rank() != 3 || grad_out.channels() != conv.out_channels() || grad_out.height() != x.height() ||
      grad_out.width() != x.width()) {
    throw ShapeError("conv3x3 backward: grad_out shape " + grad_out.shape_string() + " does not match output");
  }
}

void accumulate_conv_params(const Conv3x3& conv, const Matrix& cols, const ConstMatrixMap& gy, Conv3x3& grads) {
  MatrixMap gw(grads.weight.data(), conv.out_channels(), static_cast<Eigen::Index>(conv.in_channels()) * 9);
  gw.noalias() += gy * cols.transpose();
  for (int o = 0; o < conv.out_channels(); ++o) grads.bias[o] += gy.row(o).sum();
}

}  // namespace

Conv3x3::Conv3x3(int in_channels, int out_channels)
    : weight({out_channels, in_channels, 3, 3}), bias({out_channels}) {}

Tensor Conv3x3::forward(const Tensor& x) const {
  check_conv_input(*this, x);
  const Matrix cols = im2col(x);
  Tensor y({out_channels(), x.height(), x.width()});
  MatrixMap ym(y.data(), out_channels(), static_cast<Eigen::Index>(x.height()) * x.width());
  ym.noalias() = conv_weight_matrix(*this) * cols;
  for (int o = 0; o < out_channels(); ++o) ym.row(o).array() += bias[o];
  return y;
}

Tensor Conv3x3::backward(const Tensor& x, const Tensor& grad_out, Conv3x3* grads) const {
  check_conv_input(*this, x);
  check_conv_grad(*this, x, grad_out);
  const Eigen::Index hw = static_cast<Eigen::Index>(x.height()) * x.width();
  ConstMatrixMap gy(grad_out.data(), out_channels(), hw);
  if (grads) {
    const Matrix cols = im2col(x);
    accumulate_conv_params(*this, cols, gy, *grads);
  }
  const Matrix gcols = conv_weight_matrix(*this).transpose() * gy;
  return col2im(gcols, x.channels(), x.height(), x.width());
}

void Conv3x3::backward_params(const Tensor& x, const Tensor& grad_out, Conv3x3& grads) const {
  check_conv_input(*this, x);
  check_conv_grad(*this, x, grad_out);
  ConstMatrixMap gy(grad_out.data(), out_channels(), static_cast<Eigen::Index>(x.height()) * x.width());
  accumulate_conv_params(*this, im2col(x), gy, grads);
}

FullyConnected::FullyConnected(int in_features, int out_features)
    : weight({out_features, in_features}), bias({out_features}) {}

Matrix FullyConnected::forward(const Matrix& x) const {
  if (x.cols() != in_features()) {
    throw ShapeError("fully-connected: expected " + std::to_string(in_features()) + " inputs, got " +
                     std::to_string(x.cols()));
  }
  ConstMatrixMap w(weight.data(), out_features(), in_features());
  Matrix y = x * w.transpose();
  y.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bias.data(), out_features());
  return y;
}

Matrix FullyConnected::backward(const Matrix& x, const Matrix& grad_out, FullyConnected* grads) const {
  if (x.cols() != in_features() || grad_out.cols() != out_features() || grad_out.rows() != x.rows()) {
    throw ShapeError("fully-connected backward: shape mismatch");
  }
  ConstMatrixMap w(weight.data(), out_features(), in_features());
  if (grads) {
    MatrixMap gw(grads->weight.data(), out_features(), in_features());
    gw.noalias() += grad_out.transpose() * x;
    Eigen::Map<Eigen::RowVectorXd>(grads->bias.data(), out_features()) += grad_out.colwise().sum();
  }
  return grad_out * w;
}

Tensor relu(const Tensor& x) {
  Tensor y = x;
  for (double& v : y.values()) v = v > 0.0 ? v : 0.0;
  return y;
}

Matrix relu(const Matrix& x) { return x.cwiseMax(0.0); }

Tensor relu_backward(const Tensor& x, const Tensor& grad_out) {
  require_same_shape(x, grad_out, "relu backward");
  Tensor g = grad_out;
  for (std::size_t i = 0; i < g.size(); ++i)
    if (!(x[i] > 0.0)) g[i] = 0.0;
  return g;
}

Matrix relu_backward(const Matrix& x, const Matrix& grad_out) {
  if (x.rows() != grad_out.rows() || x.cols() != grad_out.cols()) throw ShapeError("relu backward: shape mismatch");
  return (x.array() > 0.0).select(grad_out, 0.0);
}

Tensor sigmoid(const Tensor& x) {
  Tensor y = x;
  for (double& v : y.values()) v = 1.0 / (1.0 + std::exp(-v));
  return y;
}

Tensor sigmoid_backward(const Tensor& x, const Tensor& grad_out) {
  require_same_shape(x, grad_out, "sigmoid backward");
  Tensor g = grad_out;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double s = 1.0 / (1.0 + std::exp(-x[i]));
    g[i] *= s * (1.0 - s);
  }
  return g;
}

Tensor maxpool2(const Tensor& x) {
  require_feature_map(x, "maxpool2");
  const int oh = x.height() / 2, ow = x.width() / 2;
  Tensor y({x.channels(), oh, ow});
  for (int c = 0; c < x.channels(); ++c)
    for (int yy = 0; yy < oh; ++yy)
      for (int xx = 0; xx < ow; ++xx) {
        double m = x.at(c, 2 * yy, 2 * xx);
        m = std::max(m, x.at(c, 2 * yy, 2 * xx + 1));
        m = std::max(m, x.at(c, 2 * yy + 1, 2 * xx));
        m = std::max(m, x.at(c, 2 * yy + 1, 2 * xx + 1));
        y.at(c, yy, xx) = m;
      }
  return y;
}

Tensor maxpool2_backward(const Tensor& x, const Tensor& grad_out) {
  require_feature_map(x, "maxpool2 backward");
  const int oh = x.height() / 2, ow = x.width() / 2;
  if (grad_out.rank() != 3 || grad_out.channels() != x.channels() || grad_out.height() != oh ||
      grad_out.width() != ow) {
    throw ShapeError("maxpool2 backward: grad_out shape mismatch");
  }
  Tensor g = x.zeros_like();
  for (int c = 0; c < x.channels(); ++c)
    for (int yy = 0; yy < oh; ++yy)
      for (int xx = 0; xx < ow; ++xx) {
        int by = 2 * yy, bx = 2 * xx;
        double m = x.at(c, by, bx);
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx) {
            const double v = x.at(c, 2 * yy + dy, 2 * xx + dx);
            if (v > m) {
              m = v;
              by = 2 * yy + dy;
              bx = 2 * xx + dx;
            }
          }
        g.at(c, by, bx) += grad_out.at(c, yy, xx);
      }
  return g;
}

std::vector<double> global_mean_pool(const Tensor& x) {
  require_feature_map(x, "global mean pool");
  const std::size_t hw = static_cast<std::size_t>(x.height()) * x.width();
  std::vector<double> out(static_cast<std::size_t>(x.channels()));
  for (int c = 0; c < x.channels(); ++c) {
    const double* p = x.data() + c * hw;
    double s = 0.0;
    for (std::size_t i = 0; i < hw; ++i) s += p[i];
    out[static_cast<std::size_t>(c)] = s / static_cast<double>(hw);
  }
  return out;
}

Tensor global_mean_pool_backward(const Tensor& x, std::span<const double> grad_out) {
  require_feature_map(x, "global mean pool backward");
  if (grad_out.size() != static_cast<std::size_t>(x.channels())) throw ShapeError("global mean pool backward: length");
  const std::size_t hw = static_cast<std::size_t>(x.height()) * x.width();
  Tensor g = x.zeros_like();
  for (int c = 0; c < x.channels(); ++c) {
    const double v = grad_out[static_cast<std::size_t>(c)] / static_cast<double>(hw);
    double* p = g.data() + c * hw;
    for (std::size_t i = 0; i < hw; ++i) p[i] = v;
  }
  return g;
}

std::vector<double> global_std_pool(const Tensor& x) {
  require_feature_map(x, "global std pool");
  const std::size_t hw = static_cast<std::size_t>(x.height()) * x.width();
  const std::vector<double> mu = global_mean_pool(x);
  std::vector<double> out(mu.size());
  for (int c = 0; c < x.channels(); ++c) {
    const double* p = x.data() + c * hw;
    // A constant channel has exactly zero spread, independent of mean rounding.
    if (std::all_of(p, p + hw, [&](double v) { return v == p[0]; })) continue;
    double s = 0.0;
    for (std::size_t i = 0; i < hw; ++i) {
      const double d = p[i] - mu[static_cast<std::size_t>(c)];
      s += d * d;
    }
    out[static_cast<std::size_t>(c)] = std::sqrt(s / static_cast<double>(hw));
  }
  return out;
}

Tensor global_std_pool_backward(const Tensor& x, std::span<const double> grad_out) {
  require_feature_map(x, "global std pool backward");
  if (grad_out.size() != static_cast<std::size_t>(x.channels())) throw ShapeError("global std pool backward: length");
  const std::size_t hw = static_cast<std::size_t>(x.height()) * x.width();
  const std::vector<double> mu = global_mean_pool(x);
  const std::vector<double> sd = global_std_pool(x);
  Tensor g = x.zeros_like();
  for (int c = 0; c < x.channels(); ++c) {
    const auto ci = static_cast<std::size_t>(c);
    if (sd[ci] <= 0.0) continue;
    const double scale = grad_out[ci] / (static_cast<double>(hw) * sd[ci]);
    const double* p = x.data() + c * hw;
    double* q = g.data() + c * hw;
    for (std::size_t i = 0; i < hw; ++i) q[i] = scale * (p[i] - mu[ci]);
  }
  return g;
}

std::vector<double> bilinear_fuse(std::span<const double> a, std::span<const double> b, bool normalize) {
  if (a.size() != b.size()) {
    throw ShapeError("bilinear fuse: length mismatch " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  }
  const std::size_t n = a.size();
  std::vector<double> z(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) z[i * n + j] = a[i] * b[j];
  if (!normalize) return z;
  double sq = 0.0;
  for (double& v : z) {
    const double m = std::sqrt(std::abs(v));
    v = v < 0.0 ? -m : m;
    sq += v * v;
  }
  if (sq > 0.0) {
    const double inv = 1.0 / std::sqrt(sq);
    for (double& v : z) v *= inv;
  }
  return z;
}

BilinearGrad bilinear_fuse_backward(std::span<const double> a, std::span<const double> b,
                                    std::span<const double> grad_out, bool normalize) {
  if (a.size() != b.size()) throw ShapeError("bilinear fuse backward: length mismatch");
  const std::size_t n = a.size();
  if (grad_out.size() != n * n) throw ShapeError("bilinear fuse backward: grad_out length");
  BilinearGrad g{std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)};

  std::vector<double> gz(grad_out.begin(), grad_out.end());
  if (normalize) {
    std::vector<double> u(n * n);
    double sq = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        const double z = a[i] * b[j];
        const double m = std::sqrt(std::abs(z));
        u[i * n + j] = z < 0.0 ? -m : m;
        sq += m * m;
      }
    if (sq <= 0.0) return g;
    const double norm = std::sqrt(sq);
    // d(u / |u|) / du applied to grad_out, then through the signed square root.
    double dot = 0.0;
    for (std::size_t k = 0; k < u.size(); ++k) dot += u[k] * grad_out[k];
    dot /= norm * norm;
    for (std::size_t k = 0; k < u.size(); ++k) {
      const double gu = (grad_out[k] - u[k] * dot) / norm;
      const double m = std::abs(u[k]);
      gz[k] = m > 0.0 ? gu / (2.0 * m) : 0.0;
    }
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      g.grad_a[i] += gz[i * n + j] * b[j];
      g.grad_b[j] += gz[i * n + j] * a[i];
    }
  return g;
}

}  // namespace lumina::nn
