#pragma once

#include <span>
#include <vector>

#include "lumina/nn/tensor.hpp"

namespace lumina::nn {

/// 3x3 convolution, stride 1, zero padding 1 (spatial size preserved).
/// weight: (out, in, 3, 3), bias: (out).
struct Conv3x3 {
  Tensor weight;
  Tensor bias;

  Conv3x3() = default;
  Conv3x3(int in_channels, int out_channels);

  int in_channels() const { return weight.dim(1); }
  int out_channels() const { return weight.dim(0); }

  Tensor forward(const Tensor& x) const;

  /// Returns dL/dx. Parameter gradients are accumulated into `grads` unless it is null.
  Tensor backward(const Tensor& x, const Tensor& grad_out, Conv3x3* grads) const;

  /// Same as backward but skips dL/dx (first layer of a network).
  void backward_params(const Tensor& x, const Tensor& grad_out, Conv3x3& grads) const;
};

/// Affine layer applied to each row of a batch matrix. weight: (out, in), bias: (out).
struct FullyConnected {
  Tensor weight;
  Tensor bias;

  FullyConnected() = default;
  FullyConnected(int in_features, int out_features);

  int in_features() const { return weight.dim(1); }
  int out_features() const { return weight.dim(0); }

  Matrix forward(const Matrix& x) const;
  Matrix backward(const Matrix& x, const Matrix& grad_out, FullyConnected* grads) const;
};

Tensor relu(const Tensor& x);
Matrix relu(const Matrix& x);
/// Subgradient at 0 is 0.
Tensor relu_backward(const Tensor& x, const Tensor& grad_out);
Matrix relu_backward(const Matrix& x, const Matrix& grad_out);

Tensor sigmoid(const Tensor& x);
Tensor sigmoid_backward(const Tensor& x, const Tensor& grad_out);

/// 2x2 max pooling, stride 2, floor semantics. Ties route the gradient to the first maximum.
Tensor maxpool2(const Tensor& x);
Tensor maxpool2_backward(const Tensor& x, const Tensor& grad_out);

/// Per-channel spatial mean of a (C, H, W) tensor.
std::vector<double> global_mean_pool(const Tensor& x);
Tensor global_mean_pool_backward(const Tensor& x, std::span<const double> grad_out);

/// Per-channel population standard deviation. The gradient at zero variance is 0.
std::vector<double> global_std_pool(const Tensor& x);
Tensor global_std_pool_backward(const Tensor& x, std::span<const double> grad_out);

/// Flattened outer product a (x) b, index i * |b| + j. With `normalize`, the
/// product is followed by a signed square root and L2 normalization; the zero
/// vector maps to zero. Throws ShapeError when |a| != |b|.
std::vector<double> bilinear_fuse(std::span<const double> a, std::span<const double> b, bool normalize = true);

struct BilinearGrad {
  std::vector<double> grad_a;
  std::vector<double> grad_b;
};

/// The signed square root has derivative 1 / (2 sqrt|z|); at z == 0 it is taken as 0.
BilinearGrad bilinear_fuse_backward(std::span<const double> a, std::span<const double> b,
                                    std::span<const double> grad_out, bool normalize = true);

}  // namespace lumina::nn
