#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace lumina::nn {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<Matrix>;
using ConstMatrixMap = Eigen::Map<const Matrix>;

/// Dense row-major tensor of doubles. Feature maps use the shape (channels, height, width).
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape, double fill = 0.0);
  Tensor(std::initializer_list<int> shape) : Tensor(std::vector<int>(shape)) {}
  Tensor(std::vector<int> shape, std::vector<double> data);

  const std::vector<int>& shape() const noexcept { return shape_; }
  int rank() const noexcept { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
  std::size_t size() const noexcept { return data_.size(); }

  /// Convenience accessors for (C, H, W) feature maps.
  int channels() const { return dim(0); }
  int height() const { return dim(1); }
  int width() const { return dim(2); }

  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }
  std::vector<double>& values() noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }
  std::span<double> span() noexcept { return data_; }
  std::span<const double> span() const noexcept { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& at(int c, int y, int x) { return data_[(static_cast<std::size_t>(c) * shape_[1] + y) * shape_[2] + x]; }
  double at(int c, int y, int x) const {
    return data_[(static_cast<std::size_t>(c) * shape_[1] + y) * shape_[2] + x];
  }

  bool same_shape(const Tensor& other) const noexcept { return shape_ == other.shape_; }
  void fill(double v);
  Tensor zeros_like() const { return Tensor(shape_); }

  Tensor& operator+=(const Tensor& other);
  Tensor& operator*=(double s);

  std::string shape_string() const;

 private:
  std::vector<int> shape_;
  std::vector<double> data_;
};

/// Throws ShapeError with `what` when the shapes differ.
void require_same_shape(const Tensor& a, const Tensor& b, const char* what);

/// Rounds every value to the nearest binary32 value, so parameters survive a
/// 32-bit weights file bit-exactly.
void round_to_f32(Tensor& t);

/// Named view of a model parameter, in the model's canonical order.
struct ParameterRef {
  std::string name;
  Tensor* tensor;
};
using ParameterList = std::vector<ParameterRef>;

struct ConstParameterRef {
  std::string name;
  const Tensor* tensor;
};
using ConstParameterList = std::vector<ConstParameterRef>;

inline ConstParameterList as_const(const ParameterList& list) {
  ConstParameterList out;
  out.reserve(list.size());
  for (const auto& p : list) out.push_back({p.name, p.tensor});
  return out;
}

}  // namespace lumina::nn
