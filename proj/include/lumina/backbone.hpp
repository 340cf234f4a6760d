#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lumina/image.hpp"
#include "lumina/nn/layers.hpp"
#include "lumina/nn/tensor.hpp"

namespace lumina {

/// Shape of a VGG-style feature extractor: stages of (conv3x3 + ReLU) blocks
/// separated by 2x2 max pooling.
struct BackboneProfile {
  std::string name = "desk";
  std::vector<int> widths{16, 32, 64, 128, 128};
  std::vector<int> convs_per_stage{2, 2, 3, 3, 3};
  /// 1-based stage indices whose outputs (post-activation, pre-pooling) feed the quality head.
  std::array<int, 2> taps{3, 5};

  static BackboneProfile desk() { return {}; }
  /// Three single-conv stages; accepts inputs down to 8x8.
  static BackboneProfile tiny() { return {"tiny", {4, 8, 8}, {1, 1, 1}, {2, 3}}; }

  int stage_count() const { return static_cast<int>(widths.size()); }
  /// Smallest accepted input side: one pooling per stage transition plus one spare halving.
  int min_input_side() const { return 1 << stage_count(); }
  void validate() const;
};

/// Frozen feature extractor. No optimizer in this library ever updates it; pixel
/// gradients still flow through it.
class Backbone {
 public:
  struct Trace {
    std::vector<std::vector<nn::Tensor>> conv_inputs;
    std::vector<std::vector<nn::Tensor>> conv_outputs;  // post-ReLU
    const nn::Tensor& stage_output(int s) const { return conv_outputs[static_cast<std::size_t>(s)].back(); }
  };

  Backbone() = default;

  /// He-uniform weights, zero biases, values rounded to binary32.
  static Backbone initialize(const BackboneProfile& profile, std::uint64_t seed);
  static Backbone load(const BackboneProfile& profile, const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  const BackboneProfile& profile() const noexcept { return profile_; }
  bool empty() const noexcept { return stages_.empty(); }

  nn::ParameterList parameters();
  nn::ConstParameterList parameters() const;
  std::vector<std::vector<nn::Conv3x3>>& stages() noexcept { return stages_; }
  const std::vector<std::vector<nn::Conv3x3>>& stages() const noexcept { return stages_; }

  /// FNV-1a over the binary32 images of all parameters in canonical order.
  std::uint64_t checksum() const;

  /// Image (1 or 3 channels, gray replicated) to the network input tensor, centred at 0.5.
  static nn::Tensor to_input(const Image& img);

  /// Throws PreconditionError when the image is smaller than the profile allows.
  void check_input(const Image& img) const;

  Trace forward(const Image& img) const;
  /// Outputs of every stage (post-activation, pre-pooling).
  std::vector<nn::Tensor> stage_outputs(const Image& img) const;

  /// Back-propagates gradients given for stage outputs (empty tensors mean zero)
  /// down to the input image. Parameter gradients are not formed.
  Image backward_to_input(const Trace& trace, const std::vector<nn::Tensor>& stage_grads, int channels) const;

 private:
  BackboneProfile profile_;
  std::vector<std::vector<nn::Conv3x3>> stages_;
};

}  // namespace lumina
