#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "lumina/image.hpp"
#include "lumina/losses.hpp"
#include "lumina/nn/layers.hpp"
#include "lumina/quality_model.hpp"

namespace lumina {

/// Output map applied to input + residual.
enum class Saturation {
  /// sigmoid(4 (z - 0.5)): smooth, unit slope at 0.5, range (0, 1).
  Logistic,
  /// clamp(z, 0, 1).
  Identity,
};

struct EnhancerConfig {
  int channels = 32;
  int blocks = 4;
  Saturation saturation = Saturation::Logistic;
  /// Multiplier on the tail convolution's initial weights.
  double tail_init_scale = 0.1;
};

/// Residual enhancement network: head conv 3->C, residual blocks
/// (conv, ReLU, conv, additive skip), tail conv C->3, global skip from the
/// input, then the saturation map.
class Enhancer {
 public:
  struct Block {
    nn::Conv3x3 conv1, conv2;
  };

  struct Trace {
    nn::Tensor input;
    std::vector<nn::Tensor> block_inputs;
    std::vector<nn::Tensor> block_hidden;  // post-ReLU
    nn::Tensor tail_input;
    nn::Tensor pre_saturation;
    nn::Tensor output;
  };

  Enhancer() = default;
  static Enhancer initialize(const EnhancerConfig& config, std::uint64_t seed);
  Enhancer zeros_like() const;

  bool empty() const noexcept { return head_.weight.size() == 0; }
  const EnhancerConfig& config() const noexcept { return config_; }
  void set_saturation(Saturation s) noexcept { config_.saturation = s; }

  nn::ParameterList parameters();
  nn::ConstParameterList parameters() const;

  nn::Conv3x3& head() noexcept { return head_; }
  std::vector<Block>& blocks() noexcept { return blocks_; }
  nn::Conv3x3& tail() noexcept { return tail_; }

  /// Throws ShapeError for non-RGB input and PreconditionError below 8x8.
  Image enhance(const Image& low) const;
  Image forward(const Image& low, Trace* trace) const;

  /// Accumulates parameter gradients of a loss with dL/d(output) = grad_out into `grads`.
  void backward(const Trace& trace, const Image& grad_out, Enhancer& grads) const;

  std::uint64_t checksum() const;

  /// enhancer.llw plus enhancer_meta.txt.
  void save(const std::filesystem::path& dir) const;
  static Enhancer load(const std::filesystem::path& dir);

 private:
  EnhancerConfig config_;
  nn::Conv3x3 head_;
  std::vector<Block> blocks_;
  nn::Conv3x3 tail_;
};

struct EnhanceTrainConfig {
  double learning_rate = 1e-4;
  /// Multiplier applied once to the learning rate when fine-tuning starts.
  double finetune_lr_scale = 0.5;
  int batch_size = 32;
  int pretrain_epochs = 200;
  int finetune_epochs = 15;
  int crop = 256;
  std::uint64_t seed = 1;
};

struct PairedImage {
  Image low;
  Image reference;
};

struct EnhanceCurve {
  std::vector<double> loss;
  std::vector<double> fidelity;
  std::vector<double> quality;
};

/// Minimizes ssim_loss(reference, enhance(low)) with Adam.
EnhanceCurve pretrain_enhancer(Enhancer& model, const std::vector<PairedImage>& pairs,
                               const EnhanceTrainConfig& config, int epochs, double learning_rate);

/// Minimizes joint_loss. With lambda_quality == 0 the quality model is unused.
EnhanceCurve finetune_enhancer(Enhancer& model, const std::vector<PairedImage>& pairs, const QualityModel* quality,
                               const FidelityConfig& fidelity, const JointLossConfig& joint,
                               const EnhanceTrainConfig& config, int epochs, double learning_rate);

}  // namespace lumina
