#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lumina/backbone.hpp"
#include "lumina/image.hpp"
#include "lumina/nn/adam.hpp"
#include "lumina/nn/layers.hpp"

namespace lumina {

/// Per-channel mean and population standard deviation of one backbone tap.
struct TapStats {
  std::vector<double> mean;
  std::vector<double> std;
};
using ImageStats = std::array<TapStats, 2>;

/// Statistics at both tap stages (post-activation, pre-pooling).
ImageStats extract_stats(const Backbone& backbone, const Image& img);

struct QualityScores {
  double q_o = 0.0;
  double q_l1 = 0.0;
  double q_l2 = 0.0;
};

struct HeadConfig {
  bool normalize_bilinear = true;
  int stat_hidden = 128;
  int stat_out = 64;
  int reg_hidden1 = 256;
  int reg_hidden2 = 64;
};

/// Trainable regression head. Per tap, the mean and std vectors each pass
/// through FC(stat_hidden) -> ReLU -> FC(stat_out); the two results are fused
/// bilinearly and regressed to a layer-wise score by FC(256) -> ReLU -> FC(64)
/// -> ReLU -> FC(1). The two fused vectors are concatenated and regressed the
/// same way to the overall score Q_o. Outputs are linear.
class QualityHead {
 public:
  struct Branch {
    nn::FullyConnected mean1, mean2, std1, std2, reg1, reg2, reg3;
  };

  /// Forward intermediates of a batch, reused by backward.
  struct Cache {
    struct TapCache {
      nn::Matrix mean_in, std_in, m1, m2, s1, s2, fused, r1, r2;
    };
    std::array<TapCache, 2> taps;
    nn::Matrix concat, f1, f2;
  };

  QualityHead() = default;
  static QualityHead initialize(std::array<int, 2> tap_widths, const HeadConfig& config, std::uint64_t seed);
  /// Same architecture, every parameter zero (gradient accumulator).
  QualityHead zeros_like() const;

  bool empty() const noexcept { return branches_[0].mean1.weight.size() == 0; }
  const HeadConfig& config() const noexcept { return config_; }
  std::array<int, 2> tap_widths() const;

  nn::ParameterList parameters();
  nn::ConstParameterList parameters() const;

  std::vector<QualityScores> forward(const std::vector<ImageStats>& batch, Cache* cache = nullptr) const;

  /// grad_scores[i] = dL/d(Q_o, Q_l1, Q_l2) of item i. Parameter gradients are
  /// accumulated into `grads` when non-null; input gradients are returned when requested.
  std::vector<ImageStats> backward(const Cache& cache, const std::vector<std::array<double, 3>>& grad_scores,
                                   QualityHead* grads, bool want_input_grads) const;

  Branch& branch(int tap) { return branches_[static_cast<std::size_t>(tap)]; }
  const Branch& branch(int tap) const { return branches_[static_cast<std::size_t>(tap)]; }
  nn::FullyConnected& fused(int k) { return fused_[static_cast<std::size_t>(k)]; }
  const nn::FullyConnected& fused(int k) const { return fused_[static_cast<std::size_t>(k)]; }

 private:
  HeadConfig config_;
  std::array<Branch, 2> branches_;
  std::array<nn::FullyConnected, 3> fused_;
};

struct IqaTrainConfig {
  int batch_size = 32;
  double learning_rate = 1e-4;
  int epochs = 100;
  int finetune_epochs = 50;
  int crop = 256;
  std::uint64_t seed = 1;
};

struct LabeledImage {
  Image image;
  double label = 0.0;
};

struct IqaTrainResult {
  /// Mean regression loss per epoch, accumulated while training.
  std::vector<double> epoch_loss;
  int steps = 0;
};

/// Frozen backbone plus trainable head.
struct QualityModel {
  Backbone backbone;
  QualityHead head;
  std::uint64_t seed = 0;

  static QualityModel initialize(const BackboneProfile& profile, const HeadConfig& head_config, std::uint64_t seed);

  bool ready() const noexcept { return !backbone.empty() && !head.empty(); }
  QualityScores predict(const Image& img) const;

  struct PixelGradient {
    QualityScores scores;
    /// dQ_o / d(pixel), same shape as the input image.
    Image grad;
  };
  PixelGradient predict_with_gradient(const Image& img) const;

  /// Writes quality_head.llw and quality_meta.txt into `dir`, plus the backbone
  /// weights at `backbone_file` (relative to `dir`) when `write_backbone` is set.
  void save(const std::filesystem::path& dir, const std::string& backbone_file = "backbone.llw",
            bool write_backbone = true) const;
  static QualityModel load(const std::filesystem::path& dir);
};

/// Batch-mean of |y - Q_o| + |y - Q_l1| + |y - Q_l2|.
double regression_loss(const std::vector<QualityScores>& scores, const std::vector<double>& labels);

/// Adam on the head only; the backbone is never modified. Crops of
/// min(crop, side) are drawn per item and epoch; when the crop covers the
/// whole image, backbone statistics are computed once and reused.
IqaTrainResult train_iqa(QualityModel& model, const std::vector<LabeledImage>& data, const IqaTrainConfig& config,
                         int epochs);

/// Backbone profile from its metadata name ("desk" or "tiny").
BackboneProfile profile_by_name(const std::string& name);

}  // namespace lumina
