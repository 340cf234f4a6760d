#include "lumina/backbone.hpp"

#include <bit>
#include <cmath>

#include "lumina/error.hpp"
#include "lumina/nn/weights_file.hpp"
#include "lumina/random.hpp"

namespace lumina {

void BackboneProfile::validate() const {
  if (widths.empty() || widths.size() != convs_per_stage.size()) {
    throw ConfigError("backbone profile: widths and convs_per_stage must be non-empty and equal length");
  }
  for (std::size_t i = 0; i < widths.size(); ++i) {
    if (widths[i] <= 0 || convs_per_stage[i] <= 0) throw ConfigError("backbone profile: non-positive stage size");
  }
  for (int t : taps) {
    if (t < 1 || t > stage_count()) throw ConfigError("backbone profile: tap outside stage range");
  }
  if (taps[0] >= taps[1]) throw ConfigError("backbone profile: taps must be increasing");
}

Backbone Backbone::initialize(const BackboneProfile& profile, std::uint64_t seed) {
  profile.validate();
  Backbone b;
  b.profile_ = profile;
  Rng rng(derive_seed(seed, "backbone"));
  int in = 3;
  for (int s = 0; s < profile.stage_count(); ++s) {
    std::vector<nn::Conv3x3> stage;
    for (int k = 0; k < profile.convs_per_stage[static_cast<std::size_t>(s)]; ++k) {
      const int out = profile.widths[static_cast<std::size_t>(s)];
      nn::Conv3x3 conv(in, out);
      const double bound = std::sqrt(6.0 / (in * 9.0));
      for (double& w : conv.weight.values()) w = rng.uniform(-bound, bound);
      nn::round_to_f32(conv.weight);
      stage.push_back(std::move(conv));
      in = out;
    }
    b.stages_.push_back(std::move(stage));
  }
  return b;
}

Backbone Backbone::load(const BackboneProfile& profile, const std::filesystem::path& path) {
  Backbone b = initialize(profile, 0);
  nn::load_weights_into(path, b.parameters());
  return b;
}

void Backbone::save(const std::filesystem::path& path) const { nn::write_weights_file(path, parameters()); }

nn::ParameterList Backbone::parameters() {
  nn::ParameterList out;
  for (std::size_t s = 0; s < stages_.size(); ++s)
    for (std::size_t k = 0; k < stages_[s].size(); ++k) {
      const std::string base = "backbone.stage" + std::to_string(s + 1) + ".conv" + std::to_string(k + 1);
      out.push_back({base + ".weight", &stages_[s][k].weight});
      out.push_back({base + ".bias", &stages_[s][k].bias});
    }
  return out;
}

nn::ConstParameterList Backbone::parameters() const {
  return nn::as_const(const_cast<Backbone*>(this)->parameters());
}

std::uint64_t Backbone::checksum() const {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& p : parameters())
    for (double v : p.tensor->values()) {
      const std::uint32_t bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
      for (int i = 0; i < 4; ++i) h = (h ^ ((bits >> (8 * i)) & 0xFFu)) * 1099511628211ULL;
    }
  return h;
}

nn::Tensor Backbone::to_input(const Image& img) {
  nn::Tensor x({3, img.height(), img.width()});
  for (int c = 0; c < 3; ++c) {
    const auto src = img.plane(img.channels() == 3 ? c : 0);
    double* dst = x.data() + c * img.plane_size();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] - 0.5;
  }
  return x;
}

void Backbone::check_input(const Image& img) const {
  if (empty()) throw PreconditionError("backbone is not loaded");
  if (img.channels() != 1 && img.channels() != 3) throw ShapeError("backbone expects 1 or 3 channels");
  const int side = profile_.min_input_side();
  if (img.width() < side || img.height() < side) {
    throw PreconditionError("image " + std::to_string(img.width()) + "x" + std::to_string(img.height()) +
                            " is smaller than the backbone minimum " + std::to_string(side) + "x" +
                            std::to_string(side));
  }
}

Backbone::Trace Backbone::forward(const Image& img) const {
  check_input(img);
  Trace trace;
  nn::Tensor x = to_input(img);
  for (std::size_t s = 0; s < stages_.size(); ++s) {
    if (s > 0) x = nn::maxpool2(x);
    trace.conv_inputs.emplace_back();
    trace.conv_outputs.emplace_back();
    for (const auto& conv : stages_[s]) {
      trace.conv_inputs.back().push_back(x);
      x = nn::relu(conv.forward(x));
      trace.conv_outputs.back().push_back(x);
    }
  }
  return trace;
}

std::vector<nn::Tensor> Backbone::stage_outputs(const Image& img) const {
  check_input(img);
  std::vector<nn::Tensor> outs;
  nn::Tensor x = to_input(img);
  for (std::size_t s = 0; s < stages_.size(); ++s) {
    if (s > 0) x = nn::maxpool2(x);
    for (const auto& conv : stages_[s]) x = nn::relu(conv.forward(x));
    outs.push_back(x);
  }
  return outs;
}

Image Backbone::backward_to_input(const Trace& trace, const std::vector<nn::Tensor>& stage_grads,
                                  int channels) const {
  const int stages = static_cast<int>(stages_.size());
  int last = -1;
  for (int s = 0; s < stages && s < static_cast<int>(stage_grads.size()); ++s)
    if (stage_grads[static_cast<std::size_t>(s)].size() > 0) last = s;

  const nn::Tensor& in0 = trace.conv_inputs.front().front();
  if (last < 0) return Image(in0.width(), in0.height(), channels);

  nn::Tensor g;
  for (int s = last; s >= 0; --s) {
    const auto su = static_cast<std::size_t>(s);
    const nn::Tensor& direct = s < static_cast<int>(stage_grads.size()) ? stage_grads[su] : nn::Tensor();
    if (g.size() == 0) {
      g = direct.size() > 0 ? direct : trace.stage_output(s).zeros_like();
    } else if (direct.size() > 0) {
      g += direct;
    }
    for (int k = static_cast<int>(stages_[su].size()) - 1; k >= 0; --k) {
      const auto ku = static_cast<std::size_t>(k);
      g = nn::relu_backward(trace.conv_outputs[su][ku], g);
      g = stages_[su][ku].backward(trace.conv_inputs[su][ku], g, nullptr);
    }
    if (s > 0) g = nn::maxpool2_backward(trace.stage_output(s - 1), g);
  }

  Image out(g.width(), g.height(), channels);
  for (int c = 0; c < 3; ++c) {
    const double* src = g.data() + c * out.plane_size();
    auto dst = out.plane(channels == 3 ? c : 0);
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  }
  return out;
}

}  // namespace lumina
