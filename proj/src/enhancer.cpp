#include "lumina/enhancer.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "lumina/error.hpp"
#include "lumina/nn/adam.hpp"
#include "lumina/nn/weights_file.hpp"
#include "lumina/parallel.hpp"
#include "lumina/random.hpp"

namespace lumina {
namespace {

void init_conv(nn::Conv3x3& conv, int in, int out, double scale, Rng& rng) {
  conv = nn::Conv3x3(in, out);
  const double bound = scale * std::sqrt(6.0 / (in * 9.0));
  for (double& w : conv.weight.values()) w = rng.uniform(-bound, bound);
  nn::round_to_f32(conv.weight);
}

nn::Tensor image_to_tensor(const Image& img) { return nn::Tensor({3, img.height(), img.width()}, img.data()); }

Image tensor_to_image(const nn::Tensor& t) { return Image(t.width(), t.height(), t.channels(), t.values()); }

const char* saturation_name(Saturation s) { return s == Saturation::Logistic ? "logistic" : "identity"; }

Saturation parse_saturation(const std::string& s) {
  if (s == "logistic") return Saturation::Logistic;
  if (s == "identity") return Saturation::Identity;
  throw ConfigError("unknown saturation map '" + s + "' (expected logistic or identity)");
}

using ItemLoss = std::function<JointResult(std::size_t index, const Image& reference, const Image& enhanced)>;

struct Window {
  int x0, y0, w, h;
};

EnhanceCurve train(Enhancer& model, const std::vector<PairedImage>& pairs, const EnhanceTrainConfig& config,
                   int epochs, double learning_rate, const char* stream, const ItemLoss& item_loss) {
  if (model.empty()) throw PreconditionError("enhancer is not initialized");
  if (pairs.empty()) throw PreconditionError("enhancer training: empty pair set");
  if (config.batch_size <= 0 || config.crop <= 0 || !(learning_rate > 0.0) || epochs < 0) {
    throw ConfigError("enhancer training: batch size, crop and learning rate must be positive");
  }
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (!pairs[i].low.same_shape(pairs[i].reference)) {
      throw ShapeError("enhancer training: pair " + std::to_string(i) + " has mismatched sizes");
    }
  }

  Rng rng(derive_seed(config.seed, stream));
  nn::AdamState adam({learning_rate});
  const nn::ParameterList params = model.parameters();
  Enhancer total = model.zeros_like();
  const nn::ParameterList total_params = total.parameters();

  EnhanceCurve curve;
  std::vector<std::size_t> order(pairs.size());
  for (int epoch = 0; epoch < epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order.begin(), order.end());
    double sum_loss = 0.0, sum_fid = 0.0, sum_q = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t n = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size)) - start;
      std::vector<Window> windows(n);
      for (std::size_t k = 0; k < n; ++k) {
        const Image& img = pairs[order[start + k]].low;
        const int w = std::min(config.crop, img.width()), h = std::min(config.crop, img.height());
        windows[k] = {static_cast<int>(rng.below(static_cast<std::uint64_t>(img.width() - w + 1))),
                      static_cast<int>(rng.below(static_cast<std::uint64_t>(img.height() - h + 1))), w, h};
      }
      // Per-item gradients, summed afterwards in item order so the result does not depend on threading.
      std::vector<Enhancer> item_grads(n);
      std::vector<JointResult> results(n);
      parallel_for(n, [&](std::size_t k) {
        const std::size_t idx = order[start + k];
        const Window& wd = windows[k];
        const Image low = crop(pairs[idx].low, wd.x0, wd.y0, wd.w, wd.h);
        const Image ref = crop(pairs[idx].reference, wd.x0, wd.y0, wd.w, wd.h);
        Enhancer::Trace trace;
        const Image enh = model.forward(low, &trace);
        results[k] = item_loss(idx, ref, enh);
        item_grads[k] = model.zeros_like();
        model.backward(trace, results[k].grad, item_grads[k]);
        results[k].grad = Image();
      });
      for (const auto& p : total_params) p.tensor->fill(0.0);
      const double inv = 1.0 / static_cast<double>(n);
      for (std::size_t k = 0; k < n; ++k) {
        const nn::ParameterList g = item_grads[k].parameters();
        for (std::size_t j = 0; j < g.size(); ++j) *total_params[j].tensor += *g[j].tensor;
        sum_loss += results[k].loss;
        sum_fid += results[k].fidelity;
        sum_q += results[k].quality;
      }
      for (const auto& p : total_params) *p.tensor *= inv;
      adam.step(params, total_params);
      for (const auto& p : params) nn::round_to_f32(*p.tensor);
    }
    const double m = static_cast<double>(pairs.size());
    curve.loss.push_back(sum_loss / m);
    curve.fidelity.push_back(sum_fid / m);
    curve.quality.push_back(sum_q / m);
  }
  return curve;
}

}  // namespace

Enhancer Enhancer::initialize(const EnhancerConfig& config, std::uint64_t seed) {
  if (config.channels <= 0 || config.blocks < 0) throw ConfigError("enhancer: channels must be positive, blocks >= 0");
  Enhancer e;
  e.config_ = config;
  Rng rng(derive_seed(seed, "enhancer"));
  init_conv(e.head_, 3, config.channels, 1.0, rng);
  e.blocks_.resize(static_cast<std::size_t>(config.blocks));
  for (auto& b : e.blocks_) {
    init_conv(b.conv1, config.channels, config.channels, 1.0, rng);
    init_conv(b.conv2, config.channels, config.channels, 0.1, rng);
  }
  init_conv(e.tail_, config.channels, 3, config.tail_init_scale, rng);
  return e;
}

Enhancer Enhancer::zeros_like() const {
  Enhancer z = *this;
  for (auto& p : z.parameters()) p.tensor->fill(0.0);
  return z;
}

nn::ParameterList Enhancer::parameters() {
  nn::ParameterList out;
  auto add = [&](const std::string& name, nn::Conv3x3& conv) {
    out.push_back({name + ".weight", &conv.weight});
    out.push_back({name + ".bias", &conv.bias});
  };
  add("enhancer.head", head_);
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    const std::string base = "enhancer.block" + std::to_string(b + 1);
    add(base + ".conv1", blocks_[b].conv1);
    add(base + ".conv2", blocks_[b].conv2);
  }
  add("enhancer.tail", tail_);
  return out;
}

nn::ConstParameterList Enhancer::parameters() const { return nn::as_const(const_cast<Enhancer*>(this)->parameters()); }

Image Enhancer::enhance(const Image& low) const { return forward(low, nullptr); }

Image Enhancer::forward(const Image& low, Trace* trace) const {
  if (empty()) throw PreconditionError("enhancer is not initialized");
  if (low.channels() != 3) throw ShapeError("enhance: expected a 3-channel image");
  if (low.width() < 8 || low.height() < 8) throw PreconditionError("enhance: image smaller than 8x8");
  Trace local;
  Trace& t = trace ? *trace : local;
  t.input = image_to_tensor(low);
  t.block_inputs.clear();
  t.block_hidden.clear();
  nn::Tensor h = head_.forward(t.input);
  for (const auto& b : blocks_) {
    t.block_inputs.push_back(h);
    t.block_hidden.push_back(nn::relu(b.conv1.forward(h)));
    h += b.conv2.forward(t.block_hidden.back());
  }
  t.tail_input = h;
  nn::Tensor z = tail_.forward(h);
  z += t.input;
  t.pre_saturation = z;
  for (double& v : z.values()) {
    v = config_.saturation == Saturation::Logistic ? 1.0 / (1.0 + std::exp(-4.0 * (v - 0.5))) : std::clamp(v, 0.0, 1.0);
  }
  t.output = z;
  return tensor_to_image(z);
}

void Enhancer::backward(const Trace& t, const Image& grad_out, Enhancer& grads) const {
  if (grad_out.width() != t.output.width() || grad_out.height() != t.output.height() || grad_out.channels() != 3) {
    throw ShapeError("enhancer backward: gradient shape differs from output");
  }
  nn::Tensor gz({3, grad_out.height(), grad_out.width()}, grad_out.data());
  for (std::size_t i = 0; i < gz.size(); ++i) {
    if (config_.saturation == Saturation::Logistic) {
      const double y = t.output[i];
      gz[i] *= 4.0 * y * (1.0 - y);
    } else {
      const double z = t.pre_saturation[i];
      if (z < 0.0 || z > 1.0) gz[i] = 0.0;
    }
  }
  nn::Tensor gh = tail_.backward(t.tail_input, gz, &grads.tail_);
  for (std::size_t b = blocks_.size(); b-- > 0;) {
    nn::Tensor g = blocks_[b].conv2.backward(t.block_hidden[b], gh, &grads.blocks_[b].conv2);
    g = nn::relu_backward(t.block_hidden[b], g);
    gh += blocks_[b].conv1.backward(t.block_inputs[b], g, &grads.blocks_[b].conv1);
  }
  head_.backward_params(t.input, gh, grads.head_);
}

std::uint64_t Enhancer::checksum() const {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& p : parameters())
    for (double v : p.tensor->values()) {
      const std::uint32_t bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
      for (int i = 0; i < 4; ++i) h = (h ^ ((bits >> (8 * i)) & 0xFFu)) * 1099511628211ULL;
    }
  return h;
}

void Enhancer::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  nn::write_weights_file(dir / "enhancer.llw", parameters());
  std::ostringstream meta;
  meta << "# lumina enhancer\n"
       << "channels = " << config_.channels << "\n"
       << "blocks = " << config_.blocks << "\n"
       << "saturation = " << saturation_name(config_.saturation) << "\n";
  nn::write_file_atomic(dir / "enhancer_meta.txt", meta.str());
}

Enhancer Enhancer::load(const std::filesystem::path& dir) {
  std::ifstream in(dir / "enhancer_meta.txt");
  if (!in) throw IoError("cannot open " + (dir / "enhancer_meta.txt").string());
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) throw ConfigError("enhancer metadata: malformed line: " + line);
    kv[line.substr(0, eq)] = line.substr(eq + 3);
  }
  EnhancerConfig cfg;
  try {
    cfg.channels = std::stoi(kv.at("channels"));
    cfg.blocks = std::stoi(kv.at("blocks"));
    cfg.saturation = parse_saturation(kv.at("saturation"));
  } catch (const std::out_of_range&) {
    throw ConfigError("enhancer metadata: missing key");
  } catch (const std::invalid_argument&) {
    throw ConfigError("enhancer metadata: bad integer");
  }
  Enhancer e = initialize(cfg, 0);
  nn::load_weights_into(dir / "enhancer.llw", e.parameters());
  return e;
}

EnhanceCurve pretrain_enhancer(Enhancer& model, const std::vector<PairedImage>& pairs,
                               const EnhanceTrainConfig& config, int epochs, double learning_rate) {
  return train(model, pairs, config, epochs, learning_rate, "pretrain_enhancer",
               [](std::size_t, const Image& ref, const Image& enh) {
                 LossResult r = ssim_loss(ref, enh);
                 JointResult out;
                 out.loss = out.fidelity = r.loss;
                 out.grad = std::move(r.grad);
                 return out;
               });
}

EnhanceCurve finetune_enhancer(Enhancer& model, const std::vector<PairedImage>& pairs, const QualityModel* quality,
                               const FidelityConfig& fidelity, const JointLossConfig& joint,
                               const EnhanceTrainConfig& config, int epochs, double learning_rate) {
  if (joint.lambda_quality != 0.0 && (!quality || !quality->ready())) {
    throw PreconditionError("finetune_enhancer: quality model missing");
  }
  return train(model, pairs, config, epochs, learning_rate, "finetune_enhancer",
               [&](std::size_t, const Image& ref, const Image& enh) {
                 return joint_loss(ref, enh, quality, fidelity, joint);
               });
}

}  // namespace lumina
