#include "lumina/quality_model.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>

#include "lumina/error.hpp"
#include "lumina/nn/weights_file.hpp"
#include "lumina/parallel.hpp"
#include "lumina/random.hpp"

namespace lumina {
namespace {

using nn::Matrix;

void init_fc(nn::FullyConnected& fc, int in, int out, bool before_relu, Rng& rng) {
  fc = nn::FullyConnected(in, out);
  const double bound = std::sqrt((before_relu ? 6.0 : 3.0) / in);
  for (double& w : fc.weight.values()) w = rng.uniform(-bound, bound);
  nn::round_to_f32(fc.weight);
}

Matrix stack_rows(const std::vector<ImageStats>& batch, int tap, bool use_std) {
  const auto t = static_cast<std::size_t>(tap);
  const std::size_t cols = use_std ? batch.front()[t].std.size() : batch.front()[t].mean.size();
  Matrix m(static_cast<Eigen::Index>(batch.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& v = use_std ? batch[i][t].std : batch[i][t].mean;
    if (v.size() != cols) throw ShapeError("quality head: inconsistent statistics length in batch");
    for (std::size_t c = 0; c < cols; ++c) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = v[c];
  }
  return m;
}

std::string join(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

std::vector<int> split_ints(const std::string& s, const std::string& what) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stoi(item));
    } catch (const std::exception&) {
      throw ConfigError("quality metadata: bad integer list for " + what);
    }
  }
  return out;
}

std::map<std::string, std::string> read_key_values(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) throw ConfigError(path.string() + ": malformed line: " + line);
    kv[line.substr(0, eq)] = line.substr(eq + 3);
  }
  return kv;
}

TapStats stats_of(const nn::Tensor& feature) { return {nn::global_mean_pool(feature), nn::global_std_pool(feature)}; }

}  // namespace

BackboneProfile profile_by_name(const std::string& name) {
  if (name == "desk") return BackboneProfile::desk();
  if (name == "tiny") return BackboneProfile::tiny();
  throw ConfigError("unknown backbone profile '" + name + "' (expected desk or tiny)");
}

ImageStats extract_stats(const Backbone& backbone, const Image& img) {
  const auto outs = backbone.stage_outputs(img);
  const auto& taps = backbone.profile().taps;
  return {stats_of(outs[static_cast<std::size_t>(taps[0] - 1)]), stats_of(outs[static_cast<std::size_t>(taps[1] - 1)])};
}

QualityHead QualityHead::initialize(std::array<int, 2> tap_widths, const HeadConfig& config, std::uint64_t seed) {
  QualityHead h;
  h.config_ = config;
  Rng rng(derive_seed(seed, "quality_head"));
  const int fused_len = config.stat_out * config.stat_out;
  for (int t = 0; t < 2; ++t) {
    Branch& b = h.branches_[static_cast<std::size_t>(t)];
    const int w = tap_widths[static_cast<std::size_t>(t)];
    init_fc(b.mean1, w, config.stat_hidden, true, rng);
    init_fc(b.mean2, config.stat_hidden, config.stat_out, false, rng);
    init_fc(b.std1, w, config.stat_hidden, true, rng);
    init_fc(b.std2, config.stat_hidden, config.stat_out, false, rng);
    init_fc(b.reg1, fused_len, config.reg_hidden1, true, rng);
    init_fc(b.reg2, config.reg_hidden1, config.reg_hidden2, true, rng);
    init_fc(b.reg3, config.reg_hidden2, 1, false, rng);
  }
  init_fc(h.fused_[0], 2 * fused_len, config.reg_hidden1, true, rng);
  init_fc(h.fused_[1], config.reg_hidden1, config.reg_hidden2, true, rng);
  init_fc(h.fused_[2], config.reg_hidden2, 1, false, rng);
  return h;
}

QualityHead QualityHead::zeros_like() const {
  QualityHead z = *this;
  for (auto& p : z.parameters()) p.tensor->fill(0.0);
  return z;
}

std::array<int, 2> QualityHead::tap_widths() const {
  return {branches_[0].mean1.in_features(), branches_[1].mean1.in_features()};
}

nn::ParameterList QualityHead::parameters() {
  nn::ParameterList out;
  auto add = [&](const std::string& name, nn::FullyConnected& fc) {
    out.push_back({name + ".weight", &fc.weight});
    out.push_back({name + ".bias", &fc.bias});
  };
  for (int t = 0; t < 2; ++t) {
    Branch& b = branches_[static_cast<std::size_t>(t)];
    const std::string base = "head.tap" + std::to_string(t + 1) + ".";
    add(base + "mean1", b.mean1);
    add(base + "mean2", b.mean2);
    add(base + "std1", b.std1);
    add(base + "std2", b.std2);
    add(base + "reg1", b.reg1);
    add(base + "reg2", b.reg2);
    add(base + "reg3", b.reg3);
  }
  for (int k = 0; k < 3; ++k) add("head.fused" + std::to_string(k + 1), fused_[static_cast<std::size_t>(k)]);
  return out;
}

nn::ConstParameterList QualityHead::parameters() const {
  return nn::as_const(const_cast<QualityHead*>(this)->parameters());
}

std::vector<QualityScores> QualityHead::forward(const std::vector<ImageStats>& batch, Cache* cache) const {
  if (empty()) throw PreconditionError("quality head is not initialized");
  if (batch.empty()) return {};
  Cache local;
  Cache& c = cache ? *cache : local;
  const auto rows = static_cast<Eigen::Index>(batch.size());
  const int fused_len = config_.stat_out * config_.stat_out;
  c.concat.resize(rows, 2 * fused_len);
  std::array<Matrix, 2> layer_scores;
  for (int t = 0; t < 2; ++t) {
    const Branch& b = branches_[static_cast<std::size_t>(t)];
    auto& tc = c.taps[static_cast<std::size_t>(t)];
    tc.mean_in = stack_rows(batch, t, false);
    tc.std_in = stack_rows(batch, t, true);
    tc.m1 = nn::relu(b.mean1.forward(tc.mean_in));
    tc.m2 = b.mean2.forward(tc.m1);
    tc.s1 = nn::relu(b.std1.forward(tc.std_in));
    tc.s2 = b.std2.forward(tc.s1);
    tc.fused.resize(rows, fused_len);
    for (Eigen::Index i = 0; i < rows; ++i) {
      const Eigen::RowVectorXd mr = tc.m2.row(i), sr = tc.s2.row(i);
      const auto z = nn::bilinear_fuse(std::span<const double>(mr.data(), static_cast<std::size_t>(mr.size())),
                                       std::span<const double>(sr.data(), static_cast<std::size_t>(sr.size())),
                                       config_.normalize_bilinear);
      tc.fused.row(i) = Eigen::Map<const Eigen::RowVectorXd>(z.data(), fused_len);
    }
    c.concat.middleCols(t * fused_len, fused_len) = tc.fused;
    tc.r1 = nn::relu(b.reg1.forward(tc.fused));
    tc.r2 = nn::relu(b.reg2.forward(tc.r1));
    layer_scores[static_cast<std::size_t>(t)] = b.reg3.forward(tc.r2);
  }
  c.f1 = nn::relu(fused_[0].forward(c.concat));
  c.f2 = nn::relu(fused_[1].forward(c.f1));
  const Matrix qo = fused_[2].forward(c.f2);
  std::vector<QualityScores> out(batch.size());
  for (Eigen::Index i = 0; i < rows; ++i)
    out[static_cast<std::size_t>(i)] = {qo(i, 0), layer_scores[0](i, 0), layer_scores[1](i, 0)};
  return out;
}

std::vector<ImageStats> QualityHead::backward(const Cache& c, const std::vector<std::array<double, 3>>& grad_scores,
                                              QualityHead* grads, bool want_input_grads) const {
  const auto rows = static_cast<Eigen::Index>(grad_scores.size());
  if (rows != c.concat.rows()) throw ShapeError("quality head backward: batch size differs from cache");
  const int fused_len = config_.stat_out * config_.stat_out;
  auto column = [&](int k) {
    Matrix g(rows, 1);
    for (Eigen::Index i = 0; i < rows; ++i) g(i, 0) = grad_scores[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)];
    return g;
  };
  Matrix g = fused_[2].backward(c.f2, column(0), grads ? &grads->fused_[2] : nullptr);
  g = nn::relu_backward(c.f2, g);
  g = fused_[1].backward(c.f1, g, grads ? &grads->fused_[1] : nullptr);
  g = nn::relu_backward(c.f1, g);
  const Matrix g_concat = fused_[0].backward(c.concat, g, grads ? &grads->fused_[0] : nullptr);

  std::vector<ImageStats> input_grads(want_input_grads ? grad_scores.size() : 0);
  for (int t = 0; t < 2; ++t) {
    const auto ts = static_cast<std::size_t>(t);
    const Branch& b = branches_[ts];
    Branch* gb = grads ? &grads->branches_[ts] : nullptr;
    const auto& tc = c.taps[ts];

    Matrix gr = b.reg3.backward(tc.r2, column(t + 1), gb ? &gb->reg3 : nullptr);
    gr = nn::relu_backward(tc.r2, gr);
    gr = b.reg2.backward(tc.r1, gr, gb ? &gb->reg2 : nullptr);
    gr = nn::relu_backward(tc.r1, gr);
    Matrix g_fused = b.reg1.backward(tc.fused, gr, gb ? &gb->reg1 : nullptr);
    g_fused += g_concat.middleCols(t * fused_len, fused_len);

    Matrix g_m2(rows, tc.m2.cols()), g_s2(rows, tc.s2.cols());
    for (Eigen::Index i = 0; i < rows; ++i) {
      const Eigen::RowVectorXd mr = tc.m2.row(i), sr = tc.s2.row(i), gz = g_fused.row(i);
      const auto bg = nn::bilinear_fuse_backward(
          std::span<const double>(mr.data(), static_cast<std::size_t>(mr.size())),
          std::span<const double>(sr.data(), static_cast<std::size_t>(sr.size())),
          std::span<const double>(gz.data(), static_cast<std::size_t>(gz.size())), config_.normalize_bilinear);
      g_m2.row(i) = Eigen::Map<const Eigen::RowVectorXd>(bg.grad_a.data(), g_m2.cols());
      g_s2.row(i) = Eigen::Map<const Eigen::RowVectorXd>(bg.grad_b.data(), g_s2.cols());
    }
    Matrix gm = b.mean2.backward(tc.m1, g_m2, gb ? &gb->mean2 : nullptr);
    gm = nn::relu_backward(tc.m1, gm);
    const Matrix g_mean_in = b.mean1.backward(tc.mean_in, gm, gb ? &gb->mean1 : nullptr);
    Matrix gs = b.std2.backward(tc.s1, g_s2, gb ? &gb->std2 : nullptr);
    gs = nn::relu_backward(tc.s1, gs);
    const Matrix g_std_in = b.std1.backward(tc.std_in, gs, gb ? &gb->std1 : nullptr);

    if (want_input_grads) {
      for (Eigen::Index i = 0; i < rows; ++i) {
        auto& dst = input_grads[static_cast<std::size_t>(i)][ts];
        dst.mean.assign(g_mean_in.row(i).begin(), g_mean_in.row(i).end());
        dst.std.assign(g_std_in.row(i).begin(), g_std_in.row(i).end());
      }
    }
  }
  return input_grads;
}

QualityModel QualityModel::initialize(const BackboneProfile& profile, const HeadConfig& head_config,
                                      std::uint64_t seed) {
  QualityModel m;
  m.seed = seed;
  m.backbone = Backbone::initialize(profile, seed);
  const auto& w = profile.widths;
  m.head = QualityHead::initialize({w[static_cast<std::size_t>(profile.taps[0] - 1)],
                                    w[static_cast<std::size_t>(profile.taps[1] - 1)]},
                                   head_config, seed);
  return m;
}

QualityScores QualityModel::predict(const Image& img) const {
  if (!ready()) throw PreconditionError("quality model weights missing");
  return head.forward({extract_stats(backbone, img)}).front();
}

QualityModel::PixelGradient QualityModel::predict_with_gradient(const Image& img) const {
  if (!ready()) throw PreconditionError("quality model weights missing");
  const Backbone::Trace trace = backbone.forward(img);
  const auto& taps = backbone.profile().taps;
  std::array<const nn::Tensor*, 2> features{&trace.stage_output(taps[0] - 1), &trace.stage_output(taps[1] - 1)};
  ImageStats stats{stats_of(*features[0]), stats_of(*features[1])};

  QualityHead::Cache cache;
  PixelGradient out;
  out.scores = head.forward({stats}, &cache).front();
  const auto g = head.backward(cache, {{1.0, 0.0, 0.0}}, nullptr, true).front();

  std::vector<nn::Tensor> stage_grads(static_cast<std::size_t>(backbone.profile().stage_count()));
  for (int t = 0; t < 2; ++t) {
    const auto ts = static_cast<std::size_t>(t);
    nn::Tensor gt = nn::global_mean_pool_backward(*features[ts], g[ts].mean);
    gt += nn::global_std_pool_backward(*features[ts], g[ts].std);
    auto& slot = stage_grads[static_cast<std::size_t>(taps[ts] - 1)];
    if (slot.size() == 0) {
      slot = std::move(gt);
    } else {
      slot += gt;
    }
  }
  out.grad = backbone.backward_to_input(trace, stage_grads, img.channels());
  return out;
}

void QualityModel::save(const std::filesystem::path& dir, const std::string& backbone_file,
                        bool write_backbone) const {
  if (!ready()) throw PreconditionError("quality model weights missing");
  std::filesystem::create_directories(dir);
  if (write_backbone) backbone.save(dir / backbone_file);
  nn::write_weights_file(dir / "quality_head.llw", head.parameters());
  const auto& p = backbone.profile();
  const auto& hc = head.config();
  char checksum[32];
  std::snprintf(checksum, sizeof checksum, "%016llx", static_cast<unsigned long long>(backbone.checksum()));
  std::ostringstream meta;
  meta << "# lumina quality model\n"
       << "profile = " << p.name << "\n"
       << "widths = " << join(p.widths) << "\n"
       << "convs_per_stage = " << join(p.convs_per_stage) << "\n"
       << "taps = " << p.taps[0] << "," << p.taps[1] << "\n"
       << "normalize_bilinear = " << (hc.normalize_bilinear ? 1 : 0) << "\n"
       << "stat_hidden = " << hc.stat_hidden << "\n"
       << "stat_out = " << hc.stat_out << "\n"
       << "reg_hidden1 = " << hc.reg_hidden1 << "\n"
       << "reg_hidden2 = " << hc.reg_hidden2 << "\n"
       << "seed = " << seed << "\n"
       << "backbone_file = " << backbone_file << "\n"
       << "backbone_checksum = " << checksum << "\n";
  nn::write_file_atomic(dir / "quality_meta.txt", meta.str());
}

QualityModel QualityModel::load(const std::filesystem::path& dir) {
  const auto kv = read_key_values(dir / "quality_meta.txt");
  auto get = [&](const std::string& key) {
    const auto it = kv.find(key);
    if (it == kv.end()) throw ConfigError("quality metadata: missing " + key);
    return it->second;
  };
  BackboneProfile profile;
  profile.name = get("profile");
  profile.widths = split_ints(get("widths"), "widths");
  profile.convs_per_stage = split_ints(get("convs_per_stage"), "convs_per_stage");
  const auto taps = split_ints(get("taps"), "taps");
  if (taps.size() != 2) throw ConfigError("quality metadata: expected two taps");
  profile.taps = {taps[0], taps[1]};
  HeadConfig hc;
  hc.normalize_bilinear = get("normalize_bilinear") != "0";
  hc.stat_hidden = std::stoi(get("stat_hidden"));
  hc.stat_out = std::stoi(get("stat_out"));
  hc.reg_hidden1 = std::stoi(get("reg_hidden1"));
  hc.reg_hidden2 = std::stoi(get("reg_hidden2"));

  QualityModel m = initialize(profile, hc, 0);
  m.seed = std::stoull(get("seed"));
  nn::load_weights_into(dir / get("backbone_file"), m.backbone.parameters());
  nn::load_weights_into(dir / "quality_head.llw", m.head.parameters());
  return m;
}

double regression_loss(const std::vector<QualityScores>& scores, const std::vector<double>& labels) {
  if (scores.size() != labels.size()) throw ShapeError("regression loss: batch size mismatch");
  if (scores.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const double y = labels[i];
    total += std::abs(y - scores[i].q_o) + std::abs(y - scores[i].q_l1) + std::abs(y - scores[i].q_l2);
  }
  return total / static_cast<double>(scores.size());
}

IqaTrainResult train_iqa(QualityModel& model, const std::vector<LabeledImage>& data, const IqaTrainConfig& config,
                         int epochs) {
  if (!model.ready()) throw PreconditionError("train_iqa: quality model weights missing");
  if (data.empty()) throw PreconditionError("train_iqa: empty training set");
  if (config.batch_size <= 0 || config.crop <= 0 || epochs < 0 || !(config.learning_rate > 0.0)) {
    throw ConfigError("train_iqa: batch size, crop and learning rate must be positive");
  }
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double y = data[i].label;
    if (!std::isfinite(y) || y < 0.0 || y > 1.0) {
      throw PreconditionError("train_iqa: label of item " + std::to_string(i) + " outside [0,1]");
    }
    model.backbone.check_input(data[i].image);
  }

  // Items whose crop spans the whole image always see the same statistics.
  std::vector<std::optional<ImageStats>> cached(data.size());
  std::vector<std::size_t> full;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Image& img = data[i].image;
    if (config.crop >= img.width() && config.crop >= img.height()) full.push_back(i);
  }
  parallel_for(full.size(), [&](std::size_t k) { cached[full[k]] = extract_stats(model.backbone, data[full[k]].image); });

  Rng rng(derive_seed(config.seed, "train_iqa"));
  nn::AdamState adam({config.learning_rate});
  QualityHead grads = model.head.zeros_like();
  const nn::ParameterList params = model.head.parameters();
  const nn::ParameterList grad_params = grads.parameters();

  IqaTrainResult result;
  std::vector<std::size_t> order(data.size());
  for (int epoch = 0; epoch < epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order.begin(), order.end());
    double epoch_total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      const std::size_t n = end - start;
      struct Window {
        int x0, y0, w, h;
      };
      std::vector<Window> windows(n);
      for (std::size_t k = 0; k < n; ++k) {
        const Image& img = data[order[start + k]].image;
        const int w = std::min(config.crop, img.width()), h = std::min(config.crop, img.height());
        const int x0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(img.width() - w + 1)));
        const int y0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(img.height() - h + 1)));
        windows[k] = {x0, y0, w, h};
      }
      std::vector<ImageStats> batch(n);
      std::vector<double> labels(n);
      parallel_for(n, [&](std::size_t k) {
        const std::size_t idx = order[start + k];
        if (cached[idx]) {
          batch[k] = *cached[idx];
        } else {
          const Window& wd = windows[k];
          batch[k] = extract_stats(model.backbone, crop(data[idx].image, wd.x0, wd.y0, wd.w, wd.h));
        }
      });
      for (std::size_t k = 0; k < n; ++k) labels[k] = data[order[start + k]].label;

      QualityHead::Cache cache;
      const auto scores = model.head.forward(batch, &cache);
      epoch_total += regression_loss(scores, labels) * static_cast<double>(n);
      std::vector<std::array<double, 3>> g(n);
      const double inv = 1.0 / static_cast<double>(n);
      auto dsign = [](double pred, double y) { return pred > y ? 1.0 : (pred < y ? -1.0 : 0.0); };
      for (std::size_t k = 0; k < n; ++k) {
        g[k] = {dsign(scores[k].q_o, labels[k]) * inv, dsign(scores[k].q_l1, labels[k]) * inv,
                dsign(scores[k].q_l2, labels[k]) * inv};
      }
      for (const auto& p : grad_params) p.tensor->fill(0.0);
      model.head.backward(cache, g, &grads, false);
      adam.step(params, grad_params);
      for (const auto& p : params) nn::round_to_f32(*p.tensor);
      ++result.steps;
    }
    result.epoch_loss.push_back(epoch_total / static_cast<double>(data.size()));
  }
  return result;
}

}  // namespace lumina
