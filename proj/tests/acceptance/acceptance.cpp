// Acceptance run: one PASS/FAIL line per criterion.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "lumina/bench.hpp"
#include "lumina/cli.hpp"
#include "lumina/enhancer.hpp"
#include "lumina/error.hpp"
#include "lumina/fusion.hpp"
#include "lumina/image_io.hpp"
#include "lumina/losses.hpp"
#include "lumina/loop.hpp"
#include "lumina/manifest.hpp"
#include "lumina/metrics.hpp"
#include "lumina/nn/gradient_check.hpp"
#include "lumina/nn/layers.hpp"
#include "lumina/quality_model.hpp"
#include "lumina/random.hpp"
#include "lumina/synth.hpp"

using namespace lumina;
namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kSeed = 11;

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Image random_image(int w, int h, int c, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
  Rng rng(seed);
  Image img(w, h, c);
  for (double& v : img.data()) v = rng.uniform(lo, hi);
  return img;
}

nn::Tensor random_tensor(std::vector<int> shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  nn::Tensor t(std::move(shape));
  Rng rng(seed);
  for (double& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Shared seeded data.
struct Workspace {
  fs::path root;
  fs::path labelled_all, labelled_train, labelled_test;
  fs::path pairs;

  fs::path labelled() {
    if (labelled_all.empty()) {
      labelled_all = write_synth_labelled(root / "labelled", {64, 64, kSeed, 0.2});
      labelled_train = root / "labelled" / "train.tsv";
      labelled_test = root / "labelled" / "test.tsv";
    }
    return labelled_all;
  }
  fs::path paired() {
    if (pairs.empty()) pairs = write_synth_pairs(root / "pairs", {32, 64, kSeed});
    return pairs;
  }
};

// 1
void decomposition(Workspace&, Outcome& o) {
  const auto start = std::chrono::steady_clock::now();
  double recon = 0.0, norm_err = 0.0, mean_err = 0.0;
  int patches = 0;
  for (std::uint64_t s = 0; s < 10000; ++s) {
    const int c = s % 4 == 0 ? 1 : 3;
    const int side = 4 + static_cast<int>(s % 9);
    const Image p = random_image(side, side, c, s + 1);
    const auto d = decompose_patch(p);
    const Image r = d.reconstruct();
    for (std::size_t i = 0; i < p.size(); ++i) recon = std::max(recon, std::abs(r.data()[i] - p.data()[i]));
    if (d.degenerate) continue;
    double n = 0.0;
    for (double v : d.structure) n += v * v;
    norm_err = std::max(norm_err, std::abs(std::sqrt(n) - 1.0));
    const std::size_t plane = p.plane_size();
    for (int ch = 0; ch < c; ++ch) {
      double m = 0.0;
      for (std::size_t i = 0; i < plane; ++i) m += d.structure[static_cast<std::size_t>(ch) * plane + i];
      mean_err = std::max(mean_err, std::abs(m / static_cast<double>(plane)));
    }
    ++patches;
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  o.detail << patches << " patches, reconstruction " << fmt("%.1e", recon) << ", |s|-1 " << fmt("%.1e", norm_err)
           << ", mean " << fmt("%.1e", mean_err);
  o.require(patches >= 10000, "patch count");
  o.require(recon <= 1e-9, "reconstruction");
  o.require(norm_err <= 1e-9, "unit structure");
  o.require(mean_err <= 1e-9, "zero-mean structure");
  o.require(secs < 10.0, "runtime");
}

// 2
void metric_axioms(Workspace&, Outcome& o) {
  const Backbone backbone = Backbone::initialize(BackboneProfile::desk(), kSeed);
  const std::set<MetricId> symmetric{MetricId::Ssim, MetricId::MsSsim, MetricId::Gmsd, MetricId::Fsim, MetricId::DeepSim};
  int identity_bad = 0, symmetry_bad = 0, monotone_bad = 0, checks = 0;
  double worst_sym = 0.0;
  for (std::uint64_t seed = 1; seed <= 6; ++seed) {
    const Image x = synth_reference(seed, 96);
    Rng noise(seed + 50);
    const Image y = quantize8(apply_graded_degradation(x, 2, noise));
    for (MetricId id : all_metrics()) {
      const double same = compute_metric(id, x, x, &backbone).value;
      const double top = id == MetricId::Psnr ? kPsnrCap : (id == MetricId::Gmsd ? 0.0 : 1.0);
      if (same != top) {
        ++identity_bad;
        o.detail << " identity " << metric_name(id) << "=" << fmt("%.17g", same);
      }
      if (symmetric.count(id)) {
        const double d = std::abs(compute_metric(id, x, y, &backbone).value - compute_metric(id, y, x, &backbone).value);
        worst_sym = std::max(worst_sym, d);
        if (d > 1e-9) ++symmetry_bad;
      }
    }
    // Graded single-distortion families: five noise and blur levels, plus a fixed-pattern noise series.
    std::vector<std::vector<Image>> families;
    for (Distortion d : {Distortion::Noise, Distortion::Blur}) {
      std::vector<Image> graded;
      for (int level = 0; level < kDistortionLevels; ++level) {
        Rng rng(derive_seed(seed, "fixture" + std::to_string(static_cast<int>(d))));
        graded.push_back(apply_distortion(x, d, level, rng));
      }
      families.push_back(std::move(graded));
    }
    {
      std::vector<Image> graded;
      const Image pattern = random_image(96, 96, 3, seed + 70, -1.0, 1.0);
      for (double sigma : {0.02, 0.05, 0.1}) {
        Image n = x;
        for (std::size_t i = 0; i < n.size(); ++i) n.data()[i] = std::clamp(n.data()[i] + sigma * std::sqrt(3.0) * pattern.data()[i], 0.0, 1.0);
        graded.push_back(std::move(n));
      }
      families.push_back(std::move(graded));
    }
    for (std::size_t f = 0; f < families.size(); ++f) {
      for (MetricId id : all_metrics()) {
        double prev = 0.0;
        for (std::size_t level = 0; level < families[f].size(); ++level) {
          const double v = compute_metric(id, x, families[f][level], &backbone).value;
          const double q = higher_is_better(id) ? v : -v;
          ++checks;
          if (level > 0 && !(q < prev)) {
            ++monotone_bad;
            o.detail << " monotonicity " << metric_name(id) << " fixture " << seed << " family " << f << " level " << level;
          }
          prev = q;
        }
      }
    }
  }
  o.detail << " identity violations " << identity_bad << ", worst asymmetry " << fmt("%.1e", worst_sym) << ", "
           << checks << " graded scores, monotonicity violations " << monotone_bad;
  o.require(identity_bad == 0, "identity maxima");
  o.require(symmetry_bad == 0, "symmetry");
  o.require(monotone_bad == 0, "graded monotonicity");
}

// 3
void gradients(Workspace&, Outcome& o) {
  const auto start = std::chrono::steady_clock::now();
  double worst_layer = 0.0, worst_loss = 0.0;
  auto layer = [&](const std::string& name, const nn::GradCheckReport& r) {
    worst_layer = std::max(worst_layer, r.max_relative_error);
    if (r.max_relative_error >= 1e-5) o.detail << " " << name << "=" << fmt("%.1e", r.max_relative_error);
  };
  auto loss_check = [&](const std::string& name, const nn::GradCheckReport& r) {
    worst_loss = std::max(worst_loss, r.max_relative_error);
    if (r.max_relative_error >= 1e-4) o.detail << " " << name << "=" << fmt("%.1e", r.max_relative_error);
  };

  {
    nn::Conv3x3 conv(3, 4);
    conv.weight = random_tensor({4, 3, 3, 3}, 1);
    conv.bias = random_tensor({4}, 2);
    nn::Tensor x = random_tensor({3, 7, 6}, 3);
    const nn::Tensor w = random_tensor({4, 7, 6}, 4);
    nn::Conv3x3 g = conv;
    g.weight.fill(0.0);
    g.bias.fill(0.0);
    const nn::Tensor gx = conv.backward(x, w, &g);
    layer("conv3x3", nn::gradient_check({{"x", x.span(), gx.span()}, {"w", conv.weight.span(), g.weight.span()},
                                         {"b", conv.bias.span(), g.bias.span()}},
                                        [&] { return dot(conv.forward(x).span(), w.span()); }));
  }
  {
    nn::FullyConnected fc(6, 5);
    fc.weight = random_tensor({5, 6}, 5);
    fc.bias = random_tensor({5}, 6);
    nn::Matrix x(3, 6), w(3, 5);
    Rng rng(7);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform(-1, 1);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.uniform(-1, 1);
    nn::FullyConnected g = fc;
    g.weight.fill(0.0);
    g.bias.fill(0.0);
    const nn::Matrix gx = fc.backward(x, w, &g);
    layer("fully_connected",
          nn::gradient_check({{"x", {x.data(), static_cast<std::size_t>(x.size())}, {gx.data(), static_cast<std::size_t>(gx.size())}},
                              {"w", fc.weight.span(), g.weight.span()},
                              {"b", fc.bias.span(), g.bias.span()}},
                             [&] { return (fc.forward(x).array() * w.array()).sum(); }));
  }
  {
    const nn::Tensor w = random_tensor({2, 6, 6}, 8);
    nn::Tensor xr = random_tensor({2, 6, 6}, 9);
    for (double& v : xr.values()) v += v < 0 ? -0.1 : 0.1;
    const nn::Tensor gr = nn::relu_backward(xr, w);
    layer("relu", nn::gradient_check({{"x", xr.span(), gr.span()}}, [&] { return dot(nn::relu(xr).span(), w.span()); }));
    nn::Tensor xs = random_tensor({2, 6, 6}, 10, -3, 3);
    const nn::Tensor gs = nn::sigmoid_backward(xs, w);
    layer("sigmoid", nn::gradient_check({{"x", xs.span(), gs.span()}}, [&] { return dot(nn::sigmoid(xs).span(), w.span()); }));
    const nn::Tensor wp = random_tensor({2, 3, 3}, 11);
    nn::Tensor xp = random_tensor({2, 6, 6}, 12);
    const nn::Tensor gp = nn::maxpool2_backward(xp, wp);
    layer("maxpool", nn::gradient_check({{"x", xp.span(), gp.span()}}, [&] { return dot(nn::maxpool2(xp).span(), wp.span()); }));
    const std::vector<double> wc{0.7, -0.4};
    nn::Tensor xm = random_tensor({2, 5, 4}, 13);
    const nn::Tensor gm = nn::global_mean_pool_backward(xm, wc);
    layer("mean_pool", nn::gradient_check({{"x", xm.span(), gm.span()}}, [&] { return dot(nn::global_mean_pool(xm), wc); }));
    const nn::Tensor gsd = nn::global_std_pool_backward(xm, wc);
    layer("std_pool", nn::gradient_check({{"x", xm.span(), gsd.span()}}, [&] { return dot(nn::global_std_pool(xm), wc); }));
  }
  for (bool normalize : {true, false}) {
    Rng rng(14);
    std::vector<double> a(64), b(64), w(4096);
    for (double& v : a) v = rng.uniform(-1, 1);
    for (double& v : b) v = rng.uniform(-1, 1);
    for (double& v : w) v = rng.uniform(-1, 1);
    const auto g = nn::bilinear_fuse_backward(a, b, w, normalize);
    layer(normalize ? "bilinear" : "bilinear_plain",
          nn::gradient_check({{"a", a, g.grad_a}, {"b", b, g.grad_b}}, [&] { return dot(nn::bilinear_fuse(a, b, normalize), w); }));
  }

  const QualityModel tiny = QualityModel::initialize(BackboneProfile::tiny(), {}, kSeed);
  const QualityModel desk = QualityModel::initialize(BackboneProfile::desk(), {}, kSeed);
  {
    const Image ref = random_image(16, 16, 3, 20);
    Image enh = random_image(16, 16, 3, 21);
    const Image gs = ssim_loss(ref, enh).grad;
    loss_check("ssim_loss", nn::gradient_check({{"enh", enh.data(), gs.data()}}, [&] { return ssim_loss(ref, enh).loss; }));
    const Image gf = fidelity_loss(ref, enh).grad;
    loss_check("fidelity_loss",
               nn::gradient_check({{"enh", enh.data(), gf.data()}}, [&] { return fidelity_loss(ref, enh).loss; }));
    const Image gj = joint_loss(ref, enh, &tiny, {}, {}).grad;
    loss_check("joint_loss",
               nn::gradient_check({{"enh", enh.data(), gj.data()}}, [&] { return joint_loss(ref, enh, &tiny, {}, {}).loss; }));
  }
  {
    Image x = random_image(8, 8, 3, 22);
    const Image g = quality_loss(x, tiny).grad;
    loss_check("quality_loss_tiny", nn::gradient_check({{"enh", x.data(), g.data()}}, [&] { return quality_loss(x, tiny).loss; }));
    Image y = random_image(32, 32, 3, 23);
    const Image gd = quality_loss(y, desk).grad;
    nn::GradCheckOptions opt;
    opt.max_coordinates = 384;
    opt.step = 1e-7;
    loss_check("quality_loss_desk",
               nn::gradient_check({{"enh", y.data(), gd.data()}}, [&] { return quality_loss(y, desk).loss; }, opt));
  }
  {
    EnhancerConfig cfg;
    cfg.blocks = 2;
    cfg.channels = 8;
    cfg.tail_init_scale = 1.0;
    Enhancer e = Enhancer::initialize(cfg, kSeed);
    const Image low = random_image(16, 16, 3, 24, 0.1, 0.5), ref = random_image(16, 16, 3, 25);
    Enhancer::Trace trace;
    const Image out = e.forward(low, &trace);
    Enhancer grads = e.zeros_like();
    e.backward(trace, joint_loss(ref, out, &tiny, {}, {}).grad, grads);
    std::vector<nn::GradCheckTarget> targets;
    auto ps = e.parameters();
    const auto gs = grads.parameters();
    for (std::size_t i = 0; i < ps.size(); ++i) targets.push_back({ps[i].name, ps[i].tensor->values(), gs[i].tensor->values()});
    nn::GradCheckOptions opt;
    opt.max_coordinates = 64;
    opt.step = 1e-7;
    loss_check("enhancer_joint", nn::gradient_check(targets, [&] {
                 return joint_loss(ref, e.forward(low, nullptr), &tiny, {}, {}).loss;
               }, opt));
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  o.detail << " worst layer error " << fmt("%.1e", worst_layer) << ", worst loss error " << fmt("%.1e", worst_loss);
  o.require(worst_layer < 1e-5, "layer gradients");
  o.require(worst_loss < 1e-4, "loss gradients");
  o.require(secs < 300.0, "runtime");
}

// 4
void fusion(Workspace& ws, Outcome& o) {
  Rng rng(kSeed);
  const std::array<double, 4> planted{0.3, -1.25, 2.5, 0.75};
  LabeledScoreSet set;
  for (int i = 0; i < 200; ++i) {
    const MetricTriple t{rng.uniform(0.3, 1.0), rng.uniform(0.2, 1.0), rng.uniform(0.0, 1.0)};
    set.rows.push_back({t, planted[0] + planted[1] * t.fsim + planted[2] * t.iwssim + planted[3] * t.deepsim});
  }
  const FusionModel fitted = fit_fusion(set);
  double coef_err = 0.0;
  for (int k = 0; k < 4; ++k) coef_err = std::max(coef_err, std::abs(fitted.lambda[static_cast<std::size_t>(k)] - planted[static_cast<std::size_t>(k)]));

  const Manifest all = read_manifest(ws.labelled(), ManifestRole::LabeledQuality);
  const auto scores = score_manifest(all, Backbone::initialize(BackboneProfile::desk(), kSeed));
  int violations = 0;
  double min_margin = 1e9;
  for (std::uint64_t split = 1; split <= 10; ++split) {
    BenchOptions opt;
    opt.seed = split;
    const auto report = run_bench(scores, opt);
    if (!report.optimality_holds) ++violations;
    for (const auto& row : report.metrics) {
      if (row.name != "fsim" && row.name != "iwssim_v" && row.name != "deepsim") continue;
      min_margin = std::min(min_margin, *report.fused.plcc_fit - std::abs(*row.plcc_fit));
    }
  }
  const double published = FusionModel::published_default().raw({1.0, 1.0, 1.0});
  o.detail << "planted coefficient error " << fmt("%.1e", coef_err) << ", 10 fit splits of " << scores.size()
           << " rows with " << violations << " optimality violations (min margin " << fmt("%.4f", min_margin)
           << "), published raw(1,1,1) = " << fmt("%.7f", published);
  o.require(coef_err <= 1e-9, "planted recovery");
  o.require(violations == 0, "fit-split optimality");
  o.require(std::abs(published - 0.7898) <= 1e-6, "published coefficients");
}

// 5
void nr_iqa(Workspace& ws, Outcome& o) {
  const auto start = std::chrono::steady_clock::now();
  ws.labelled();
  const Manifest train_m = read_manifest(ws.labelled_train, ManifestRole::LabeledQuality);
  const Manifest test_m = read_manifest(ws.labelled_test, ManifestRole::LabeledQuality);
  require_content_disjoint(train_m, test_m);
  std::set<double> grades;
  for (const auto& e : train_m.entries) grades.insert(*e.mos);
  const auto train = load_labeled(train_m);
  const auto test = load_labeled(test_m);

  QualityModel model = QualityModel::initialize(BackboneProfile::desk(), {}, kSeed);
  const auto before = model.backbone.checksum();
  IqaTrainConfig cfg;
  cfg.seed = kSeed;
  const int epochs = 100;
  const auto result = train_iqa(model, train, cfg, epochs);
  std::vector<double> pred, label;
  for (const auto& item : test) {
    pred.push_back(model.predict(item.image).q_o);
    label.push_back(item.label);
  }
  const double s = srcc(pred, label);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  o.detail << train.size() + test.size() << " images (" << train.size() << " train, " << test.size()
           << " held out, content-disjoint), " << grades.size() << " grades, " << epochs
           << " epochs, held-out SRCC " << fmt("%.4f", s) << ", final loss " << fmt("%.4f", result.epoch_loss.back())
           << ", " << fmt("%.0f", secs) << " s";
  o.require(train.size() + test.size() >= 300, "dataset size");
  o.require(grades.size() == 5, "grade count");
  o.require(s >= 0.75, "held-out SRCC");
  o.require(model.backbone.checksum() == before, "backbone checksum");
  o.require(secs < 900.0, "runtime");
}

// 6
void loop_run(Workspace& ws, Outcome& o) {
  const auto start = std::chrono::steady_clock::now();
  ws.labelled();
  RunConfig cfg;
  cfg.seed = kSeed;
  cfg.out = ws.root / "loop";
  cfg.lol_manifest = ws.paired();
  cfg.quality_manifest = ws.labelled_train;
  cfg.loop.max_loops = 3;
  cfg.iqa.crop = 64;
  cfg.enhancer_train.batch_size = 8;
  cfg.enhancer_train.pretrain_epochs = 50;
  cfg.enhancer_train.finetune_epochs = 15;
  cfg.enhancer_train.crop = 64;
  cfg.joint.lambda_quality = 0.3;

  // Fusion fitted on the labelled training split, scored with the loop's metric backbone.
  {
    const auto scores = score_manifest(read_manifest(ws.labelled_train, ManifestRole::LabeledQuality),
                                       Backbone::initialize(profile_by_name(cfg.backbone_profile), cfg.seed));
    LabeledScoreSet set;
    for (const auto& s : scores)
      set.rows.push_back({{s.values.at(MetricId::Fsim), s.values.at(MetricId::IwSsimV), s.values.at(MetricId::DeepSim)}, s.mos});
    fs::create_directories(ws.root / "fusion");
    cfg.fusion_model = ws.root / "fusion" / "fusion_model.txt";
    save_fusion(fit_fusion_with_fallback(set), cfg.fusion_model);
  }
  fs::remove_all(cfg.out);
  const LoopInputs inputs = load_loop_inputs(cfg);
  const LoopState state = run_loop(cfg, inputs);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  std::vector<std::string> expected;
  for (const auto& s : initial_stages()) expected.push_back("loop0:" + s);
  for (int k = 1; k <= 3; ++k)
    for (const auto& s : loop_stages()) expected.push_back("loop" + std::to_string(k) + ":" + s);
  bool empty = state.d_end_after_clear.size() == 4;
  for (auto n : state.d_end_after_clear) empty = empty && n == 0;
  bool decreasing = true;
  for (const auto& c : state.curves) {
    if (c.loop == 0) continue;
    const bool enh = !c.enhancer.loss.empty() && c.enhancer.loss.back() < c.enhancer.loss.front();
    const bool iqa = !c.iqa.empty() && c.iqa.back() < c.iqa.front();
    o.detail << "loop " << c.loop << " enhancer " << fmt("%.4f", c.enhancer.loss.front()) << "->"
             << fmt("%.4f", c.enhancer.loss.back()) << ", iqa " << fmt("%.4f", c.iqa.front()) << "->"
             << fmt("%.4f", c.iqa.back()) << "; ";
    decreasing = decreasing && enh && iqa;
  }
  const double m0 = state.report.front().mean_pseudo_mos, m3 = state.report.back().mean_pseudo_mos;
  o.detail << inputs.lol.size() << " pairs, pseudo-MOS loop0 " << fmt("%.4f", m0) << " loop3 " << fmt("%.4f", m3) << ", "
           << fmt("%.0f", secs) << " s";
  o.require(inputs.lol.size() >= 32, "pair count");
  o.require(state.trace == expected, "stage trace");
  o.require(empty, "enhanced set emptiness");
  o.require(state.report.size() == 4 && m3 >= m0 - 0.01, "pseudo-MOS vs baseline");
  o.require(decreasing, "fine-tune losses");
  o.require(secs < 1800.0, "runtime");
}

// 7
void determinism(Workspace& ws, Outcome& o) {
  const fs::path dir = ws.root / "determinism";
  fs::remove_all(dir);
  fs::create_directories(dir);
  write_synth_pairs(dir / "pairs", {8, 32, 3});
  write_synth_labelled(dir / "lab", {6, 32, 3, 0.2});
  std::ofstream(dir / "run.ini") << "[run]\nseed = 7\n[data]\nlol_manifest = pairs/pairs.tsv\nquality_manifest = lab/train.tsv\n"
                                    "[loop]\nmax_loops = 2\n"
                                    "[enhancer]\nchannels = 8\nblocks = 2\n"
                                    "[enhancer_train]\npretrain_epochs = 4\nfinetune_epochs = 2\nbatch_size = 4\ncrop = 32\n"
                                    "[iqa]\nepochs = 4\nfinetune_epochs = 3\nbatch_size = 8\ncrop = 32\n";
  auto run = [&](const std::string& out, std::vector<std::string> extra, const char* threads) {
    setenv("LUMINA_THREADS", threads, 1);
    std::vector<std::string> args{"run-loop", "--config", (dir / "run.ini").string(), "--out", (dir / out).string()};
    args.insert(args.end(), extra.begin(), extra.end());
    std::ostringstream sink, err;
    const int code = run_cli(args, sink, err);
    unsetenv("LUMINA_THREADS");
    if (code != kExitOk) o.detail << " run " << out << " exited " << code << ": " << err.str();
    return code;
  };
  bool ok = run("a", {}, "1") == 0;
  ok = run("b", {}, "4") == 0 && ok;
  ok = run("c", {"--stop-after", "0"}, "2") == 0 && ok;
  const auto partial = read_bytes(dir / "c" / "loop_report.tsv");
  ok = run("c", {"--resume"}, "3") == 0 && ok;
  const auto a = read_bytes(dir / "a" / "loop_report.tsv");
  const bool same = !a.empty() && a == read_bytes(dir / "b" / "loop_report.tsv");
  const bool resumed = a == read_bytes(dir / "c" / "loop_report.tsv");
  const bool weights = read_bytes(dir / "a" / "loop_2" / "enhancer.llw") == read_bytes(dir / "c" / "loop_2" / "enhancer.llw") &&
                       read_bytes(dir / "a" / "loop_2" / "quality_head.llw") == read_bytes(dir / "b" / "loop_2" / "quality_head.llw");
  o.detail << "reduced config (8 pairs 32x32, 2 loops), repeat " << (same ? "identical" : "differs") << ", resume "
           << (resumed ? "identical" : "differs") << ", checkpoints " << (weights ? "identical" : "differ");
  o.require(ok, "runs completed");
  o.require(std::count(partial.begin(), partial.end(), '\n') == 2, "stop after loop 0");
  o.require(same, "repeat run");
  o.require(resumed, "resume");
  o.require(weights, "checkpoint bytes");
}

}  // namespace

int main(int argc, char** argv) {
  fs::path work = "acceptance_work";
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--work" && i + 1 < argc) {
      work = argv[++i];
    } else if (a == "--only" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      std::string item;
      while (std::getline(ss, item, ',')) only.insert(std::stoi(item));
    } else {
      std::cerr << "usage: lumina_acceptance [--work DIR] [--only 1,2,...]\n";
      return 2;
    }
  }
  fs::create_directories(work);
  Workspace ws;
  ws.root = fs::absolute(work);

  const std::vector<std::pair<std::string, std::function<void(Workspace&, Outcome&)>>> criteria{
      {"decomposition identity", decomposition},
      {"metric axioms", metric_axioms},
      {"gradient suite", gradients},
      {"fusion recovery and optimality", fusion},
      {"no-reference quality learning", nr_iqa},
      {"three-loop run", loop_run},
      {"determinism and resume", determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int n = static_cast<int>(i) + 1;
    if (!only.empty() && !only.count(n)) continue;
    Outcome o;
    const auto start = std::chrono::steady_clock::now();
    try {
      criteria[i].second(ws, o);
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << " [exception: " << e.what() << "]";
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << n << " " << criteria[i].first << ": " << o.detail.str() << " ("
              << fmt("%.1f", secs) << " s)" << std::endl;
    if (!o.pass) ++failed;
  }
  return failed == 0 ? 0 : 1;
}
