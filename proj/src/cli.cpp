#include "lumina/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>

#include "lumina/bench.hpp"
#include "lumina/config.hpp"
#include "lumina/error.hpp"
#include "lumina/fusion.hpp"
#include "lumina/image_io.hpp"
#include "lumina/loop.hpp"
#include "lumina/manifest.hpp"
#include "lumina/metrics.hpp"
#include "lumina/nn/weights_file.hpp"
#include "lumina/parallel.hpp"
#include "lumina/synth.hpp"

namespace lumina {
namespace {

namespace fs = std::filesystem;

std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string full(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9f", v);
  return buf;
}

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

RunConfig resolve(const Globals& g) {
  RunConfig cfg = g.config.empty() ? RunConfig{} : load_config(g.config);
  if (g.seed) cfg.seed = *g.seed;
  if (!g.out.empty()) cfg.out = g.out;
  return cfg;
}

void write_resolved(const RunConfig& cfg) {
  fs::create_directories(cfg.out);
  nn::write_file_atomic(cfg.out / "resolved_config.ini", to_ini(cfg));
}

Backbone metric_backbone(const RunConfig& cfg) {
  const BackboneProfile profile = profile_by_name(cfg.backbone_profile);
  if (!cfg.backbone_weights.empty()) return Backbone::load(profile, cfg.backbone_weights);
  return Backbone::initialize(profile, cfg.seed);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

void write_curve(const fs::path& path, const std::string& header, const std::vector<std::vector<double>>& cols) {
  std::ostringstream out;
  out << "epoch\t" << header << "\n";
  const std::size_t n = cols.empty() ? 0 : cols.front().size();
  for (std::size_t i = 0; i < n; ++i) {
    out << i + 1;
    for (const auto& c : cols) out << '\t' << (i < c.size() ? full(c[i]) : "nan");
    out << '\n';
  }
  nn::write_file_atomic(path, out.str());
}

void correlation_lines(std::ostream& out, const std::vector<double>& pred, const std::vector<double>& label) {
  out << "n\t" << pred.size() << "\n";
  out << "plcc\t" << fixed6(plcc(pred, label)) << "\n";
  out << "srcc\t" << fixed6(srcc(pred, label)) << "\n";
}

// score
struct ScoreArgs {
  std::string ref, test, metrics = "fsim,iwssim_v,deepsim";
};

int cmd_score(const Globals& g, const ScoreArgs& a, std::ostream& out) {
  const RunConfig cfg = resolve(g);
  std::vector<MetricId> ids;
  for (const auto& name : split_list(a.metrics)) {
    const auto id = parse_metric(name);
    if (!id) throw ConfigError("unknown metric '" + name + "'");
    ids.push_back(*id);
  }
  if (ids.empty()) throw ConfigError("no metrics requested");
  const Image ref = load_image(a.ref);
  const Image test = load_image(a.test);
  std::optional<Backbone> backbone;
  if (std::find(ids.begin(), ids.end(), MetricId::DeepSim) != ids.end()) backbone = metric_backbone(cfg);
  for (MetricId id : ids) {
    const double v = id == MetricId::Fsim ? fsim(ref, test, cfg.fsim)
                                          : compute_metric(id, ref, test, backbone ? &*backbone : nullptr).value;
    out << metric_name(id) << '\t' << fixed6(v) << "\n";
  }
  return kExitOk;
}

// synth, synth-labelled
struct SynthArgs {
  int count = 32, size = 64, contents = 60;
  double test_fraction = 0.2;
};

int cmd_synth(const Globals& g, const SynthArgs& a, bool labelled, std::ostream& out) {
  const RunConfig cfg = resolve(g);
  fs::path manifest;
  if (labelled) {
    manifest = write_synth_labelled(cfg.out, {a.contents, a.size, cfg.seed, a.test_fraction});
  } else {
    manifest = write_synth_pairs(cfg.out, {a.count, a.size, cfg.seed});
  }
  write_resolved(cfg);
  out << "manifest\t" << manifest.string() << "\n";
  return kExitOk;
}

// fit-fusion
struct FitArgs {
  std::string manifest;
  double ridge = 0.0;
};

int cmd_fit_fusion(const Globals& g, const FitArgs& a, std::ostream& out) {
  const RunConfig cfg = resolve(g);
  const Manifest m = read_manifest(a.manifest, ManifestRole::LabeledQuality);
  const Backbone backbone = metric_backbone(cfg);
  std::vector<MetricTriple> triples(m.entries.size());
  parallel_for(triples.size(), [&](std::size_t i) {
    const auto& e = m.entries[i];
    if (e.reference.empty()) throw PreconditionError("fit-fusion: entry without reference: " + e.image.string());
    triples[i] = metric_triple(load_image(e.reference), load_image(e.image), backbone, cfg.fsim);
  });
  LabeledScoreSet set;
  set.provenance = "fit on " + fs::path(a.manifest).filename().string() + " (" + std::to_string(m.entries.size()) + " rows)";
  for (std::size_t i = 0; i < triples.size(); ++i) set.rows.push_back({triples[i], *m.entries[i].mos});
  FusionModel model = fit_fusion_with_fallback(set, a.ridge);
  model.provenance = set.provenance;

  write_resolved(cfg);
  std::ostringstream scores;
  scores << "image\tfsim\tiwssim_v\tdeepsim\tmos\tfused\n";
  std::vector<double> fused, mos;
  for (std::size_t i = 0; i < triples.size(); ++i) {
    const auto& t = triples[i];
    fused.push_back(model.raw(t));
    mos.push_back(set.rows[i].mos);
    scores << m.entries[i].image.filename().string() << '\t' << full(t.fsim) << '\t' << full(t.iwssim) << '\t'
           << full(t.deepsim) << '\t' << full(mos.back()) << '\t' << full(apply_fusion(model, t)) << "\n";
  }
  nn::write_file_atomic(cfg.out / "fusion_scores.tsv", scores.str());
  save_fusion(model, cfg.out / "fusion_model.txt");

  for (int k = 0; k < 4; ++k) out << "lambda" << k + 1 << '\t' << full(model.lambda[static_cast<std::size_t>(k)]) << "\n";
  correlation_lines(out, fused, mos);
  out << "model\t" << (cfg.out / "fusion_model.txt").string() << "\n";
  return kExitOk;
}

// train-iqa
struct TrainIqaArgs {
  std::string manifest, test_manifest;
  int epochs = -1;
};

int cmd_train_iqa(const Globals& g, const TrainIqaArgs& a, std::ostream& out) {
  const RunConfig cfg = resolve(g);
  const fs::path manifest = a.manifest.empty() ? cfg.quality_manifest : fs::path(a.manifest);
  if (manifest.empty()) throw ConfigError("train-iqa: no training manifest (--manifest or data.quality_manifest)");
  const Manifest train_m = read_manifest(manifest, ManifestRole::LabeledQuality);
  std::optional<Manifest> test_m;
  if (!a.test_manifest.empty()) {
    test_m = read_manifest(a.test_manifest, ManifestRole::LabeledQuality);
    require_content_disjoint(train_m, *test_m);
  }
  const auto train = load_labeled(train_m);

  QualityModel model = QualityModel::initialize(profile_by_name(cfg.backbone_profile), cfg.head, cfg.seed);
  if (!cfg.backbone_weights.empty()) nn::load_weights_into(cfg.backbone_weights, model.backbone.parameters());
  const std::uint64_t before = model.backbone.checksum();
  IqaTrainConfig ic = cfg.iqa;
  ic.seed = cfg.seed;
  const auto result = train_iqa(model, train, ic, a.epochs >= 0 ? a.epochs : ic.epochs);
  if (model.backbone.checksum() != before) throw Error("train-iqa: backbone weights changed during training");

  write_resolved(cfg);
  model.save(cfg.out);
  write_curve(cfg.out / "iqa_curve.tsv", "loss", {result.epoch_loss});
  out << "epochs\t" << result.epoch_loss.size() << "\n";
  if (!result.epoch_loss.empty()) out << "final_loss\t" << fixed6(result.epoch_loss.back()) << "\n";
  if (test_m) {
    const auto test = load_labeled(*test_m);
    std::vector<double> pred(test.size()), label(test.size());
    parallel_for(test.size(), [&](std::size_t i) {
      pred[i] = model.predict(test[i].image).q_o;
      label[i] = test[i].label;
    });
    correlation_lines(out, pred, label);
  }
  return kExitOk;
}

// train-enhancer
struct TrainEnhancerArgs {
  std::string manifest, quality_model;
  int epochs = -1, finetune_epochs = 0;
};

int cmd_train_enhancer(const Globals& g, const TrainEnhancerArgs& a, std::ostream& out) {
  const RunConfig cfg = resolve(g);
  const fs::path manifest = a.manifest.empty() ? cfg.lol_manifest : fs::path(a.manifest);
  if (manifest.empty()) throw ConfigError("train-enhancer: no paired manifest (--manifest or data.lol_manifest)");
  const auto pairs = load_pairs(read_manifest(manifest, ManifestRole::PairedLol));
  std::optional<QualityModel> quality;
  if (a.finetune_epochs > 0 && cfg.joint.lambda_quality > 0.0) {
    if (a.quality_model.empty()) throw ConfigError("train-enhancer: fine-tuning needs --quality-model");
    quality = QualityModel::load(a.quality_model);
  }

  Enhancer model = Enhancer::initialize(cfg.enhancer, derive_seed(cfg.seed, "enhancer_init"));
  EnhanceTrainConfig ec = cfg.enhancer_train;
  ec.seed = cfg.seed;
  const auto pre = pretrain_enhancer(model, pairs, ec, a.epochs >= 0 ? a.epochs : ec.pretrain_epochs, ec.learning_rate);
  write_resolved(cfg);
  write_curve(cfg.out / "pretrain_curve.tsv", "loss", {pre.loss});
  if (!pre.loss.empty()) out << "pretrain_final_loss\t" << fixed6(pre.loss.back()) << "\n";
  if (a.finetune_epochs > 0) {
    const auto ft = finetune_enhancer(model, pairs, quality ? &*quality : nullptr, cfg.fidelity, cfg.joint, ec,
                                      a.finetune_epochs, ec.learning_rate * ec.finetune_lr_scale);
    write_curve(cfg.out / "finetune_curve.tsv", "loss\tfidelity\tquality", {ft.loss, ft.fidelity, ft.quality});
    if (!ft.loss.empty()) out << "finetune_final_loss\t" << fixed6(ft.loss.back()) << "\n";
  }
  model.save(cfg.out);
  out << "model\t" << cfg.out.string() << "\n";
  return kExitOk;
}

// run-loop
struct RunLoopArgs {
  int loops = -1, stop_after = -1;
  bool resume = false;
};

int cmd_run_loop(const Globals& g, const RunLoopArgs& a, std::ostream& out) {
  RunConfig cfg = resolve(g);
  if (a.loops >= 0) cfg.loop.max_loops = a.loops;
  const LoopInputs inputs = load_loop_inputs(cfg);
  LoopOptions options;
  options.resume = a.resume;
  options.stop_after = a.stop_after;
  const LoopState state = run_loop(cfg, inputs, options);
  for (const auto& c : state.curves) {
    const fs::path dir = cfg.out / ("loop_" + std::to_string(c.loop));
    write_curve(dir / "enhancer_curve.tsv", "loss\tfidelity\tquality", {c.enhancer.loss, c.enhancer.fidelity, c.enhancer.quality});
    write_curve(dir / "iqa_curve.tsv", "loss", {c.iqa});
  }
  out << format_report(state.report);
  if (state.completed >= cfg.loop.final_loop) {
    out << "final\t" << select_final(state, cfg.loop.final_loop).enhancer_dir.string() << "\n";
  }
  return kExitOk;
}

// eval
struct EvalArgs {
  std::string model, manifest, predictions, fusion;
};

std::vector<std::pair<double, double>> read_predictions(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open predictions " + path.string());
  std::vector<std::pair<double, double>> rows;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    double p = 0.0, l = 0.0;
    if (!(ss >> p >> l)) {
      if (rows.empty() && lineno == 1) continue;  // header
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": expected '<prediction>\\t<label>'");
    }
    rows.emplace_back(p, l);
  }
  return rows;
}

int cmd_eval(const Globals& g, const EvalArgs& a, std::ostream& out) {
  const RunConfig cfg = resolve(g);
  if (!a.predictions.empty()) {
    const auto rows = read_predictions(a.predictions);
    std::vector<double> p, l;
    for (const auto& [x, y] : rows) {
      p.push_back(x);
      l.push_back(y);
    }
    correlation_lines(out, p, l);
    return kExitOk;
  }
  if (a.manifest.empty()) throw ConfigError("eval: --manifest or --predictions is required");
  if (!a.fusion.empty()) {
    const Manifest m = read_manifest(a.manifest, ManifestRole::EnhancedPool);
    const FusionModel fusion = load_fusion(a.fusion);
    const Backbone backbone = a.model.empty() ? metric_backbone(cfg) : QualityModel::load(a.model).backbone;
    const Manifest labelled = assign_pseudo_labels(m, fusion, backbone, cfg.fsim);
    double sum = 0.0;
    for (const auto& e : labelled.entries) sum += *e.mos;
    out << "n\t" << labelled.entries.size() << "\n";
    out << "mean_pseudo_mos\t" << fixed6(labelled.entries.empty() ? 0.0 : sum / static_cast<double>(labelled.entries.size()))
        << "\n";
    return kExitOk;
  }
  if (a.model.empty()) throw ConfigError("eval: --model or --fusion is required with --manifest");
  const QualityModel model = QualityModel::load(a.model);
  const auto data = load_labeled(read_manifest(a.manifest, ManifestRole::LabeledQuality));
  std::vector<double> pred(data.size()), label(data.size());
  parallel_for(data.size(), [&](std::size_t i) {
    pred[i] = model.predict(data[i].image).q_o;
    label[i] = data[i].label;
  });
  correlation_lines(out, pred, label);
  return kExitOk;
}

// bench
struct BenchArgs {
  std::string manifest, dataset_id;
  double fit_fraction = 0.5, ridge = 0.0;
};

int cmd_bench(const Globals& g, const BenchArgs& a, std::ostream& out) {
  const RunConfig cfg = resolve(g);
  const Manifest m = read_manifest(a.manifest, ManifestRole::LabeledQuality);
  const auto scores = score_manifest(m, metric_backbone(cfg));
  BenchOptions opt;
  opt.fit_fraction = a.fit_fraction;
  opt.seed = cfg.seed;
  opt.ridge = a.ridge;
  opt.dataset_id = a.dataset_id.empty() ? fs::path(a.manifest).stem().string() : a.dataset_id;
  const std::string table = format_bench(run_bench(scores, opt));
  out << table;
  if (!g.out.empty()) {
    write_resolved(cfg);
    nn::write_file_atomic(cfg.out / "bench.tsv", table);
  }
  return kExitOk;
}

int exit_code_for(std::exception_ptr e, std::ostream& err) {
  try {
    std::rethrow_exception(e);
  } catch (const StageError& s) {
    err << "error: " << s.what() << "\n";
    if (s.cause()) {
      std::ostringstream sink;
      return exit_code_for(s.cause(), sink);
    }
    return kExitFailure;
  } catch (const IoError& x) {
    err << "error: " << x.what() << "\n";
    return kExitIo;
  } catch (const fs::filesystem_error& x) {
    err << "error: " << x.what() << "\n";
    return kExitIo;
  } catch (const PreconditionError& x) {
    err << "error: " << x.what() << "\n";
    return kExitPrecondition;
  } catch (const ShapeError& x) {
    err << "error: " << x.what() << "\n";
    return kExitPrecondition;
  } catch (const std::exception& x) {
    err << "error: " << x.what() << "\n";
    return kExitFailure;
  }
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"lumina: image quality metrics, quality-guided low-light enhancement and the training loop", "lumina"};
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  app.add_option("--config", g.config, "Configuration file (INI-style sections)");
  app.add_option("--seed", g.seed, "Seed overriding run.seed");
  app.add_option("--out", g.out, "Output directory overriding run.out");

  ScoreArgs score;
  auto* s_score = app.add_subcommand("score", "Full-reference scores of one image pair");
  s_score->add_option("--ref", score.ref, "Reference image")->required();
  s_score->add_option("--test", score.test, "Test image")->required();
  s_score->add_option("--metrics", score.metrics, "Comma-separated metric ids")->capture_default_str();

  SynthArgs synth;
  auto* s_synth = app.add_subcommand("synth", "Generate a seeded paired low-light dataset");
  s_synth->add_option("--count", synth.count, "Number of pairs")->check(CLI::PositiveNumber);
  s_synth->add_option("--size", synth.size, "Image side")->check(CLI::Range(8, 4096));
  auto* s_synth_l = app.add_subcommand("synth-labelled", "Generate a graded-distortion labelled dataset");
  s_synth_l->add_option("--contents", synth.contents, "Number of reference contents")->check(CLI::PositiveNumber);
  s_synth_l->add_option("--size", synth.size, "Image side")->check(CLI::Range(8, 4096));
  s_synth_l->add_option("--test-fraction", synth.test_fraction, "Held-out share of contents")->check(CLI::Range(0.0, 0.9));

  FitArgs fit;
  auto* s_fit = app.add_subcommand("fit-fusion", "Fit the metric fusion on a labelled manifest");
  s_fit->add_option("--manifest", fit.manifest, "Labelled manifest with references")->required();
  s_fit->add_option("--ridge", fit.ridge, "Ridge penalty")->check(CLI::NonNegativeNumber);

  TrainIqaArgs tiqa;
  auto* s_tiqa = app.add_subcommand("train-iqa", "Train the no-reference quality head");
  s_tiqa->add_option("--manifest", tiqa.manifest, "Labelled training manifest");
  s_tiqa->add_option("--test-manifest", tiqa.test_manifest, "Held-out labelled manifest");
  s_tiqa->add_option("--epochs", tiqa.epochs, "Epoch override")->check(CLI::NonNegativeNumber);

  TrainEnhancerArgs tenh;
  auto* s_tenh = app.add_subcommand("train-enhancer", "Pretrain (and optionally fine-tune) the enhancer");
  s_tenh->add_option("--manifest", tenh.manifest, "Paired low-light manifest");
  s_tenh->add_option("--epochs", tenh.epochs, "Pretraining epoch override")->check(CLI::NonNegativeNumber);
  s_tenh->add_option("--finetune-epochs", tenh.finetune_epochs, "Joint-loss epochs after pretraining")
      ->check(CLI::NonNegativeNumber);
  s_tenh->add_option("--quality-model", tenh.quality_model, "Quality model directory for fine-tuning");

  RunLoopArgs loop;
  auto* s_loop = app.add_subcommand("run-loop", "Run the enhancement / pseudo-labelling loop");
  s_loop->add_option("--loops", loop.loops, "Override loop.max_loops")->check(CLI::NonNegativeNumber);
  s_loop->add_flag("--resume", loop.resume, "Continue from the checkpoints in the output directory");
  s_loop->add_option("--stop-after", loop.stop_after, "Stop after this loop")->check(CLI::NonNegativeNumber);

  EvalArgs ev;
  auto* s_eval = app.add_subcommand("eval", "Correlations of a quality model, or mean pseudo-MOS of an enhanced set");
  s_eval->add_option("--model", ev.model, "Quality model directory");
  s_eval->add_option("--manifest", ev.manifest, "Labelled manifest, or enhanced-pool manifest with --fusion");
  s_eval->add_option("--predictions", ev.predictions, "TSV of prediction and label columns");
  s_eval->add_option("--fusion", ev.fusion, "Fusion model file: report mean pseudo-MOS");

  BenchArgs bench;
  auto* s_bench = app.add_subcommand("bench", "PLCC/SRCC table of every metric and the fused model");
  s_bench->add_option("--manifest", bench.manifest, "Labelled manifest with references")->required();
  s_bench->add_option("--fit-fraction", bench.fit_fraction, "Share of contents used for fitting")
      ->check(CLI::Range(0.05, 0.95));
  s_bench->add_option("--ridge", bench.ridge, "Ridge penalty")->check(CLI::NonNegativeNumber);
  s_bench->add_option("--dataset-id", bench.dataset_id, "Name shown in the report");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    std::ostringstream o, er;
    const int code = app.exit(e, o, er);
    out << o.str();
    err << er.str();
    return code == 0 ? kExitOk : kExitFailure;
  }

  try {
    if (*s_score) return cmd_score(g, score, out);
    if (*s_synth) return cmd_synth(g, synth, false, out);
    if (*s_synth_l) return cmd_synth(g, synth, true, out);
    if (*s_fit) return cmd_fit_fusion(g, fit, out);
    if (*s_tiqa) return cmd_train_iqa(g, tiqa, out);
    if (*s_tenh) return cmd_train_enhancer(g, tenh, out);
    if (*s_loop) return cmd_run_loop(g, loop, out);
    if (*s_eval) return cmd_eval(g, ev, out);
    if (*s_bench) return cmd_bench(g, bench, out);
  } catch (...) {
    return exit_code_for(std::current_exception(), err);
  }
  return kExitFailure;
}

}  // namespace lumina
