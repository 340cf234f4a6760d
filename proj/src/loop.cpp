#include "lumina/loop.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "lumina/error.hpp"
#include "lumina/image_io.hpp"
#include "lumina/losses.hpp"
#include "lumina/nn/weights_file.hpp"
#include "lumina/parallel.hpp"
#include "lumina/random.hpp"

namespace lumina {
namespace {

constexpr const char* kReportHeader = "loop\tmean_pseudo_mos\tfidelity_loss\tquality_loss\tiqa_loss\tseed";

std::filesystem::path loop_dir(const std::filesystem::path& out, int k) { return out / ("loop_" + std::to_string(k)); }

LoopCheckpoint checkpoint_of(const std::filesystem::path& out, int k) {
  return {k, loop_dir(out, k), loop_dir(out, k)};
}

template <class Fn>
auto run_stage(LoopState& state, const LoopOptions& options, int loop, const std::string& stage, Fn&& fn) {
  state.trace.push_back("loop" + std::to_string(loop) + ":" + stage);
  if (options.on_stage) options.on_stage(loop, stage);
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(loop, stage, e.what(), std::current_exception());
  }
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

const std::vector<std::string>& initial_stages() {
  static const std::vector<std::string> s{"pretrain_enhancer", "enhance", "assign_labels", "train_iqa", "clear_end"};
  return s;
}

const std::vector<std::string>& loop_stages() {
  static const std::vector<std::string> s{"finetune_enhancer", "enhance", "assign_labels", "finetune_iqa",
                                          "clear_end"};
  return s;
}

std::vector<double> assign_pseudo_labels(const std::vector<EnhancedPair>& pairs, const FusionModel& fusion,
                                         const Backbone& backbone, const FsimConfig& fsim,
                                         std::vector<MetricTriple>* triples) {
  std::vector<MetricTriple> t(pairs.size());
  parallel_for(pairs.size(), [&](std::size_t i) {
    if (pairs[i].reference.empty()) throw PreconditionError("pseudo-labelling: missing reference for item " + std::to_string(i));
    t[i] = metric_triple(pairs[i].reference, pairs[i].enhanced, backbone, fsim);
  });
  std::vector<double> labels(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) labels[i] = apply_fusion(fusion, t[i]);
  if (triples) *triples = std::move(t);
  return labels;
}

Manifest assign_pseudo_labels(const Manifest& enhanced, const FusionModel& fusion, const Backbone& backbone,
                              const FsimConfig& fsim) {
  std::vector<EnhancedPair> pairs(enhanced.entries.size());
  parallel_for(pairs.size(), [&](std::size_t i) {
    const auto& e = enhanced.entries[i];
    if (e.reference.empty()) throw PreconditionError("pseudo-labelling: missing reference for " + e.image.string());
    pairs[i] = {load_image(e.image), load_image(e.reference)};
  });
  const auto labels = assign_pseudo_labels(pairs, fusion, backbone, fsim);
  Manifest out = enhanced;
  out.role = ManifestRole::LabeledQuality;
  for (std::size_t i = 0; i < labels.size(); ++i) out.entries[i].mos = labels[i];
  return out;
}

std::string format_report(const std::vector<LoopReportRow>& rows) {
  std::ostringstream out;
  out << kReportHeader << "\n";
  for (const auto& r : rows) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%d\t%.9f\t%.9f\t%.9f\t%.9f\t%llu\n", r.loop, r.mean_pseudo_mos, r.fidelity_loss,
                  r.quality_loss, r.iqa_loss, static_cast<unsigned long long>(r.seed));
    out << buf;
  }
  return out.str();
}

std::vector<LoopReportRow> parse_report(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open loop report " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kReportHeader) throw ConfigError(path.string() + ": unexpected report header");
  std::vector<LoopReportRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    LoopReportRow r;
    unsigned long long seed = 0;
    if (!(ss >> r.loop >> r.mean_pseudo_mos >> r.fidelity_loss >> r.quality_loss >> r.iqa_loss >> seed)) {
      throw ConfigError(path.string() + ": malformed report row: " + line);
    }
    r.seed = seed;
    if (r.loop != static_cast<int>(rows.size())) throw ConfigError(path.string() + ": report rows are not consecutive");
    rows.push_back(r);
  }
  return rows;
}

LoopCheckpoint select_final(const LoopState& state, int k) {
  if (k < 0 || k > state.completed || static_cast<std::size_t>(k) >= state.checkpoints.size()) {
    throw PreconditionError("select_final: loop " + std::to_string(k) + " not completed (completed loops: " +
                            std::to_string(std::max(state.completed, 0)) + ")");
  }
  return state.checkpoints[static_cast<std::size_t>(k)];
}

LoopInputs load_loop_inputs(const RunConfig& config) {
  if (config.lol_manifest.empty()) throw ConfigError("data.lol_manifest is not set");
  LoopInputs in;
  const Manifest lol = read_manifest(config.lol_manifest, ManifestRole::PairedLol);
  in.lol = load_pairs(lol);
  std::set<std::string> used;
  for (std::size_t i = 0; i < lol.entries.size(); ++i) {
    std::string name = lol.entries[i].image.stem().string();
    if (!used.insert(name).second) {
      char buf[16];
      std::snprintf(buf, sizeof buf, "_%04zu", i);
      name += buf;
      used.insert(name);
    }
    in.lol_names.push_back(name);
    in.lol_reference_paths.push_back(lol.entries[i].reference);
  }
  if (!config.quality_manifest.empty()) {
    in.quality = load_labeled(read_manifest(config.quality_manifest, ManifestRole::LabeledQuality));
  }
  in.fusion = config.fusion_model.empty() ? FusionModel::published_default() : load_fusion(config.fusion_model);
  return in;
}

LoopState run_loop(const RunConfig& config, const LoopInputs& inputs, const LoopOptions& options) {
  if (inputs.lol.empty()) throw PreconditionError("run_loop: the paired low-light set is empty");
  if (inputs.lol_names.size() != inputs.lol.size()) throw ShapeError("run_loop: one name per low-light pair required");
  const std::filesystem::path out = config.out;
  std::filesystem::create_directories(out);
  nn::write_file_atomic(out / "resolved_config.ini", to_ini(config));

  LoopState state;
  state.max_loops = config.loop.max_loops;
  const BackboneProfile profile = profile_by_name(config.backbone_profile);

  Enhancer enhancer;
  QualityModel quality;
  int start = 0;
  const auto report_path = out / "loop_report.tsv";
  if (options.resume && std::filesystem::exists(report_path)) {
    state.report = parse_report(report_path);
  }
  if (!state.report.empty()) {
    const int last = state.report.back().loop;
    enhancer = Enhancer::load(loop_dir(out, last));
    quality = QualityModel::load(loop_dir(out, last));
    for (int k = 0; k <= last; ++k) state.checkpoints.push_back(checkpoint_of(out, k));
    state.completed = last;
    start = last + 1;
  } else {
    enhancer = Enhancer::initialize(config.enhancer, derive_seed(config.seed, "enhancer_init"));
    quality = QualityModel::initialize(profile, config.head, config.seed);
    if (!config.backbone_weights.empty()) nn::load_weights_into(config.backbone_weights, quality.backbone.parameters());
    quality.backbone.save(out / "backbone.llw");
  }

  for (int t = start; t <= config.loop.max_loops; ++t) {
    if (options.stop_after >= 0 && t > options.stop_after) break;
    const std::uint64_t loop_seed = derive_seed(config.seed, "loop" + std::to_string(t));
    const auto dir = loop_dir(out, t);
    std::filesystem::create_directories(dir / "enhanced");
    PhaseCurves curves;
    curves.loop = t;

    EnhanceTrainConfig etc = config.enhancer_train;
    etc.seed = loop_seed;
    if (t == 0) {
      curves.enhancer = run_stage(state, options, t, "pretrain_enhancer", [&] {
        return pretrain_enhancer(enhancer, inputs.lol, etc, etc.pretrain_epochs, etc.learning_rate);
      });
    } else {
      curves.enhancer = run_stage(state, options, t, "finetune_enhancer", [&] {
        return finetune_enhancer(enhancer, inputs.lol, &quality, config.fidelity, config.joint, etc,
                                 etc.finetune_epochs, etc.learning_rate * etc.finetune_lr_scale);
      });
    }

    std::vector<EnhancedPair> d_end = run_stage(state, options, t, "enhance", [&] {
      std::vector<EnhancedPair> pairs(inputs.lol.size());
      parallel_for(pairs.size(), [&](std::size_t i) {
        pairs[i] = {quantize8(enhancer.enhance(inputs.lol[i].low)), inputs.lol[i].reference};
        save_image(pairs[i].enhanced, dir / "enhanced" / (inputs.lol_names[i] + ".ppm"));
      });
      return pairs;
    });

    std::vector<double> labels = run_stage(state, options, t, "assign_labels", [&] {
      auto l = assign_pseudo_labels(d_end, inputs.fusion, quality.backbone, config.fsim);
      Manifest m;
      m.role = ManifestRole::LabeledQuality;
      for (std::size_t i = 0; i < l.size(); ++i) {
        const auto ref = i < inputs.lol_reference_paths.size() ? inputs.lol_reference_paths[i] : std::filesystem::path();
        m.entries.push_back({dir / "enhanced" / (inputs.lol_names[i] + ".ppm"), ref, l[i], inputs.lol_names[i]});
      }
      write_manifest(dir / "d_end.tsv", m);
      return l;
    });

    IqaTrainResult iqa = run_stage(state, options, t, t == 0 ? "train_iqa" : "finetune_iqa", [&] {
      std::vector<LabeledImage> train = inputs.quality;
      for (int r = 0; r < config.loop.end_repeat; ++r)
        for (std::size_t i = 0; i < d_end.size(); ++i) train.push_back({d_end[i].enhanced, labels[i]});
      IqaTrainConfig ic = config.iqa;
      ic.seed = loop_seed;
      return train_iqa(quality, train, ic, t == 0 ? ic.epochs : ic.finetune_epochs);
    });
    curves.iqa = iqa.epoch_loss;

    LoopReportRow row;
    row.loop = t;
    row.seed = config.seed;
    row.mean_pseudo_mos = mean_of(labels);
    row.iqa_loss = iqa.epoch_loss.empty() ? 0.0 : iqa.epoch_loss.back();
    {
      std::vector<double> fid(d_end.size()), ql(d_end.size());
      parallel_for(d_end.size(), [&](std::size_t i) {
        fid[i] = fidelity_loss(d_end[i].reference, d_end[i].enhanced, config.fidelity).loss;
        ql[i] = std::abs(config.joint.q_max - quality.predict(d_end[i].enhanced).q_o);
      });
      row.fidelity_loss = mean_of(fid);
      row.quality_loss = mean_of(ql);
    }

    run_stage(state, options, t, "clear_end", [&] {
      d_end.clear();
      labels.clear();
      return 0;
    });
    state.d_end_after_clear.push_back(d_end.size());
    if (!d_end.empty()) throw StageError(t, "clear_end", "enhanced set not empty after clearing");

    enhancer.save(dir);
    quality.save(dir, "../backbone.llw", false);
    state.checkpoints.push_back(checkpoint_of(out, t));
    state.report.push_back(row);
    nn::write_file_atomic(report_path, format_report(state.report));
    state.curves.push_back(std::move(curves));
    state.completed = t;
  }
  return state;
}

}  // namespace lumina
