#pragma once

#include <cstdint>
#include <exception>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "lumina/config.hpp"
#include "lumina/enhancer.hpp"
#include "lumina/error.hpp"
#include "lumina/fusion.hpp"
#include "lumina/manifest.hpp"
#include "lumina/quality_model.hpp"

namespace lumina {

/// Enhanced image paired with its reference, ready for labelling.
struct EnhancedPair {
  Image enhanced;
  Image reference;
};

/// Metric triple and fused pseudo-MOS for every pair (parallel, order preserved).
std::vector<double> assign_pseudo_labels(const std::vector<EnhancedPair>& pairs, const FusionModel& fusion,
                                         const Backbone& backbone, const FsimConfig& fsim = {},
                                         std::vector<MetricTriple>* triples = nullptr);

/// File-based variant: computes labels for an enhanced-pool manifest and
/// returns it with the MOS column filled in.
Manifest assign_pseudo_labels(const Manifest& enhanced, const FusionModel& fusion, const Backbone& backbone,
                              const FsimConfig& fsim = {});

struct LoopReportRow {
  int loop = 0;
  double mean_pseudo_mos = 0.0;
  /// Mean fidelity loss of the enhanced set against its references.
  double fidelity_loss = 0.0;
  /// Mean |q_max - Q_o| of the enhanced set under this loop's quality model.
  double quality_loss = 0.0;
  /// Final-epoch regression loss of this loop's quality training.
  double iqa_loss = 0.0;
  std::uint64_t seed = 0;
};

struct LoopCheckpoint {
  int loop = 0;
  std::filesystem::path enhancer_dir;
  std::filesystem::path quality_dir;
};

struct PhaseCurves {
  int loop = 0;
  EnhanceCurve enhancer;
  std::vector<double> iqa;
};

struct LoopState {
  /// Number of completed loop bodies (0 after the initial phase only).
  int completed = -1;
  int max_loops = 0;
  std::vector<LoopReportRow> report;
  std::vector<LoopCheckpoint> checkpoints;
  /// Ordered stage log, entries "loop<k>:<stage>".
  std::vector<std::string> trace;
  /// Size of the enhanced set after every clear.
  std::vector<std::size_t> d_end_after_clear;
  /// Curves of the phases run in this invocation.
  std::vector<PhaseCurves> curves;
};

struct LoopInputs {
  std::vector<PairedImage> lol;
  /// File stems for the enhanced images, one per pair.
  std::vector<std::string> lol_names;
  /// Optional reference paths, written into each loop's labelled manifest.
  std::vector<std::filesystem::path> lol_reference_paths;
  std::vector<LabeledImage> quality;
  FusionModel fusion;
};

struct LoopOptions {
  /// Continue from the checkpoints and report already in the output directory.
  bool resume = false;
  /// Stop after this loop completes (-1: run to max_loops).
  int stop_after = -1;
  /// Called with each stage name before it runs.
  std::function<void(int loop, const std::string& stage)> on_stage;
};

/// Raised for any failure inside a loop stage; the message carries loop and stage.
class StageError : public Error {
 public:
  StageError(int loop, std::string stage, const std::string& what, std::exception_ptr cause = nullptr)
      : Error("loop " + std::to_string(loop) + ", stage " + stage + ": " + what),
        loop_(loop),
        stage_(std::move(stage)),
        cause_(std::move(cause)) {}
  int loop() const noexcept { return loop_; }
  const std::string& stage() const noexcept { return stage_; }
  /// The original exception, if any.
  std::exception_ptr cause() const noexcept { return cause_; }

 private:
  int loop_;
  std::string stage_;
  std::exception_ptr cause_;
};

/// Stage names of the initial phase and of each loop body, in execution order.
const std::vector<std::string>& initial_stages();
const std::vector<std::string>& loop_stages();

/// Runs the closed loop and writes under config.out: resolved_config.ini,
/// backbone.llw, loop_<k>/ checkpoints and enhanced sets, loop_report.tsv.
LoopState run_loop(const RunConfig& config, const LoopInputs& inputs, const LoopOptions& options = {});

/// Loads the inputs named by the config's manifests and fusion model path.
LoopInputs load_loop_inputs(const RunConfig& config);

/// Checkpoints of loop k; throws PreconditionError when k exceeds the completed loops.
LoopCheckpoint select_final(const LoopState& state, int k = 3);

std::string format_report(const std::vector<LoopReportRow>& rows);
std::vector<LoopReportRow> parse_report(const std::filesystem::path& path);

}  // namespace lumina
