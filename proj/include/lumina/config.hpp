#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "lumina/enhancer.hpp"
#include "lumina/losses.hpp"
#include "lumina/metrics.hpp"
#include "lumina/quality_model.hpp"

namespace lumina {

struct LoopConfig {
  int max_loops = 10;
  /// Loop whose checkpoints are reported as final.
  int final_loop = 3;
  /// Copies of each freshly labelled enhanced image in the quality training union.
  int end_repeat = 1;
};

/// Every tunable of a run, grouped as in the INI file.
struct RunConfig {
  std::uint64_t seed = 1;
  std::filesystem::path out = "run";

  std::filesystem::path lol_manifest;
  std::filesystem::path quality_manifest;

  LoopConfig loop;

  /// Empty: published default coefficients.
  std::filesystem::path fusion_model;

  std::string backbone_profile = "desk";
  /// Optional LLW1 file replacing the seeded backbone initialization.
  std::filesystem::path backbone_weights;

  HeadConfig head;
  IqaTrainConfig iqa;
  EnhancerConfig enhancer;
  EnhanceTrainConfig enhancer_train;
  FidelityConfig fidelity;
  JointLossConfig joint;
  FsimConfig fsim;
};

/// INI text: [section] headers, `key = value` lines, '#' or ';' comments.
/// Unknown sections or keys and malformed values throw ConfigError.
/// Relative paths are resolved against `base_dir`.
RunConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = {});
RunConfig load_config(const std::filesystem::path& path);

/// Fully resolved configuration in the same INI syntax.
std::string to_ini(const RunConfig& config);

}  // namespace lumina
