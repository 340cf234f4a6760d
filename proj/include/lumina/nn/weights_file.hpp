#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "lumina/nn/tensor.hpp"

namespace lumina::nn {

/// One record of an "LLW1" weights file.
///
/// Layout (all integers little-endian u32):
///   "LLW1" | entry count | per entry: name length, UTF-8 name, rank, dims..., f32 payload
struct WeightsEntry {
  std::string name;
  std::vector<int> shape;
  std::vector<float> values;
};

std::vector<WeightsEntry> read_weights_file(const std::filesystem::path& path);

/// Writes atomically (temporary file, then rename).
void write_weights_file(const std::filesystem::path& path, const ConstParameterList& params);

/// Loads a file into a model's parameters. The file must contain exactly the
/// model's names with matching shapes; throws ShapeError otherwise.
void load_weights_into(const std::filesystem::path& path, const ParameterList& params);

/// Writes `contents` to `path` via a temporary sibling and rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

}  // namespace lumina::nn
