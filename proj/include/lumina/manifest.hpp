#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "lumina/enhancer.hpp"
#include "lumina/quality_model.hpp"

namespace lumina {

enum class ManifestRole { PairedLol, LabeledQuality, EnhancedPool };

struct ManifestEntry {
  /// Absolute (or caller-relative) paths after reading.
  std::filesystem::path image;
  std::filesystem::path reference;
  std::optional<double> mos;
  std::string content_id;
};

/// Tab-separated list: image, reference, optional MOS, optional content id.
/// Relative paths resolve against the manifest's directory; '#' starts a comment
/// line; an empty or "-" reference means none.
struct Manifest {
  ManifestRole role = ManifestRole::PairedLol;
  std::vector<ManifestEntry> entries;
};

/// Reads and validates for `role`: paired and enhanced-pool entries need a
/// reference, labelled entries need a MOS in [0, 1]. A missing content id
/// defaults to the reference file stem (or the image stem).
Manifest read_manifest(const std::filesystem::path& path, ManifestRole role);

/// Paths are written relative to the manifest's directory when possible.
void write_manifest(const std::filesystem::path& path, const Manifest& manifest);

/// Throws PreconditionError when the two manifests share a content id.
void require_content_disjoint(const Manifest& a, const Manifest& b);

/// Loads image/reference pairs and checks they are equally sized.
std::vector<PairedImage> load_pairs(const Manifest& manifest);
std::vector<LabeledImage> load_labeled(const Manifest& manifest);

}  // namespace lumina
