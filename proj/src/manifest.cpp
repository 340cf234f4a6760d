#include "lumina/manifest.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "lumina/error.hpp"
#include "lumina/image_io.hpp"
#include "lumina/nn/weights_file.hpp"

namespace lumina {
namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    out.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return out;
}

std::string relative_to(const std::filesystem::path& p, const std::filesystem::path& base) {
  if (p.empty()) return "-";
  const auto rel = std::filesystem::absolute(p).lexically_normal().lexically_relative(
      std::filesystem::absolute(base).lexically_normal());
  return rel.empty() ? p.string() : rel.generic_string();
}

}  // namespace

Manifest read_manifest(const std::filesystem::path& path, ManifestRole role) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  const std::filesystem::path base = path.parent_path();
  Manifest m;
  m.role = role;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto fields = split_tabs(line);
    const std::string where = path.string() + ":" + std::to_string(lineno);
    if (fields.size() > 4) throw ConfigError(where + ": too many fields");
    ManifestEntry e;
    if (fields[0].empty()) throw ConfigError(where + ": empty image path");
    e.image = base / fields[0];
    if (fields.size() > 1 && !fields[1].empty() && fields[1] != "-") e.reference = base / fields[1];
    if (fields.size() > 2 && !fields[2].empty()) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(fields[2], &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != fields[2].size() || !std::isfinite(v)) throw ConfigError(where + ": bad MOS value '" + fields[2] + "'");
      e.mos = v;
    }
    if (fields.size() > 3 && !fields[3].empty()) {
      e.content_id = fields[3];
    } else {
      e.content_id = (e.reference.empty() ? e.image : e.reference).stem().string();
    }
    if ((role == ManifestRole::PairedLol || role == ManifestRole::EnhancedPool) && e.reference.empty()) {
      throw ConfigError(where + ": entry needs a reference image");
    }
    if (role == ManifestRole::LabeledQuality) {
      if (!e.mos) throw ConfigError(where + ": labelled entry needs a MOS");
      if (*e.mos < 0.0 || *e.mos > 1.0) throw ConfigError(where + ": MOS outside [0,1]");
    }
    m.entries.push_back(std::move(e));
  }
  return m;
}

void write_manifest(const std::filesystem::path& path, const Manifest& manifest) {
  const std::filesystem::path base = path.parent_path().empty() ? std::filesystem::path(".") : path.parent_path();
  std::ostringstream out;
  out << "# image\treference\tmos\tcontent_id\n";
  for (const auto& e : manifest.entries) {
    out << relative_to(e.image, base) << '\t' << relative_to(e.reference, base) << '\t';
    if (e.mos) {
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.17g", *e.mos);
      out << buf;
    }
    out << '\t' << e.content_id << '\n';
  }
  nn::write_file_atomic(path, out.str());
}

void require_content_disjoint(const Manifest& a, const Manifest& b) {
  std::set<std::string> ids;
  for (const auto& e : a.entries) ids.insert(e.content_id);
  for (const auto& e : b.entries) {
    if (ids.count(e.content_id)) throw PreconditionError("content id '" + e.content_id + "' appears in both splits");
  }
}

std::vector<PairedImage> load_pairs(const Manifest& manifest) {
  std::vector<PairedImage> out;
  out.reserve(manifest.entries.size());
  for (const auto& e : manifest.entries) {
    if (e.reference.empty()) throw PreconditionError("missing reference for " + e.image.string());
    PairedImage p{load_image(e.image), load_image(e.reference)};
    if (!p.low.same_shape(p.reference)) {
      throw ShapeError("image " + e.image.string() + " and reference " + e.reference.string() + " differ in size");
    }
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<LabeledImage> load_labeled(const Manifest& manifest) {
  std::vector<LabeledImage> out;
  out.reserve(manifest.entries.size());
  for (const auto& e : manifest.entries) {
    if (!e.mos) throw PreconditionError("missing MOS for " + e.image.string());
    out.push_back({load_image(e.image), *e.mos});
  }
  return out;
}

}  // namespace lumina
