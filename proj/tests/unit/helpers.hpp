#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "lumina/image.hpp"
#include "lumina/random.hpp"
#include "lumina/synth.hpp"

namespace testing {

inline lumina::Image random_image(int w, int h, int c, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
  lumina::Rng rng(seed);
  lumina::Image img(w, h, c);
  for (double& v : img.data()) v = rng.uniform(lo, hi);
  return img;
}

/// Natural-looking test scene shared by the metric tests.
inline lumina::Image fixture(int size = 64, std::uint64_t seed = 3) { return lumina::synth_reference(seed, size); }

inline lumina::Image add_noise(const lumina::Image& img, double sigma, std::uint64_t seed) {
  lumina::Rng rng(seed);
  lumina::Image out = img;
  for (double& v : out.data()) v += sigma * rng.normal();
  return out;
}

/// Fresh, empty directory under the build tree (or the system temp dir).
inline std::filesystem::path temp_dir(const std::string& name) {
  const char* base = std::getenv("LUMINA_TEST_TMP");
  const std::filesystem::path root = base ? std::filesystem::path(base) : std::filesystem::temp_directory_path() / "lumina_tests";
  const auto dir = root / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  out << s;
}

inline double max_abs_diff(const lumina::Image& a, const lumina::Image& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

}  // namespace testing
