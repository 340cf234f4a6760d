#include "lumina/config.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <vector>

#include "lumina/error.hpp"

namespace lumina {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

struct Binding {
  std::string section;
  std::string key;
  std::function<void(const std::string&)> set;
  std::function<std::string()> get;
};

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& s, const std::string& what) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size() || !std::isfinite(v)) throw ConfigError(what + ": expected a number, got '" + s + "'");
  return v;
}

long long parse_int(const std::string& s, const std::string& what) {
  std::size_t used = 0;
  long long v = 0;
  try {
    v = std::stoll(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size() || s.empty()) throw ConfigError(what + ": expected an integer, got '" + s + "'");
  return v;
}

bool parse_bool(const std::string& s, const std::string& what) {
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw ConfigError(what + ": expected a boolean, got '" + s + "'");
}

std::vector<Binding> bindings(RunConfig& c, const std::filesystem::path& base) {
  std::vector<Binding> b;
  auto dbl = [&](const char* sec, const char* key, double& ref, bool positive) {
    const std::string what = std::string(sec) + "." + key;
    b.push_back({sec, key,
                 [&ref, what, positive](const std::string& v) {
                   ref = parse_double(v, what);
                   if (positive && !(ref > 0.0)) throw ConfigError(what + " must be positive");
                 },
                 [&ref] { return fmt(ref); }});
  };
  auto nonneg = [&](const char* sec, const char* key, double& ref) {
    const std::string what = std::string(sec) + "." + key;
    b.push_back({sec, key,
                 [&ref, what](const std::string& v) {
                   ref = parse_double(v, what);
                   if (ref < 0.0) throw ConfigError(what + " must be >= 0");
                 },
                 [&ref] { return fmt(ref); }});
  };
  auto integer = [&](const char* sec, const char* key, int& ref, int min) {
    const std::string what = std::string(sec) + "." + key;
    b.push_back({sec, key,
                 [&ref, what, min](const std::string& v) {
                   const long long x = parse_int(v, what);
                   if (x < min || x > 1000000000) throw ConfigError(what + " out of range");
                   ref = static_cast<int>(x);
                 },
                 [&ref] { return std::to_string(ref); }});
  };
  auto path = [&](const char* sec, const char* key, std::filesystem::path& ref) {
    b.push_back({sec, key,
                 [&ref, base](const std::string& v) {
                   ref = v.empty() || base.empty() || std::filesystem::path(v).is_absolute() ? std::filesystem::path(v)
                                                                                              : base / v;
                 },
                 [&ref] { return ref.string(); }});
  };
  auto boolean = [&](const char* sec, const char* key, bool& ref) {
    const std::string what = std::string(sec) + "." + key;
    b.push_back({sec, key, [&ref, what](const std::string& v) { ref = parse_bool(v, what); },
                 [&ref] { return std::string(ref ? "true" : "false"); }});
  };

  b.push_back({"run", "seed",
               [&c](const std::string& v) {
                 const long long x = parse_int(v, "run.seed");
                 if (x < 0) throw ConfigError("run.seed must be >= 0");
                 c.seed = static_cast<std::uint64_t>(x);
               },
               [&c] { return std::to_string(c.seed); }});
  path("run", "out", c.out);

  path("data", "lol_manifest", c.lol_manifest);
  path("data", "quality_manifest", c.quality_manifest);

  integer("loop", "max_loops", c.loop.max_loops, 0);
  integer("loop", "final_loop", c.loop.final_loop, 0);
  integer("loop", "end_repeat", c.loop.end_repeat, 0);

  path("fusion", "model", c.fusion_model);

  b.push_back({"backbone", "profile",
               [&c](const std::string& v) {
                 profile_by_name(v);
                 c.backbone_profile = v;
               },
               [&c] { return c.backbone_profile; }});
  path("backbone", "weights", c.backbone_weights);

  boolean("head", "normalize_bilinear", c.head.normalize_bilinear);

  integer("iqa", "batch_size", c.iqa.batch_size, 1);
  dbl("iqa", "learning_rate", c.iqa.learning_rate, true);
  integer("iqa", "epochs", c.iqa.epochs, 0);
  integer("iqa", "finetune_epochs", c.iqa.finetune_epochs, 0);
  integer("iqa", "crop", c.iqa.crop, 1);

  integer("enhancer", "channels", c.enhancer.channels, 1);
  integer("enhancer", "blocks", c.enhancer.blocks, 0);
  b.push_back({"enhancer", "saturation",
               [&c](const std::string& v) {
                 if (v == "logistic") {
                   c.enhancer.saturation = Saturation::Logistic;
                 } else if (v == "identity") {
                   c.enhancer.saturation = Saturation::Identity;
                 } else {
                   throw ConfigError("enhancer.saturation: expected logistic or identity");
                 }
               },
               [&c] { return std::string(c.enhancer.saturation == Saturation::Logistic ? "logistic" : "identity"); }});
  nonneg("enhancer", "tail_init_scale", c.enhancer.tail_init_scale);

  dbl("enhancer_train", "learning_rate", c.enhancer_train.learning_rate, true);
  dbl("enhancer_train", "finetune_lr_scale", c.enhancer_train.finetune_lr_scale, true);
  integer("enhancer_train", "batch_size", c.enhancer_train.batch_size, 1);
  integer("enhancer_train", "pretrain_epochs", c.enhancer_train.pretrain_epochs, 0);
  integer("enhancer_train", "finetune_epochs", c.enhancer_train.finetune_epochs, 0);
  integer("enhancer_train", "crop", c.enhancer_train.crop, 1);

  integer("fidelity", "window", c.fidelity.window, 1);
  dbl("fidelity", "sigma", c.fidelity.sigma, true);
  dbl("fidelity", "c", c.fidelity.c, true);
  nonneg("fidelity", "hue_weight", c.fidelity.hue_weight);
  dbl("fidelity", "gate_exponent", c.fidelity.gate_exponent, true);

  nonneg("joint", "lambda_quality", c.joint.lambda_quality);
  dbl("joint", "q_max", c.joint.q_max, false);

  integer("fsim", "scales", c.fsim.scales, 1);
  integer("fsim", "orientations", c.fsim.orientations, 1);
  dbl("fsim", "min_wavelength", c.fsim.min_wavelength, true);
  dbl("fsim", "mult", c.fsim.mult, true);
  dbl("fsim", "sigma_on_f", c.fsim.sigma_on_f, true);
  dbl("fsim", "d_theta_on_sigma", c.fsim.d_theta_on_sigma, true);
  nonneg("fsim", "noise_k", c.fsim.noise_k);
  dbl("fsim", "epsilon", c.fsim.epsilon, true);
  dbl("fsim", "t1", c.fsim.t1, true);
  dbl("fsim", "t2", c.fsim.t2, true);
  integer("fsim", "min_side", c.fsim.min_side, 8);
  return b;
}

}  // namespace

RunConfig parse_config(const std::string& text, const std::filesystem::path& base_dir) {
  RunConfig cfg;
  auto table = bindings(cfg, base_dir);
  std::set<std::string> sections;
  for (const auto& b : table) sections.insert(b.section);

  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  std::set<std::string> seen;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    const std::string where = "config line " + std::to_string(lineno);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']') throw ConfigError(where + ": malformed section header");
      section = trim(t.substr(1, t.size() - 2));
      if (!sections.count(section)) throw ConfigError(where + ": unknown section [" + section + "]");
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
    if (section.empty()) throw ConfigError(where + ": key outside of a section");
    const std::string key = trim(t.substr(0, eq)), value = trim(t.substr(eq + 1));
    auto it = std::find_if(table.begin(), table.end(),
                           [&](const Binding& b) { return b.section == section && b.key == key; });
    if (it == table.end()) throw ConfigError(where + ": unknown key '" + key + "' in [" + section + "]");
    if (!seen.insert(section + "." + key).second) throw ConfigError(where + ": duplicate key " + section + "." + key);
    it->set(value);
  }
  if (cfg.fidelity.window % 2 == 0) throw ConfigError("fidelity.window must be odd");
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.parent_path());
}

std::string to_ini(const RunConfig& config) {
  RunConfig copy = config;
  const auto table = bindings(copy, {});
  std::ostringstream out;
  out << "# resolved lumina configuration\n";
  std::string section;
  for (const auto& b : table) {
    if (b.section != section) {
      section = b.section;
      out << "\n[" << section << "]\n";
    }
    out << b.key << " = " << b.get() << "\n";
  }
  return out.str();
}

}  // namespace lumina
