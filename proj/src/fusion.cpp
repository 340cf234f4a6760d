#include "lumina/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include <Eigen/Dense>

#include "lumina/error.hpp"
#include "lumina/nn/weights_file.hpp"

namespace lumina {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

FusionModel FusionModel::published_default() {
  FusionModel m;
  m.lambda = {-1.8041, 2.6152, -0.2776, 0.2563};
  m.norm_lo = 0.0;
  m.norm_hi = 1.0;
  m.provenance = "published default (calibrated on other metric implementations)";
  return m;
}

double FusionModel::raw(const MetricTriple& t) const {
  return lambda[0] + lambda[1] * t.fsim + lambda[2] * t.iwssim + lambda[3] * t.deepsim;
}

FusionModel fit_fusion(const LabeledScoreSet& data, double ridge) {
  const auto n = static_cast<Eigen::Index>(data.rows.size());
  if (n < 5) throw PreconditionError("fit_fusion: need at least 5 rows, got " + std::to_string(n));
  if (!(ridge >= 0.0) || !std::isfinite(ridge)) throw PreconditionError("fit_fusion: ridge must be >= 0");

  // Ridge rows are appended to the design so the solve stays a least-squares QR.
  const Eigen::Index extra = ridge > 0.0 ? 3 : 0;
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(n + extra, 4);
  Eigen::VectorXd y = Eigen::VectorXd::Zero(n + extra);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& row = data.rows[static_cast<std::size_t>(i)];
    const double v[5] = {row.triple.fsim, row.triple.iwssim, row.triple.deepsim, row.mos, 0.0};
    for (int k = 0; k < 4; ++k)
      if (!std::isfinite(v[k])) throw PreconditionError("fit_fusion: non-finite entry in row " + std::to_string(i));
    x(i, 0) = 1.0;
    x(i, 1) = v[0];
    x(i, 2) = v[1];
    x(i, 3) = v[2];
    y(i) = v[3];
  }
  for (Eigen::Index k = 0; k < extra; ++k) x(n + k, k + 1) = std::sqrt(ridge);

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
  qr.setThreshold(1e-10);
  if (qr.rank() < 4) throw PreconditionError("fit_fusion: singular normal matrix (constant or collinear metric columns)");
  const Eigen::VectorXd beta = qr.solve(y);

  FusionModel m;
  for (int k = 0; k < 4; ++k) m.lambda[static_cast<std::size_t>(k)] = beta(k);
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& row : data.rows) {
    const double r = m.raw(row.triple);
    lo = std::min(lo, r);
    hi = std::max(hi, r);
  }
  if (!(hi - lo > 1e-12)) {
    // Constant fitted output: centre it in the unit interval.
    lo -= 0.5;
    hi += 0.5;
  }
  m.norm_lo = lo;
  m.norm_hi = hi;
  m.provenance = "fitted on " + std::to_string(n) + " rows (" + data.provenance + " labels), ridge " +
                 format_double(ridge);
  return m;
}

FusionModel fit_fusion_with_fallback(const LabeledScoreSet& data, double ridge) {
  try {
    return fit_fusion(data, ridge);
  } catch (const PreconditionError&) {
    if (ridge > 0.0 || data.rows.size() < 5) throw;
    return fit_fusion(data, 1e-8);
  }
}

double apply_fusion(const FusionModel& model, const MetricTriple& t) {
  const double v = (model.raw(t) - model.norm_lo) / (model.norm_hi - model.norm_lo);
  return std::clamp(v, 0.0, 1.0);
}

double plcc(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("plcc: lengths differ");
  if (a.size() < 3) throw PreconditionError("plcc: need at least 3 items");
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (!(saa > 0.0) || !(sbb > 0.0)) throw PreconditionError("plcc: zero variance");
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return v[i] < v[j]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

double srcc(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("srcc: lengths differ");
  if (a.size() < 3) throw PreconditionError("srcc: need at least 3 items");
  const auto ra = average_ranks(a), rb = average_ranks(b);
  return plcc(ra, rb);
}

void save_fusion(const FusionModel& model, const std::filesystem::path& path) {
  std::ostringstream out;
  out << "# lumina fusion model\n";
  out << "provenance = " << model.provenance << "\n";
  for (int k = 0; k < 4; ++k) out << "lambda" << k + 1 << " = " << format_double(model.lambda[static_cast<std::size_t>(k)]) << "\n";
  out << "norm_lo = " << format_double(model.norm_lo) << "\n";
  out << "norm_hi = " << format_double(model.norm_hi) << "\n";
  nn::write_file_atomic(path, out.str());
}

FusionModel load_fusion(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open fusion model " + path.string());
  std::map<std::string, std::string> kv;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": expected key = value");
    kv[trim(t.substr(0, eq))] = trim(t.substr(eq + 1));
  }
  FusionModel m;
  auto number = [&](const std::string& key) {
    const auto it = kv.find(key);
    if (it == kv.end()) throw ConfigError(path.string() + ": missing " + key);
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(it->second, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != it->second.size() || !std::isfinite(v)) throw ConfigError(path.string() + ": bad number for " + key);
    return v;
  };
  for (int k = 0; k < 4; ++k) m.lambda[static_cast<std::size_t>(k)] = number("lambda" + std::to_string(k + 1));
  m.norm_lo = number("norm_lo");
  m.norm_hi = number("norm_hi");
  if (!(m.norm_hi > m.norm_lo)) throw ConfigError(path.string() + ": norm_hi must exceed norm_lo");
  if (auto it = kv.find("provenance"); it != kv.end()) m.provenance = it->second;
  for (const auto& [key, value] : kv) {
    if (key != "provenance" && key != "norm_lo" && key != "norm_hi" && key.rfind("lambda", 0) != 0)
      throw ConfigError(path.string() + ": unknown key " + key);
  }
  return m;
}

}  // namespace lumina
