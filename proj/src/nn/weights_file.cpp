#include "lumina/nn/weights_file.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <map>
#include <set>

#include "lumina/error.hpp"

namespace lumina::nn {
namespace {

constexpr char kMagic[4] = {'L', 'L', 'W', '1'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

class ByteReader {
 public:
  ByteReader(std::vector<unsigned char> bytes, std::string name) : bytes_(std::move(bytes)), name_(std::move(name)) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_++]) << (8 * i);
    return v;
  }

  std::string string(std::size_t n) {
    need(n);
    std::string s(bytes_.begin() + static_cast<std::ptrdiff_t>(pos_),
                  bytes_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return s;
  }

  bool at_end() const { return pos_ == bytes_.size(); }

  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw IoError(name_ + ": truncated weights file");
  }

 private:
  std::vector<unsigned char> bytes_;
  std::string name_;
  std::size_t pos_ = 0;
};

}  // namespace

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + tmp.string() + "'");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw IoError("failed writing '" + tmp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename '" + tmp.string() + "' to '" + path.string() + "': " + ec.message());
}

std::vector<WeightsEntry> read_weights_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open weights file '" + path.string() + "'");
  ByteReader r(std::vector<unsigned char>((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>()),
               path.string());
  if (r.string(4) != std::string(kMagic, 4)) throw IoError(path.string() + ": bad magic (expected LLW1)");
  const std::uint32_t count = r.u32();
  std::vector<WeightsEntry> entries;
  std::set<std::string> seen;
  for (std::uint32_t e = 0; e < count; ++e) {
    WeightsEntry entry;
    entry.name = r.string(r.u32());
    if (!seen.insert(entry.name).second) throw IoError(path.string() + ": duplicate entry '" + entry.name + "'");
    const std::uint32_t rank = r.u32();
    if (rank > 8) throw IoError(path.string() + ": implausible rank for '" + entry.name + "'");
    std::size_t n = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      const std::uint32_t dim = r.u32();
      if (dim > (1u << 28)) throw IoError(path.string() + ": implausible dimension for '" + entry.name + "'");
      entry.shape.push_back(static_cast<int>(dim));
      n *= dim;
    }
    r.need(4 * n);
    entry.values.resize(n);
    for (std::size_t i = 0; i < n; ++i) entry.values[i] = std::bit_cast<float>(r.u32());
    entries.push_back(std::move(entry));
  }
  if (!r.at_end()) throw IoError(path.string() + ": trailing bytes after last entry");
  return entries;
}

void write_weights_file(const std::filesystem::path& path, const ConstParameterList& params) {
  std::string out(kMagic, 4);
  put_u32(out, static_cast<std::uint32_t>(params.size()));
  std::set<std::string> seen;
  for (const auto& p : params) {
    if (!seen.insert(p.name).second) throw ShapeError("duplicate parameter name '" + p.name + "'");
    put_u32(out, static_cast<std::uint32_t>(p.name.size()));
    out += p.name;
    put_u32(out, static_cast<std::uint32_t>(p.tensor->rank()));
    for (int d : p.tensor->shape()) put_u32(out, static_cast<std::uint32_t>(d));
    for (double v : p.tensor->values()) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
  write_file_atomic(path, out);
}

void load_weights_into(const std::filesystem::path& path, const ParameterList& params) {
  std::vector<WeightsEntry> entries = read_weights_file(path);
  std::map<std::string, const WeightsEntry*> by_name;
  for (const auto& e : entries) by_name[e.name] = &e;
  if (entries.size() != params.size()) {
    throw ShapeError(path.string() + ": file has " + std::to_string(entries.size()) + " entries, model expects " +
                     std::to_string(params.size()));
  }
  for (const auto& p : params) {
    auto it = by_name.find(p.name);
    if (it == by_name.end()) throw ShapeError(path.string() + ": missing entry '" + p.name + "'");
    if (it->second->shape != p.tensor->shape()) {
      throw ShapeError(path.string() + ": shape mismatch for '" + p.name + "'");
    }
  }
  for (const auto& p : params) {
    const auto& src = by_name[p.name]->values;
    for (std::size_t i = 0; i < src.size(); ++i) (*p.tensor)[i] = static_cast<double>(src[i]);
  }
}

}  // namespace lumina::nn
