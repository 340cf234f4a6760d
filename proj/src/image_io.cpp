#include "lumina/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "lumina/error.hpp"

#ifdef LUMINA_HAVE_PNG
#include <png.h>
#endif

namespace lumina {
namespace {

using Code = ImageFormatError::Code;

class HeaderReader {
 public:
  HeaderReader(const std::vector<unsigned char>& bytes, const std::string& name) : bytes_(bytes), name_(name) {}

  long next_int() {
    skip_space_and_comments();
    if (pos_ >= bytes_.size() || !std::isdigit(bytes_[pos_])) fail("expected a number");
    long v = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      v = v * 10 + (bytes_[pos_++] - '0');
      if (v > 1'000'000'000L) fail("number out of range");
    }
    return v;
  }

  // Exactly one whitespace byte separates maxval from the payload.
  void end_header() {
    if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) fail("missing whitespace after maxval");
    ++pos_;
  }

  std::size_t pos() const { return pos_; }
  void advance(std::size_t n) { pos_ += n; }

  [[noreturn]] void fail(const std::string& msg) const {
    throw ImageFormatError(Code::MalformedHeader, name_ + ": malformed header: " + msg);
  }

 private:
  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  const std::vector<unsigned char>& bytes_;
  const std::string& name_;
  std::size_t pos_ = 0;
};

bool is_png(const std::vector<unsigned char>& bytes) {
  static constexpr unsigned char kMagic[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  return bytes.size() >= 8 && std::equal(kMagic, kMagic + 8, bytes.begin());
}

bool has_png_extension(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext == ".png";
}

std::vector<unsigned char> interleaved_bytes(const Image& img) {
  std::vector<unsigned char> payload;
  payload.reserve(img.size());
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      for (int c = 0; c < img.channels(); ++c) {
        const double v = img.at(c, y, x);
        const double q = std::isfinite(v) ? std::round(std::clamp(v, 0.0, 1.0) * 255.0) : 0.0;
        payload.push_back(static_cast<unsigned char>(q));
      }
  return payload;
}

#ifdef LUMINA_HAVE_PNG
Image decode_png(const std::vector<unsigned char>& bytes, const std::string& name) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&png, bytes.data(), bytes.size())) {
    throw ImageFormatError(Code::MalformedHeader, name + ": " + png.message);
  }
  if (png.format & PNG_FORMAT_FLAG_LINEAR) {
    png_image_free(&png);
    throw ImageFormatError(Code::UnsupportedBitDepth, name + ": only 8-bit PNG is supported");
  }
  const int channels = (png.format & PNG_FORMAT_FLAG_COLOR) ? 3 : 1;
  png.format = channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  std::vector<unsigned char> pixels(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, pixels.data(), 0, nullptr)) {
    const std::string msg = png.message;
    png_image_free(&png);
    throw ImageFormatError(Code::TruncatedPayload, name + ": " + msg);
  }
  Image img(static_cast<int>(png.width), static_cast<int>(png.height), channels);
  const unsigned char* p = pixels.data();
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      for (int c = 0; c < channels; ++c) img.at(c, y, x) = *p++ / 255.0;
  return img;
}

void encode_png(const Image& img, const std::filesystem::path& path) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(img.width());
  png.height = static_cast<png_uint_32>(img.height());
  png.format = img.channels() == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  const auto payload = interleaved_bytes(img);
  if (!png_image_write_to_file(&png, path.c_str(), 0, payload.data(), 0, nullptr)) {
    throw IoError("cannot write image '" + path.string() + "': " + png.message);
  }
}
#endif

}  // namespace

Image load_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image '" + path.string() + "'");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string name = path.string();

  if (is_png(bytes)) {
#ifdef LUMINA_HAVE_PNG
    return decode_png(bytes, name);
#else
    throw ImageFormatError(Code::UnsupportedFormat, name + ": PNG support was not built in");
#endif
  }
  if (bytes.size() < 2 || bytes[0] != 'P') {
    throw ImageFormatError(Code::MalformedHeader, name + ": not a PNM file");
  }
  int channels;
  if (bytes[1] == '6') {
    channels = 3;
  } else if (bytes[1] == '5') {
    channels = 1;
  } else {
    throw ImageFormatError(Code::UnsupportedFormat, name + ": only binary P5/P6 are supported");
  }
  HeaderReader reader(bytes, name);
  reader.advance(2);
  const long width = reader.next_int();
  const long height = reader.next_int();
  const long maxval = reader.next_int();
  if (width <= 0 || height <= 0) reader.fail("non-positive dimensions");
  if (maxval <= 0 || maxval > 65535) reader.fail("maxval out of range");
  if (maxval != 255) {
    throw ImageFormatError(Code::UnsupportedBitDepth,
                           name + ": unsupported bit depth (maxval " + std::to_string(maxval) + ")");
  }
  reader.end_header();

  const std::size_t n = static_cast<std::size_t>(width) * height * channels;
  if (bytes.size() - reader.pos() < n) {
    throw ImageFormatError(Code::TruncatedPayload, name + ": truncated payload");
  }
  Image img(static_cast<int>(width), static_cast<int>(height), channels);
  const unsigned char* p = bytes.data() + reader.pos();
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      for (int c = 0; c < channels; ++c) img.at(c, y, x) = *p++ / 255.0;
  return img;
}

void save_image(const Image& img, const std::filesystem::path& path) {
  if (img.channels() != 1 && img.channels() != 3) throw ShapeError("save_image expects 1 or 3 channels");
  if (has_png_extension(path)) {
#ifdef LUMINA_HAVE_PNG
    encode_png(img, path);
    return;
#else
    throw ImageFormatError(Code::UnsupportedFormat, path.string() + ": PNG support was not built in");
#endif
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write image '" + path.string() + "'");
  out << (img.channels() == 3 ? "P6" : "P5") << '\n' << img.width() << ' ' << img.height() << "\n255\n";
  const auto payload = interleaved_bytes(img);
  out.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
  if (!out) throw IoError("failed writing image '" + path.string() + "'");
}

}  // namespace lumina
